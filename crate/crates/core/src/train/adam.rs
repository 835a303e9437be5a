//! Adam with bias-corrected moment estimates.

use crate::autodiff::Gradients;
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// First/second moments for one flat parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Real> Moments<T> {
    pub fn zeros(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
        }
    }
}

/// Applies one Adam update to `param` in place. `step` is the 1-based
/// index of this update.
pub fn adam_update<T: Real>(
    param: &mut [T],
    grad: &[T],
    moments: &mut Moments<T>,
    step: u64,
    cfg: &AdamConfig,
) -> Result<()> {
    if param.len() != grad.len() || param.len() != moments.m.len() || param.len() != moments.v.len()
    {
        return Err(Error::Shape(format!(
            "adam: parameter has {} values, gradient {}, moments {}/{}",
            param.len(),
            grad.len(),
            moments.m.len(),
            moments.v.len()
        )));
    }
    if step == 0 {
        return Err(Error::Usage("adam step index starts at 1".into()));
    }
    let b1 = T::from_f64_lossy(cfg.beta1);
    let b2 = T::from_f64_lossy(cfg.beta2);
    let eps = T::from_f64_lossy(cfg.epsilon);
    let lr = T::from_f64_lossy(cfg.learning_rate);
    let exp = i32::try_from(step).unwrap_or(i32::MAX);
    let c1 = T::from_f64_lossy(1.0 - cfg.beta1.powi(exp));
    let c2 = T::from_f64_lossy(1.0 - cfg.beta2.powi(exp));
    for (((p, &g), m), v) in param
        .iter_mut()
        .zip(grad)
        .zip(moments.m.iter_mut())
        .zip(moments.v.iter_mut())
    {
        *m = b1 * *m + (T::one() - b1) * g;
        *v = b2 * *v + (T::one() - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Optimizer state for every tensor of a [`ParamStore`], indexed like it.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub moments: Vec<Moments<T>>,
    /// Number of updates applied so far.
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        Self {
            moments: params
                .iter()
                .map(|(_, _, t)| Moments::zeros(t.len()))
                .collect(),
            step: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub state: AdamState<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Self {
        Self {
            config,
            state: AdamState::new(params),
        }
    }

    pub fn from_state(config: AdamConfig, state: AdamState<T>) -> Self {
        Self { config, state }
    }

    /// Update every parameter. Parameters absent from `grads` are treated
    /// as having zero gradient; their moments still decay.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &Gradients<T>) -> Result<()> {
        if self.state.moments.len() != params.len() {
            return Err(Error::Shape(format!(
                "adam state tracks {} tensors, store has {}",
                self.state.moments.len(),
                params.len()
            )));
        }
        let step = self.state.step + 1;
        let ids: Vec<_> = params.ids().collect();
        let mut zeros = Vec::new();
        for id in ids {
            let param = params.get_mut(id);
            let grad = match grads.param(id) {
                Some(g) => g.data(),
                None => {
                    zeros.clear();
                    zeros.resize(param.len(), T::zero());
                    &zeros[..]
                }
            };
            adam_update(
                param.data_mut(),
                grad,
                &mut self.state.moments[id.index()],
                step,
                &self.config,
            )?;
        }
        self.state.step = step;
        Ok(())
    }
}
