//! Per-channel batch normalization.

use super::Mode;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor4};

pub const BN_EPSILON: f64 = 1e-3;
pub const BN_MOMENTUM: f64 = 0.99;

/// Affine parameters plus running statistics of one normalization layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormParams<T = f32> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub epsilon: T,
    pub momentum: T,
}

impl<T: Real> BatchNormParams<T> {
    /// gamma = 1, beta = 0, running mean 0 and variance 1.
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            epsilon: T::from_f64_lossy(BN_EPSILON),
            momentum: T::from_f64_lossy(BN_MOMENTUM),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// Biased per-channel statistics of one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// Result of a train-mode forward pass, with what backward needs.
pub struct NormForward<T> {
    pub output: Tensor4<T>,
    pub normalized: Tensor4<T>,
    pub inv_std: Vec<T>,
    pub stats: BatchStats<T>,
}

fn check_channels<T: Real>(x: &Tensor4<T>, channels: usize) -> Result<()> {
    if x.shape().c != channels {
        return Err(Error::shape(format!(
            "batch norm over {channels} channels applied to {}",
            x.shape()
        )));
    }
    Ok(())
}

pub fn batch_stats<T: Real>(x: &Tensor4<T>) -> BatchStats<T> {
    let s = x.shape();
    let plane = s.plane();
    let count = T::from_usize(s.n * plane).expect("count fits");
    let mut mean = vec![T::zero(); s.c];
    let mut var = vec![T::zero(); s.c];
    for n in 0..s.n {
        for (c, chunk) in x.item(n).chunks(plane).enumerate() {
            mean[c] += chunk.iter().copied().sum::<T>();
        }
    }
    for m in &mut mean {
        *m /= count;
    }
    for n in 0..s.n {
        for (c, chunk) in x.item(n).chunks(plane).enumerate() {
            let mu = mean[c];
            var[c] += chunk.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>();
        }
    }
    for v in &mut var {
        *v /= count;
    }
    BatchStats { mean, var }
}

fn affine<T: Real>(x: &Tensor4<T>, scale: &[T], shift: &[T]) -> Tensor4<T> {
    let s = x.shape();
    let plane = s.plane();
    let mut out = x.clone();
    for n in 0..s.n {
        for (c, chunk) in out.item_mut(n).chunks_mut(plane).enumerate() {
            for v in chunk {
                *v = *v * scale[c] + shift[c];
            }
        }
    }
    out
}

pub fn batch_norm_train<T: Real>(
    x: &Tensor4<T>,
    gamma: &[T],
    beta: &[T],
    epsilon: T,
) -> Result<NormForward<T>> {
    check_channels(x, gamma.len())?;
    let stats = batch_stats(x);
    let inv_std: Vec<T> = stats
        .var
        .iter()
        .map(|&v| T::one() / (v + epsilon).sqrt())
        .collect();
    let shift: Vec<T> = stats
        .mean
        .iter()
        .zip(&inv_std)
        .map(|(&m, &is)| -m * is)
        .collect();
    let normalized = affine(x, &inv_std, &shift);
    let output = affine(&normalized, gamma, beta);
    Ok(NormForward {
        output,
        normalized,
        inv_std,
        stats,
    })
}

pub fn batch_norm_infer<T: Real>(x: &Tensor4<T>, p: &BatchNormParams<T>) -> Result<Tensor4<T>> {
    normalize_with(
        x,
        &p.gamma,
        &p.beta,
        &p.running_mean,
        &p.running_var,
        p.epsilon,
    )
}

/// Normalize with fixed statistics: `gamma * (x - mean) / sqrt(var + eps) + beta`.
pub fn normalize_with<T: Real>(
    x: &Tensor4<T>,
    gamma: &[T],
    beta: &[T],
    mean: &[T],
    var: &[T],
    epsilon: T,
) -> Result<Tensor4<T>> {
    check_channels(x, gamma.len())?;
    let scale: Vec<T> = gamma
        .iter()
        .zip(var)
        .map(|(&g, &v)| g / (v + epsilon).sqrt())
        .collect();
    let shift: Vec<T> = (0..gamma.len())
        .map(|c| beta[c] - mean[c] * scale[c])
        .collect();
    Ok(affine(x, &scale, &shift))
}

/// Exponential moving average: `running = momentum * running + (1 - momentum) * batch`.
pub fn update_running_stats<T: Real>(p: &mut BatchNormParams<T>, stats: &BatchStats<T>) {
    let keep = p.momentum;
    let take = T::one() - keep;
    for (r, &b) in p.running_mean.iter_mut().zip(&stats.mean) {
        *r = keep * *r + take * b;
    }
    for (r, &b) in p.running_var.iter_mut().zip(&stats.var) {
        *r = keep * *r + take * b;
    }
}

/// Train or infer mode in one call; train mode also updates the running
/// statistics held in `p`.
pub fn batch_norm<T: Real>(
    x: &Tensor4<T>,
    p: &mut BatchNormParams<T>,
    mode: Mode,
) -> Result<Tensor4<T>> {
    match mode {
        Mode::Infer => batch_norm_infer(x, p),
        Mode::Train => {
            let fwd = batch_norm_train(x, &p.gamma, &p.beta, p.epsilon)?;
            update_running_stats(p, &fwd.stats);
            Ok(fwd.output)
        }
    }
}

pub struct NormGrads<T> {
    pub input: Tensor4<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

pub fn batch_norm_backward<T: Real>(
    grad_out: &Tensor4<T>,
    normalized: &Tensor4<T>,
    inv_std: &[T],
    gamma: &[T],
) -> Result<NormGrads<T>> {
    grad_out.expect_same_shape(normalized, "batch norm backward")?;
    let s = grad_out.shape();
    let plane = s.plane();
    let count = T::from_usize(s.n * plane).expect("count fits");
    let mut dgamma = vec![T::zero(); s.c];
    let mut dbeta = vec![T::zero(); s.c];
    for n in 0..s.n {
        let dy = grad_out.item(n).chunks(plane);
        let xh = normalized.item(n).chunks(plane);
        for (c, (dy, xh)) in dy.zip(xh).enumerate() {
            for (&g, &v) in dy.iter().zip(xh) {
                dbeta[c] += g;
                dgamma[c] += g * v;
            }
        }
    }
    let mut dx = Tensor4::zeros(s);
    for n in 0..s.n {
        let dst = dx.item_mut(n);
        let dy = grad_out.item(n);
        let xh = normalized.item(n);
        for c in 0..s.c {
            let k = gamma[c] * inv_std[c] / count;
            let range = c * plane..(c + 1) * plane;
            for ((d, &g), &v) in dst[range.clone()]
                .iter_mut()
                .zip(&dy[range.clone()])
                .zip(&xh[range])
            {
                *d = k * (count * g - dbeta[c] - v * dgamma[c]);
            }
        }
    }
    Ok(NormGrads {
        input: dx,
        gamma: dgamma,
        beta: dbeta,
    })
}
