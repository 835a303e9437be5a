//! Sparse categorical cross-entropy over per-pixel class labels.

use crate::autodiff::{Op, Tape, Var};
use crate::error::{Error, Result};
use crate::ops::{softmax_channels, ClassMap};
use crate::tensor::{Real, Tensor4};

/// Smallest probability fed to the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

fn check_labels<T: Real>(logits: &Tensor4<T>, labels: &ClassMap) -> Result<()> {
    let s = logits.shape();
    if (labels.n, labels.h, labels.w) != (s.n, s.h, s.w) {
        return Err(Error::shape(format!(
            "labels {}x{}x{} do not match logits {s}",
            labels.n, labels.h, labels.w
        )));
    }
    if let Some(pos) = labels.data.iter().position(|&l| l >= s.c) {
        let plane = s.h * s.w;
        let (n, rest) = (pos / plane, pos % plane);
        return Err(Error::Data(format!(
            "label {} at pixel (n={n}, y={}, x={}) outside 0..{}",
            labels.data[pos],
            rest / s.w,
            rest % s.w,
            s.c
        )));
    }
    Ok(())
}

struct CeForward<T> {
    loss: T,
    probs: Tensor4<T>,
    clamped: Vec<bool>,
}

fn ce_forward<T: Real>(logits: &Tensor4<T>, labels: &ClassMap) -> Result<CeForward<T>> {
    check_labels(logits, labels)?;
    let s = logits.shape();
    let plane = s.plane();
    let probs = softmax_channels(logits);
    let floor = T::from_f64_lossy(PROB_FLOOR.ln());
    let mut clamped = Vec::with_capacity(labels.data.len());
    let mut total = T::zero();
    for n in 0..s.n {
        let item = logits.item(n);
        for (p, &label) in labels.item(n).iter().enumerate() {
            // log-softmax of the labelled channel
            let mut max = T::neg_infinity();
            for c in 0..s.c {
                max = max.max(item[c * plane + p]);
            }
            let mut denom = T::zero();
            for c in 0..s.c {
                denom += (item[c * plane + p] - max).exp();
            }
            let log_p = item[label * plane + p] - max - denom.ln();
            let hit_floor = log_p < floor;
            clamped.push(hit_floor);
            total -= if hit_floor { floor } else { log_p };
        }
    }
    let count = T::from_usize(labels.data.len()).expect("pixel count fits");
    Ok(CeForward {
        loss: total / count,
        probs,
        clamped,
    })
}

/// Mean over all pixels of `-log softmax(logits)[label]`.
pub fn sparse_ce_loss<T: Real>(logits: &Tensor4<T>, labels: &ClassMap) -> Result<T> {
    Ok(ce_forward(logits, labels)?.loss)
}

/// `scale * (p - onehot(label)) / N`, zero where the floor was active.
pub(crate) fn sparse_ce_grad<T: Real>(
    probs: &Tensor4<T>,
    labels: &[usize],
    clamped: &[bool],
    scale: T,
) -> Tensor4<T> {
    let s = probs.shape();
    let plane = s.plane();
    let k = scale / T::from_usize(labels.len()).expect("pixel count fits");
    let mut dx = probs.map(|p| p * k);
    for n in 0..s.n {
        let item = dx.item_mut(n);
        for p in 0..plane {
            let idx = n * plane + p;
            if clamped[idx] {
                for c in 0..s.c {
                    item[c * plane + p] = T::zero();
                }
            } else {
                item[labels[idx] * plane + p] -= k;
            }
        }
    }
    dx
}

impl<T: Real> Tape<T> {
    /// Record the cross-entropy of `logits` against `labels` as a scalar node.
    pub fn sparse_ce(&mut self, logits: Var, labels: &ClassMap) -> Result<Var> {
        let fwd = ce_forward(self.value(logits), labels)?;
        Ok(self.push(
            Tensor4::scalar(fwd.loss),
            Op::SparseCe {
                logits,
                probs: fwd.probs,
                labels: labels.data.clone(),
                clamped: fwd.clamped,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_two_class_prediction_costs_ln_two() {
        let logits = Tensor4::<f64>::zeros([1, 2, 1, 1]);
        let labels = ClassMap::new(1, 1, 1, vec![0]).unwrap();
        let loss = sparse_ce_loss(&logits, &labels).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_prediction_costs_nothing() {
        let logits = Tensor4::<f64>::from_fn(
            [1, 3, 2, 2],
            |[_, c, _, _]| if c == 1 { 200.0 } else { 0.0 },
        );
        let labels = ClassMap::new(1, 2, 2, vec![1; 4]).unwrap();
        assert_eq!(sparse_ce_loss(&logits, &labels).unwrap(), 0.0);
    }

    #[test]
    fn floor_bounds_the_loss() {
        let logits = Tensor4::<f64>::from_fn(
            [1, 2, 1, 1],
            |[_, c, _, _]| if c == 0 { 500.0 } else { 0.0 },
        );
        let labels = ClassMap::new(1, 1, 1, vec![1]).unwrap();
        let loss = sparse_ce_loss(&logits, &labels).unwrap();
        assert!((loss - (-PROB_FLOOR.ln())).abs() < 1e-9);
    }

    #[test]
    fn out_of_range_label_names_the_pixel() {
        let logits = Tensor4::<f32>::zeros([1, 4, 2, 3]);
        let mut data = vec![0; 6];
        data[4] = 4;
        let labels = ClassMap::new(1, 2, 3, data).unwrap();
        let err = sparse_ce_loss(&logits, &labels).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
        assert!(err.to_string().contains("y=1, x=1"), "{err}");
    }
}
