//! Voxel-overlap rates.

use super::conventions::Conventions;
use super::regions::Mask;
use crate::error::{Error, Result};

/// Confusion-matrix counts of `pred` against `truth`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

pub fn confusion(pred: &Mask, truth: &Mask) -> Result<Confusion> {
    if pred.dims() != truth.dims() {
        return Err(Error::Shape(format!(
            "prediction is {:?}, truth is {:?}",
            pred.dims(),
            truth.dims()
        )));
    }
    let mut c = Confusion::default();
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

impl Confusion {
    pub fn dice(&self, conv: &Conventions) -> f64 {
        let pred = self.tp + self.fp;
        let truth = self.tp + self.fn_;
        match (pred, truth) {
            (0, 0) => conv.dice_both_empty,
            (0, _) | (_, 0) => conv.dice_one_empty,
            _ => 2.0 * self.tp as f64 / (pred + truth) as f64,
        }
    }

    pub fn sensitivity(&self, conv: &Conventions) -> f64 {
        let positives = self.tp + self.fn_;
        if positives == 0 {
            conv.sensitivity_empty_truth
        } else {
            self.tp as f64 / positives as f64
        }
    }

    pub fn specificity(&self, conv: &Conventions) -> f64 {
        let negatives = self.tn + self.fp;
        if negatives == 0 {
            conv.specificity_full_truth
        } else {
            self.tn as f64 / negatives as f64
        }
    }
}

pub fn dice(a: &Mask, b: &Mask) -> Result<f64> {
    Ok(confusion(a, b)?.dice(&Conventions::default()))
}

pub fn sensitivity(pred: &Mask, truth: &Mask) -> Result<f64> {
    Ok(confusion(pred, truth)?.sensitivity(&Conventions::default()))
}

pub fn specificity(pred: &Mask, truth: &Mask) -> Result<f64> {
    Ok(confusion(pred, truth)?.specificity(&Conventions::default()))
}
