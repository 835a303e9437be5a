//! Slice-wise inference and volume reassembly.

use super::dataset::sample_tensor;
use crate::data::{class_to_label, SliceSample, Volume};
use crate::error::{Error, Result};
use crate::model::DrUnet104;
use crate::ops::{argmax_channels, ClassMap};
use crate::tensor::{Real, Tensor4};

/// Infer-mode class maps for `(1, c, h, w)` slices, evaluated in batches.
pub fn predict_classes<T: Real>(
    model: &DrUnet104<T>,
    slices: &[Tensor4<T>],
    batch_size: usize,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let Some(first) = slices.first() else {
        return Ok(Vec::new());
    };
    let s0 = first.shape();
    for (i, s) in slices.iter().enumerate() {
        if s.shape() != s0 || s0.n != 1 {
            return Err(Error::Shape(format!(
                "slice {i} has shape {}, expected (1, {}, {}, {})",
                s.shape(),
                s0.c,
                s0.h,
                s0.w
            )));
        }
    }
    let mut out = Vec::with_capacity(slices.len());
    for chunk in slices.chunks(batch_size) {
        let refs: Vec<&Tensor4<T>> = chunk.iter().collect();
        let logits = model.forward_infer(&Tensor4::stack(&refs)?)?;
        let ClassMap { h, w, data, .. } = argmax_channels(&logits);
        out.extend(data.chunks_exact(h * w).map(<[usize]>::to_vec));
    }
    Ok(out)
}

/// Predicts every slice, stacks along the slice axis and maps classes
/// back to the external labels {0, 1, 2, 4}.
pub fn predict_volume<T: Real>(
    model: &DrUnet104<T>,
    slices: &[Tensor4<T>],
    batch_size: usize,
) -> Result<Volume<u8>> {
    let first = slices
        .first()
        .ok_or_else(|| Error::Data("no slices to predict".into()))?;
    let (h, w) = (first.shape().h, first.shape().w);
    let classes = predict_classes(model, slices, batch_size)?;
    let mut data = Vec::with_capacity(slices.len() * h * w);
    for c in classes.iter().flatten() {
        data.push(class_to_label(*c).ok_or_else(|| {
            Error::Config(format!(
                "model predicts class {c}, which has no external label"
            ))
        })?);
    }
    Volume::from_vec((slices.len(), h, w), data)
}

/// [`predict_volume`] over stored slices, which must be numbered
/// `0..S` in order.
pub fn predict_subject<T: Real>(
    model: &DrUnet104<T>,
    slices: &[SliceSample],
    batch_size: usize,
) -> Result<Volume<u8>> {
    for (expected, s) in slices.iter().enumerate() {
        if s.slice_index != expected {
            return Err(if s.slice_index > expected {
                Error::Gap { index: expected }
            } else {
                Error::Data(format!("slice index {} is out of order", s.slice_index))
            });
        }
    }
    let tensors = slices
        .iter()
        .map(sample_tensor)
        .collect::<Result<Vec<Tensor4<T>>>>()?;
    predict_volume(model, &tensors, batch_size)
}
