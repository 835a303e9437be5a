//! Conversion of 8-bit slices into network inputs and class maps.

use crate::data::{label_to_class, SliceSample, SLICE_CHANNELS};
use crate::error::{Error, Result};
use crate::ops::ClassMap;
use crate::tensor::{Real, Shape4, Tensor4};

/// Stored intensities are divided by this before entering the network.
pub const INPUT_SCALE: f64 = 255.0;

/// One training example: a `(1, c, h, w)` image and `h * w` class indices.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSlice<T> {
    pub image: Tensor4<T>,
    pub classes: Vec<usize>,
}

impl<T: Real> LabeledSlice<T> {
    pub fn new(image: Tensor4<T>, classes: Vec<usize>) -> Result<Self> {
        let s = image.shape();
        if s.n != 1 || classes.len() != s.h * s.w {
            return Err(Error::Shape(format!(
                "labelled slice needs a (1, c, h, w) image and h*w classes, got {s} and {}",
                classes.len()
            )));
        }
        Ok(Self { image, classes })
    }

    /// Requires a label plane; external labels become class indices.
    pub fn from_sample(sample: &SliceSample) -> Result<Self> {
        let label = sample.label.as_ref().ok_or_else(|| {
            Error::Data(format!(
                "{} slice {} has no label mask",
                sample.subject_id, sample.slice_index
            ))
        })?;
        let mut classes = Vec::with_capacity(label.len());
        for (i, &l) in label.iter().enumerate() {
            classes.push(label_to_class(l).ok_or_else(|| {
                Error::Data(format!(
                    "{} slice {}: pixel (y={}, x={}) has label {l}",
                    sample.subject_id,
                    sample.slice_index,
                    i / sample.width,
                    i % sample.width
                ))
            })?);
        }
        Self::new(sample_tensor(sample)?, classes)
    }

    pub fn height(&self) -> usize {
        self.image.shape().h
    }

    pub fn width(&self) -> usize {
        self.image.shape().w
    }
}

/// `(1, 4, h, w)` input tensor of a slice, scaled into `[0, 1]`.
pub fn sample_tensor<T: Real>(sample: &SliceSample) -> Result<Tensor4<T>> {
    sample.validate()?;
    let scale = T::from_f64_lossy(INPUT_SCALE);
    let data = sample
        .image
        .iter()
        .map(|&v| T::from_f64_lossy(f64::from(v)) / scale)
        .collect();
    Tensor4::from_vec(
        Shape4::new(1, SLICE_CHANNELS, sample.height, sample.width),
        data,
    )
}

/// Stacks the selected examples into one batch.
pub fn make_batch<T: Real>(
    data: &[LabeledSlice<T>],
    indices: &[usize],
) -> Result<(Tensor4<T>, ClassMap)> {
    let first = data
        .get(
            *indices
                .first()
                .ok_or_else(|| Error::Usage("empty batch".into()))?,
        )
        .ok_or_else(|| Error::Usage("batch index out of range".into()))?;
    let (h, w) = (first.height(), first.width());
    let images: Vec<&Tensor4<T>> = indices.iter().map(|&i| &data[i].image).collect();
    let batch = Tensor4::stack(&images)?;
    let mut classes = Vec::with_capacity(indices.len() * h * w);
    for &i in indices {
        classes.extend_from_slice(&data[i].classes);
    }
    Ok((batch, ClassMap::new(indices.len(), h, w, classes)?))
}
