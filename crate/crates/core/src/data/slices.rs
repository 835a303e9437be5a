//! Axial slicing of normalized stacks and reassembly of label slices.

use super::normalize::{compute_norm_stats, normalize_volume, NormalizationStats};
use super::volume::{describe_positions, label_to_class, Modality, Volume, VolumeStack};
use crate::error::{Error, Result};

pub const SLICE_CHANNELS: usize = 4;

/// One axial slice: four 8-bit modality planes and optional labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SliceSample {
    pub subject_id: String,
    pub slice_index: usize,
    pub height: usize,
    pub width: usize,
    /// Channel-major `(4, height, width)`, channels in [`Modality::ALL`] order.
    pub image: Vec<u8>,
    /// `(height, width)` external labels in {0, 1, 2, 4}.
    pub label: Option<Vec<u8>>,
}

impl SliceSample {
    pub fn channel(&self, c: usize) -> &[u8] {
        let n = self.height * self.width;
        &self.image[c * n..(c + 1) * n]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.height * self.width;
        if n == 0 || self.image.len() != SLICE_CHANNELS * n {
            return Err(Error::Shape(format!(
                "{} slice {}: image has {} values for {}x{}x{}",
                self.subject_id,
                self.slice_index,
                self.image.len(),
                SLICE_CHANNELS,
                self.height,
                self.width
            )));
        }
        if let Some(label) = &self.label {
            if label.len() != n {
                return Err(Error::Shape(format!(
                    "{} slice {}: label has {} values for {}x{}",
                    self.subject_id,
                    self.slice_index,
                    label.len(),
                    self.height,
                    self.width
                )));
            }
            validate_label_plane(
                label,
                self.width,
                &format!("{} slice {}", self.subject_id, self.slice_index),
            )?;
        }
        Ok(())
    }
}

/// Rejects label values outside {0, 1, 2, 4}, listing the offending
/// pixels as `(0, y, x)`.
pub fn validate_label_plane(label: &[u8], width: usize, what: &str) -> Result<()> {
    let bad: Vec<usize> = label
        .iter()
        .enumerate()
        .filter(|(_, &v)| label_to_class(v).is_none())
        .map(|(i, _)| i)
        .collect();
    if bad.is_empty() {
        return Ok(());
    }
    let positions: Vec<_> = bad.iter().map(|&i| (0, i / width, i % width)).collect();
    let msg = describe_positions("pixels", &positions, |k| label[bad[k]]);
    Err(Error::Data(format!("{what}: {msg}")))
}

/// A stack after intensity standardization.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedStack {
    pub subject_id: String,
    pub modalities: [Volume<u8>; 4],
    pub labels: Option<Volume<u8>>,
    /// Per modality, in channel order.
    pub stats: [NormalizationStats; 4],
}

pub fn normalize_stack(stack: &VolumeStack) -> Result<NormalizedStack> {
    stack.validate()?;
    let mut stats = Vec::with_capacity(4);
    let mut modalities = Vec::with_capacity(4);
    for m in Modality::ALL {
        let s = compute_norm_stats(stack.modality(m))
            .map_err(|e| Error::Degenerate(format!("{} {m}: {e}", stack.subject_id)))?;
        modalities.push(normalize_volume(stack.modality(m), &s)?);
        stats.push(s);
    }
    Ok(NormalizedStack {
        subject_id: stack.subject_id.clone(),
        modalities: modalities.try_into().expect("four modalities"),
        labels: stack.labels.clone(),
        stats: stats.try_into().expect("four modalities"),
    })
}

/// Axial slices in index order.
pub fn volume_to_slices(stack: &NormalizedStack) -> Vec<SliceSample> {
    let (depth, height, width) = stack.modalities[0].dims();
    (0..depth)
        .map(|z| {
            let mut image = Vec::with_capacity(SLICE_CHANNELS * height * width);
            for m in &stack.modalities {
                image.extend_from_slice(m.plane(z));
            }
            SliceSample {
                subject_id: stack.subject_id.clone(),
                slice_index: z,
                height,
                width,
                image,
                label: stack.labels.as_ref().map(|l| l.plane(z).to_vec()),
            }
        })
        .collect()
}

/// Inverse of [`volume_to_slices`]: the four 8-bit modality volumes and,
/// when every slice carries one, the label volume.
pub fn stack_slices(slices: &[SliceSample]) -> Result<([Volume<u8>; 4], Option<Volume<u8>>)> {
    let first = slices
        .first()
        .ok_or_else(|| Error::Data("no slices to stack".into()))?;
    let (h, w) = (first.height, first.width);
    let ordered = order_slices(slices.iter().map(|s| (s.slice_index, s)))?;
    for s in &ordered {
        s.validate()?;
        if (s.height, s.width) != (h, w) {
            return Err(Error::Shape(format!(
                "slice {} is {}x{}, slice {} is {h}x{w}",
                s.slice_index, s.height, s.width, first.slice_index
            )));
        }
    }
    let mut mods = Vec::with_capacity(SLICE_CHANNELS);
    for c in 0..SLICE_CHANNELS {
        let planes: Vec<&[u8]> = ordered.iter().map(|s| s.channel(c)).collect();
        mods.push(Volume::from_planes(h, w, &planes)?);
    }
    let labels = if ordered.iter().all(|s| s.label.is_some()) {
        let planes: Vec<&[u8]> = ordered
            .iter()
            .map(|s| s.label.as_deref().expect("checked"))
            .collect();
        Some(Volume::from_planes(h, w, &planes)?)
    } else {
        None
    };
    Ok((mods.try_into().expect("four channels"), labels))
}

/// Sorts `(index, item)` pairs and requires indices `0..S` exactly once.
fn order_slices<'a, T>(items: impl Iterator<Item = (usize, &'a T)>) -> Result<Vec<&'a T>>
where
    T: 'a,
{
    let mut items: Vec<_> = items.collect();
    items.sort_by_key(|(i, _)| *i);
    let mut out = Vec::with_capacity(items.len());
    for (expected, (index, item)) in items.into_iter().enumerate() {
        if index < expected {
            return Err(Error::Data(format!(
                "slice index {index} appears more than once"
            )));
        }
        if index > expected {
            return Err(Error::Gap { index: expected });
        }
        out.push(item);
    }
    Ok(out)
}

/// Stacks label planes `(slice_index, (height, width) plane)` along the
/// slice axis. Indices must cover `0..S` with no gaps.
pub fn reconstruct_volume(
    masks: &[(usize, Vec<u8>)],
    height: usize,
    width: usize,
) -> Result<Volume<u8>> {
    if masks.is_empty() {
        return Err(Error::Data("no mask slices to reconstruct".into()));
    }
    let ordered = order_slices(masks.iter().map(|(i, m)| (*i, m)))?;
    for (z, m) in ordered.iter().enumerate() {
        if m.len() != height * width {
            return Err(Error::Shape(format!(
                "mask slice {z} has {} values, expected {height}x{width}",
                m.len()
            )));
        }
        validate_label_plane(m, width, &format!("mask slice {z}"))?;
    }
    let planes: Vec<&[u8]> = ordered.iter().map(|m| m.as_slice()).collect();
    Volume::from_planes(height, width, &planes)
}
