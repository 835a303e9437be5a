//! Whole-volume intensity standardization into the 8-bit slice range.

use super::volume::Volume;
use crate::error::{Error, Result};

/// Largest stored intensity.
pub const UPPER_RAIL: u8 = 254;
/// Intensity a voxel at the foreground mean maps to.
pub const CENTER: f64 = 127.0;

/// Foreground (`v > 0`) mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizationStats {
    pub mean: f64,
    pub sd: f64,
    pub foreground_voxels: usize,
}

pub fn compute_norm_stats(volume: &Volume<f32>) -> Result<NormalizationStats> {
    let mut count = 0usize;
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    for &v in volume.data() {
        if v > 0.0 {
            count += 1;
            let v = f64::from(v);
            let delta = v - mean;
            mean += delta / count as f64;
            m2 += delta * (v - mean);
        }
    }
    if count == 0 {
        return Err(Error::Degenerate("volume has no foreground voxels".into()));
    }
    let sd = (m2 / count as f64).sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::Degenerate(format!(
            "foreground of {count} voxels has zero spread (constant value {mean})"
        )));
    }
    Ok(NormalizationStats {
        mean,
        sd,
        foreground_voxels: count,
    })
}

/// Maps one voxel: background (exactly 0) stays 0, the foreground is
/// placed linearly with the mean at 127 and `mean ± 3 SD` on the rails,
/// rounded half away from zero and clamped to `[0, 254]`.
pub fn normalize_value(v: f32, stats: &NormalizationStats) -> u8 {
    if v == 0.0 {
        return 0;
    }
    let v = f64::from(v);
    let three_sd = 3.0 * stats.sd;
    if v > stats.mean + three_sd {
        return UPPER_RAIL;
    }
    if v < stats.mean - three_sd {
        return 0;
    }
    let scaled = ((v - stats.mean) * 128.0 / three_sd + CENTER).round();
    scaled.clamp(0.0, f64::from(UPPER_RAIL)) as u8
}

pub fn normalize_volume(volume: &Volume<f32>, stats: &NormalizationStats) -> Result<Volume<u8>> {
    if !(stats.sd > 0.0) {
        return Err(Error::Degenerate(format!(
            "standard deviation {} is not positive",
            stats.sd
        )));
    }
    Ok(volume.map(|v| normalize_value(v, stats)))
}
