//! Random left-right / anterior-posterior flips applied identically to
//! images and labels.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ops::ClassMap;
use crate::tensor::{Real, Tensor4};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Flip {
    /// Mirror columns.
    pub left_right: bool,
    /// Mirror rows.
    pub anterior_posterior: bool,
}

impl Flip {
    pub const NONE: Flip = Flip {
        left_right: false,
        anterior_posterior: false,
    };

    /// Each axis independently with probability 0.5.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            left_right: rng.random_bool(0.5),
            anterior_posterior: rng.random_bool(0.5),
        }
    }

    pub fn is_identity(&self) -> bool {
        !self.left_right && !self.anterior_posterior
    }

    /// Flips every `(h, w)` plane stored back to back in `data`.
    pub fn apply_planes<V: Copy>(&self, data: &mut [V], h: usize, w: usize) {
        for plane in data.chunks_exact_mut(h * w) {
            if self.left_right {
                for row in plane.chunks_exact_mut(w) {
                    row.reverse();
                }
            }
            if self.anterior_posterior {
                for y in 0..h / 2 {
                    let (top, bottom) = plane.split_at_mut((h - 1 - y) * w);
                    top[y * w..(y + 1) * w].swap_with_slice(&mut bottom[..w]);
                }
            }
        }
    }
}

/// Applies `flips[i]` to batch item `i` of both images and labels.
pub fn apply_flips<T: Real>(
    images: &mut Tensor4<T>,
    labels: &mut ClassMap,
    flips: &[Flip],
) -> Result<()> {
    let s = images.shape();
    if (s.n, s.h, s.w) != (labels.n, labels.h, labels.w) || flips.len() != s.n {
        return Err(Error::Shape(format!(
            "flip: images {s}, labels ({}, {}, {}), {} flips",
            labels.n,
            labels.h,
            labels.w,
            flips.len()
        )));
    }
    let plane = s.h * s.w;
    for (n, f) in flips.iter().enumerate() {
        if f.is_identity() {
            continue;
        }
        f.apply_planes(images.item_mut(n), s.h, s.w);
        f.apply_planes(&mut labels.data[n * plane..(n + 1) * plane], s.h, s.w);
    }
    Ok(())
}

/// Draws one flip per batch item and applies it; returns the draws.
pub fn augment_flip<T: Real, R: Rng + ?Sized>(
    images: &mut Tensor4<T>,
    labels: &mut ClassMap,
    rng: &mut R,
) -> Result<Vec<Flip>> {
    let flips: Vec<Flip> = (0..images.shape().n).map(|_| Flip::sample(rng)).collect();
    apply_flips(images, labels, &flips)?;
    Ok(flips)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_flips_match_tensor_flips() {
        let t = Tensor4::<f32>::from_fn([1, 2, 3, 4], |[_, c, h, w]| (c * 100 + h * 10 + w) as f32);
        let mut lr = t.clone();
        Flip {
            left_right: true,
            anterior_posterior: false,
        }
        .apply_planes(lr.data_mut(), 3, 4);
        assert_eq!(lr, t.flip_w());
        let mut ap = t.clone();
        Flip {
            left_right: false,
            anterior_posterior: true,
        }
        .apply_planes(ap.data_mut(), 3, 4);
        assert_eq!(ap, t.flip_h());
    }
}
