use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{Real, Shape4, Tensor4};

/// He-normal initialization: zero-mean Gaussian with variance `2 / fan_in`.
///
/// Samples are drawn in `f64` and rounded, so `f32` and `f64` tensors built
/// from the same seed agree to `f32` precision.
pub fn he_init<T: Real, R: Rng + ?Sized>(
    fan_in: usize,
    shape: impl Into<Shape4>,
    rng: &mut R,
) -> Result<Tensor4<T>> {
    if fan_in == 0 {
        return Err(Error::Config("fan_in must be positive".into()));
    }
    let shape = shape.into();
    let normal =
        Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).map_err(|e| Error::Config(e.to_string()))?;
    let data = (0..shape.numel())
        .map(|_| T::from_f64_lossy(normal.sample(rng)))
        .collect();
    Tensor4::from_vec(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fixed_seed_repeats_bit_for_bit() {
        let a: Tensor4<f32> = he_init(9, [4, 1, 3, 3], &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b: Tensor4<f32> = he_init(9, [4, 1, 3, 3], &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn zero_fan_in_is_rejected() {
        let r: Result<Tensor4<f32>> = he_init(0, [1, 1, 1, 1], &mut ChaCha8Rng::seed_from_u64(0));
        assert!(r.is_err());
    }
}
