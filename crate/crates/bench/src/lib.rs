//! Inputs shared by the benchmark targets.

use drunet_core::metrics::Mask;
use drunet_core::Tensor4;
use rand::Rng;

pub fn random_tensor<R: Rng>(shape: [usize; 4], rng: &mut R) -> Tensor4<f32> {
    Tensor4::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Solid ball of radius `r` voxels.
pub fn ball(dims: (usize, usize, usize), centre: (f64, f64, f64), r: f64) -> Mask {
    let (d, h, w) = dims;
    let mut data = Vec::with_capacity(d * h * w);
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let dz = z as f64 - centre.0;
                let dy = y as f64 - centre.1;
                let dx = x as f64 - centre.2;
                data.push(dz * dz + dy * dy + dx * dx <= r * r);
            }
        }
    }
    Mask::from_vec(dims, data).expect("non-empty dims")
}
