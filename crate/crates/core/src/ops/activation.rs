use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Real, Shape4, Tensor4};

/// NaN passes through so a diverging run is still visible at the loss.
pub fn relu<T: Real>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(|v| {
        if v > T::zero() || v.is_nan() {
            v
        } else {
            T::zero()
        }
    })
}

/// Gradient gated by `x > 0`.
pub fn relu_backward<T: Real>(x: &Tensor4<T>, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    x.zip_map(grad_out, |v, g| if v > T::zero() { g } else { T::zero() })
}

/// Per-pixel softmax over the channel axis, stabilized by subtracting the
/// channel maximum.
pub fn softmax_channels<T: Real>(x: &Tensor4<T>) -> Tensor4<T> {
    let s = x.shape();
    let plane = s.plane();
    let mut out = x.clone();
    let mut max = vec![T::zero(); plane];
    let mut total = vec![T::zero(); plane];
    for n in 0..s.n {
        let item = out.item_mut(n);
        max.fill(T::neg_infinity());
        for chunk in item.chunks(plane) {
            for (m, &v) in max.iter_mut().zip(chunk) {
                *m = m.max(v);
            }
        }
        total.fill(T::zero());
        for chunk in item.chunks_mut(plane) {
            for ((v, &m), t) in chunk.iter_mut().zip(&max).zip(total.iter_mut()) {
                *v = (*v - m).exp();
                *t += *v;
            }
        }
        for chunk in item.chunks_mut(plane) {
            for (v, &t) in chunk.iter_mut().zip(&total) {
                *v /= t;
            }
        }
    }
    out
}

/// Vector-Jacobian product of [`softmax_channels`] given its output `probs`.
pub fn softmax_backward<T: Real>(probs: &Tensor4<T>, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    probs.expect_same_shape(grad_out, "softmax backward")?;
    let s = probs.shape();
    let plane = s.plane();
    let mut dx = Tensor4::zeros(s);
    let mut dot = vec![T::zero(); plane];
    for n in 0..s.n {
        let p = probs.item(n);
        let g = grad_out.item(n);
        dot.fill(T::zero());
        for (pc, gc) in p.chunks(plane).zip(g.chunks(plane)) {
            for ((d, &pv), &gv) in dot.iter_mut().zip(pc).zip(gc) {
                *d += pv * gv;
            }
        }
        let dst = dx.item_mut(n);
        for ((dc, pc), gc) in dst
            .chunks_mut(plane)
            .zip(p.chunks(plane))
            .zip(g.chunks(plane))
        {
            for (((d, &pv), &gv), &dt) in dc.iter_mut().zip(pc).zip(gc).zip(&dot) {
                *d = pv * (gv - dt);
            }
        }
    }
    Ok(dx)
}

/// Per-pixel class map `(n, h, w)`, flattened row-major. Ties resolve to the
/// lowest channel index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassMap {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<usize>,
}

impl ClassMap {
    pub fn new(n: usize, h: usize, w: usize, data: Vec<usize>) -> Result<Self> {
        if data.len() != n * h * w {
            return Err(Error::shape(format!(
                "{} labels do not fill a {n}x{h}x{w} map",
                data.len()
            )));
        }
        Ok(Self { n, h, w, data })
    }

    pub fn get(&self, n: usize, y: usize, x: usize) -> usize {
        self.data[(n * self.h + y) * self.w + x]
    }

    /// Labels of batch item `n`.
    pub fn item(&self, n: usize) -> &[usize] {
        let len = self.h * self.w;
        &self.data[n * len..(n + 1) * len]
    }
}

pub fn argmax_channels<T: Real>(x: &Tensor4<T>) -> ClassMap {
    let s = x.shape();
    let plane = s.plane();
    let mut data = Vec::with_capacity(s.n * plane);
    for n in 0..s.n {
        let item = x.item(n);
        for p in 0..plane {
            let mut best = 0;
            let mut best_v = item[p];
            for c in 1..s.c {
                let v = item[c * plane + p];
                if v > best_v {
                    best = c;
                    best_v = v;
                }
            }
            data.push(best);
        }
    }
    ClassMap {
        n: s.n,
        h: s.h,
        w: s.w,
        data,
    }
}

/// Inverted-dropout multipliers: `0` with probability `rate`, otherwise
/// `1 / (1 - rate)`. One uniform draw per element, in storage order.
pub fn dropout_mask<T: Real, R: Rng + ?Sized>(
    shape: Shape4,
    rate: f64,
    rng: &mut R,
) -> Result<Tensor4<T>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
    let data = (0..shape.numel())
        .map(|_| {
            if rng.random::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    Tensor4::from_vec(shape, data)
}
