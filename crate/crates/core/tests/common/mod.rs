//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod grad;

use drunet_core::data::{SliceSample, Volume, VolumeStack};
use drunet_core::metrics::Mask;
use drunet_core::{Real, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor<T: Real>(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor4<T> {
    Tensor4::from_fn(shape, |_| T::from_f64_lossy(rng.random_range(-1.0..1.0)))
}

/// Direct-summation convolution: `same_ceil` padding when `same`, else
/// valid. Weight layout (out, in, kh, kw).
pub fn naive_conv2d(
    x: &Tensor4<f64>,
    w: &Tensor4<f64>,
    bias: &[f64],
    stride: usize,
    same: bool,
) -> Tensor4<f64> {
    let [n, c, h, wd] = x.shape().dims();
    let [oc, ic, kh, kw] = w.shape().dims();
    assert_eq!(c, ic);
    let (oh, ow, pt, pl) = if same {
        let oh = h.div_ceil(stride);
        let ow = wd.div_ceil(stride);
        let ph = ((oh - 1) * stride + kh).saturating_sub(h);
        let pw = ((ow - 1) * stride + kw).saturating_sub(wd);
        (oh, ow, ph / 2, pw / 2)
    } else {
        ((h - kh) / stride + 1, (wd - kw) / stride + 1, 0, 0)
    };
    let mut out = Tensor4::<f64>::zeros([n, oc, oh, ow]);
    for b in 0..n {
        for (o, &b0) in bias.iter().enumerate().take(oc) {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = b0;
                    for i in 0..ic {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (y * stride + ky) as isize - pt as isize;
                                let ix = (xx * stride + kx) as isize - pl as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x.get(b, i, iy as usize, ix as usize) * w.get(o, i, ky, kx);
                            }
                        }
                    }
                    out.set(b, o, y, xx, acc);
                }
            }
        }
    }
    out
}

/// Stride-2 scatter of a 2x2 transposed convolution (weight layout
/// (in, out, 2, 2)) followed by a top-left crop.
pub fn naive_transpose(
    x: &Tensor4<f64>,
    w: &Tensor4<f64>,
    bias: &[f64],
    target: (usize, usize),
) -> Tensor4<f64> {
    let [n, c, h, wd] = x.shape().dims();
    let [ic, oc, kh, kw] = w.shape().dims();
    assert_eq!(c, ic);
    let mut full = Tensor4::<f64>::zeros([n, oc, 2 * (h - 1) + kh, 2 * (wd - 1) + kw]);
    for b in 0..n {
        for i in 0..ic {
            for y in 0..h {
                for xx in 0..wd {
                    for o in 0..oc {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let (oy, ox) = (2 * y + ky, 2 * xx + kx);
                                let v = full.get(b, o, oy, ox)
                                    + x.get(b, i, y, xx) * w.get(i, o, ky, kx);
                                full.set(b, o, oy, ox, v);
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor4::from_fn([n, oc, target.0, target.1], |[b, o, y, xx]| {
        full.get(b, o, y, xx) + bias[o]
    })
}

/// Literal one-hot cross entropy: -(1/N) sum_n sum_c y_nc log p_nc.
pub fn one_hot_ce(logits: &Tensor4<f64>, labels: &[usize]) -> f64 {
    let [n, c, h, w] = logits.shape().dims();
    let mut total = 0.0;
    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                let zs: Vec<f64> = (0..c).map(|k| logits.get(b, k, y, x)).collect();
                let denom: f64 = zs.iter().map(|z| z.exp()).sum();
                let label = labels[(b * h + y) * w + x];
                for (k, z) in zs.iter().enumerate() {
                    let one_hot = if k == label { 1.0 } else { 0.0 };
                    let p = (z.exp() / denom).max(1e-12);
                    total -= one_hot * p.ln();
                }
            }
        }
    }
    total / (n * h * w) as f64
}

/// Surface voxels by explicit 6-neighbour probing (outside counts as
/// background).
pub fn surface_points(m: &Mask) -> Vec<(usize, usize, usize)> {
    let (d, h, w) = m.dims();
    let inside = |z: isize, y: isize, x: isize| {
        z >= 0
            && y >= 0
            && x >= 0
            && (z as usize) < d
            && (y as usize) < h
            && (x as usize) < w
            && m.get(z as usize, y as usize, x as usize)
    };
    let mut out = Vec::new();
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                if !m.get(z, y, x) {
                    continue;
                }
                let (zi, yi, xi) = (z as isize, y as isize, x as isize);
                let nb = [
                    (-1, 0, 0),
                    (1, 0, 0),
                    (0, -1, 0),
                    (0, 1, 0),
                    (0, 0, -1),
                    (0, 0, 1),
                ];
                if nb
                    .iter()
                    .any(|&(dz, dy, dx)| !inside(zi + dz, yi + dy, xi + dx))
                {
                    out.push((z, y, x));
                }
            }
        }
    }
    out
}

/// All-pairs directed distances, percentile by sorted-rank interpolation.
pub fn brute_force_hd(a: &Mask, b: &Mask, p: f64) -> f64 {
    let sa = surface_points(a);
    let sb = surface_points(b);
    let directed = |from: &[(usize, usize, usize)], to: &[(usize, usize, usize)]| -> f64 {
        let mut d: Vec<f64> = from
            .iter()
            .map(|&(z, y, x)| {
                to.iter()
                    .map(|&(z2, y2, x2)| {
                        let dz = z as f64 - z2 as f64;
                        let dy = y as f64 - y2 as f64;
                        let dx = x as f64 - x2 as f64;
                        (dz * dz + dy * dy + dx * dx).sqrt()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        d.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let r = p / 100.0 * (d.len() - 1) as f64;
        let (lo, hi) = (r.floor() as usize, r.ceil() as usize);
        d[lo] + (d[hi] - d[lo]) * (r - lo as f64)
    };
    directed(&sa, &sb).max(directed(&sb, &sa))
}

pub fn random_blob(dims: (usize, usize, usize), rng: &mut ChaCha8Rng, fill: f64) -> Mask {
    let (d, h, w) = dims;
    let data = (0..d * h * w).map(|_| rng.random_bool(fill)).collect();
    Mask::from_vec(dims, data).unwrap()
}

/// Label map of nested discs: edema (2) around a core (1) around an
/// enhancing centre (4).
pub fn nested_labels(h: usize, w: usize, cy: f64, cx: f64, r: f64) -> Vec<u8> {
    let mut out = vec![0u8; h * w];
    for y in 0..h {
        for x in 0..w {
            let d = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
            out[y * w + x] = if d < 0.35 * r {
                4
            } else if d < 0.65 * r {
                1
            } else if d < r {
                2
            } else {
                0
            };
        }
    }
    out
}

/// 8-bit intensities for a label map: a brain ellipse with per-label cues
/// in each modality plus mild noise.
pub fn synthetic_image(labels: &[u8], h: usize, w: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    // flair, t1, t1ce, t2 means per label 0 (brain), 1, 2, 4
    let means: [[f64; 4]; 4] = [
        [90.0, 120.0, 100.0, 80.0],
        [130.0, 80.0, 110.0, 180.0],
        [200.0, 100.0, 120.0, 200.0],
        [150.0, 90.0, 230.0, 150.0],
    ];
    let mut img = vec![0u8; 4 * h * w];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let ey = (y as f64 - h as f64 / 2.0) / (0.46 * h as f64);
            let ex = (x as f64 - w as f64 / 2.0) / (0.40 * w as f64);
            let in_brain = ey * ey + ex * ex <= 1.0;
            let k = match labels[i] {
                1 => 1,
                2 => 2,
                4 => 3,
                _ => 0,
            };
            for c in 0..4 {
                let v = if in_brain || k != 0 {
                    means[k][c] + rng.random_range(-12.0..12.0)
                } else {
                    0.0
                };
                img[c * h * w + i] = v.round().clamp(0.0, 254.0) as u8;
            }
        }
    }
    img
}

/// `count` labelled slices with a tumour of varying position and size.
pub fn synthetic_slices(count: usize, size: usize, seed: u64) -> Vec<SliceSample> {
    let mut r = rng(seed);
    (0..count)
        .map(|i| {
            let radius = r.random_range(0.14..0.24) * size as f64;
            let cy = r.random_range(0.35..0.65) * size as f64;
            let cx = r.random_range(0.35..0.65) * size as f64;
            let label = nested_labels(size, size, cy, cx, radius);
            let image = synthetic_image(&label, size, size, &mut r);
            SliceSample {
                subject_id: "synthetic".into(),
                slice_index: i,
                height: size,
                width: size,
                image,
                label: Some(label),
            }
        })
        .collect()
}

/// Four Gaussian-ish modality volumes with a zero background border and
/// a nested tumour label volume.
pub fn synthetic_stack(subject: &str, dims: (usize, usize, usize), seed: u64) -> VolumeStack {
    let mut r = rng(seed);
    let (d, h, w) = dims;
    let mut labels = Vec::with_capacity(d * h * w);
    let (cz, cy, cx) = (d as f64 / 2.0, h as f64 / 2.0, w as f64 / 2.0);
    let radius = 0.3 * h.min(w) as f64;
    for z in 0..d {
        let plane_r = radius * (1.0 - ((z as f64 - cz) / (d as f64)).abs());
        labels.extend(nested_labels(h, w, cy, cx, plane_r));
    }
    let mods: Vec<Volume<f32>> = (0..4)
        .map(|m| {
            let data = (0..d * h * w)
                .map(|i| {
                    let y = (i / w) % h;
                    let x = i % w;
                    if y == 0 || x == 0 || y == h - 1 || x == w - 1 {
                        0.0
                    } else {
                        let base = 200.0 + 50.0 * m as f64 + 40.0 * f64::from(labels[i]);
                        (base + r.random_range(-60.0..60.0)) as f32
                    }
                })
                .collect();
            Volume::from_vec(dims, data).unwrap()
        })
        .collect();
    let mut label_vol = Volume::from_vec(dims, labels).unwrap();
    // labels only where the modalities have foreground
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                if y == 0 || x == 0 || y == h - 1 || x == w - 1 {
                    label_vol.set(z, y, x, 0);
                }
            }
        }
    }
    VolumeStack::new(subject, mods.try_into().unwrap(), Some(label_vol)).unwrap()
}
