//! Surface extraction and the 95th-percentile Hausdorff distance.
//!
//! Directed distances are read off an exact Euclidean distance transform
//! of the other mask's surface (separable lower-envelope algorithm), so a
//! case costs a few passes over the volume rather than surface x surface
//! pairs.

use super::conventions::{percentile_linear, Conventions, EmptySentinel};
use super::regions::Mask;
use crate::error::{Error, Result};

/// Voxel spacing in millimetres, `(z, y, x)`.
pub type Spacing = (f64, f64, f64);

pub const UNIT_SPACING: Spacing = (1.0, 1.0, 1.0);

/// Mask voxels with at least one face neighbour outside the mask. Voxels
/// on the volume border count as surface.
pub fn surface(mask: &Mask) -> Mask {
    let (d, h, w) = mask.dims();
    let mut out = Mask::filled((d, h, w), false).expect("non-empty dims");
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                if !mask.get(z, y, x) {
                    continue;
                }
                let interior = z > 0
                    && z + 1 < d
                    && y > 0
                    && y + 1 < h
                    && x > 0
                    && x + 1 < w
                    && mask.get(z - 1, y, x)
                    && mask.get(z + 1, y, x)
                    && mask.get(z, y - 1, x)
                    && mask.get(z, y + 1, x)
                    && mask.get(z, y, x - 1)
                    && mask.get(z, y, x + 1);
                if !interior {
                    out.set(z, y, x, true);
                }
            }
        }
    }
    out
}

/// One-dimensional squared distance transform of `f` with sample spacing
/// `step2 = spacing^2`; infinite entries are not sites.
fn edt_1d(f: &[f64], step2: f64, out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    let mut any = false;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        if !any {
            v[0] = q;
            z[0] = f64::NEG_INFINITY;
            z[1] = f64::INFINITY;
            any = true;
            continue;
        }
        loop {
            let p = v[k];
            let (qf, pf) = (q as f64, p as f64);
            let s =
                ((f[q] + step2 * qf * qf) - (f[p] + step2 * pf * pf)) / (2.0 * step2 * (qf - pf));
            // z[0] is -inf, so this never pops the last parabola.
            if s <= z[k] {
                k -= 1;
                continue;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    if !any {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut k = 0usize;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k];
        let d = qf - p as f64;
        *o = step2 * d * d + f[p];
    }
}

/// Squared Euclidean distance (mm^2) from every voxel to the nearest set
/// voxel of `sites`; infinite everywhere when `sites` is empty.
pub fn squared_distance_transform(sites: &Mask, spacing: Spacing) -> Vec<f64> {
    let (d, h, w) = sites.dims();
    let mut g: Vec<f64> = sites
        .data()
        .iter()
        .map(|&s| if s { 0.0 } else { f64::INFINITY })
        .collect();
    let longest = d.max(h).max(w);
    let mut line = vec![0.0; longest];
    let mut out = vec![0.0; longest];
    let mut v = vec![0usize; longest];
    let mut zb = vec![0.0; longest + 1];
    let idx = |z: usize, y: usize, x: usize| (z * h + y) * w + x;

    let mut pass = |len: usize,
                    step2: f64,
                    positions: &mut dyn Iterator<Item = Vec<usize>>,
                    g: &mut Vec<f64>| {
        for pos in positions {
            for i in 0..len {
                line[i] = g[pos[i]];
            }
            edt_1d(
                &line[..len],
                step2,
                &mut out[..len],
                &mut v[..len],
                &mut zb[..len + 1],
            );
            for i in 0..len {
                g[pos[i]] = out[i];
            }
        }
    };
    let (sz, sy, sx) = spacing;
    pass(
        w,
        sx * sx,
        &mut (0..d).flat_map(|z| (0..h).map(move |y| (0..w).map(|x| idx(z, y, x)).collect())),
        &mut g,
    );
    pass(
        h,
        sy * sy,
        &mut (0..d).flat_map(|z| (0..w).map(move |x| (0..h).map(|y| idx(z, y, x)).collect())),
        &mut g,
    );
    pass(
        d,
        sz * sz,
        &mut (0..h).flat_map(|y| (0..w).map(move |x| (0..d).map(|z| idx(z, y, x)).collect())),
        &mut g,
    );
    g
}

/// Distances (mm) from each surface voxel of `from` to the nearest
/// surface voxel of `to`.
pub fn directed_surface_distances(from: &Mask, to: &Mask, spacing: Spacing) -> Vec<f64> {
    let to_surface = surface(to);
    let dt = squared_distance_transform(&to_surface, spacing);
    surface(from)
        .data()
        .iter()
        .zip(&dt)
        .filter(|(&s, _)| s)
        .map(|(_, &d2)| d2.sqrt())
        .collect()
}

pub fn volume_diagonal(dims: (usize, usize, usize), spacing: Spacing) -> f64 {
    let (d, h, w) = dims;
    let (sz, sy, sx) = spacing;
    ((d as f64 * sz).powi(2) + (h as f64 * sy).powi(2) + (w as f64 * sx).powi(2)).sqrt()
}

/// HD at the convention's percentile, plus whether the empty-mask
/// sentinel was used.
pub fn hausdorff_with(
    pred: &Mask,
    truth: &Mask,
    spacing: Spacing,
    conv: &Conventions,
) -> Result<(f64, bool)> {
    if pred.dims() != truth.dims() {
        return Err(Error::Shape(format!(
            "prediction is {:?}, truth is {:?}",
            pred.dims(),
            truth.dims()
        )));
    }
    let pred_empty = !pred.data().contains(&true);
    let truth_empty = !truth.data().contains(&true);
    match (pred_empty, truth_empty) {
        (true, true) => return Ok((conv.hd_both_empty, false)),
        (true, false) | (false, true) => {
            let v = match conv.hd_one_empty {
                EmptySentinel::VolumeDiagonal => volume_diagonal(pred.dims(), spacing),
                EmptySentinel::Fixed(v) => v,
            };
            return Ok((v, true));
        }
        _ => {}
    }
    let mut ab = directed_surface_distances(pred, truth, spacing);
    let mut ba = directed_surface_distances(truth, pred, spacing);
    let p = conv.hd_percentile;
    let a = percentile_linear(&mut ab, p).expect("non-empty mask has a surface");
    let b = percentile_linear(&mut ba, p).expect("non-empty mask has a surface");
    Ok((a.max(b), false))
}

pub fn hausdorff95(pred: &Mask, truth: &Mask, spacing: Spacing) -> Result<f64> {
    Ok(hausdorff_with(pred, truth, spacing, &Conventions::default())?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points(dims: (usize, usize, usize), pts: &[(usize, usize, usize)]) -> Mask {
        let mut m = Mask::filled(dims, false).unwrap();
        for &(z, y, x) in pts {
            m.set(z, y, x, true);
        }
        m
    }

    #[test]
    fn single_voxels_three_apart() {
        let a = points((1, 1, 8), &[(0, 0, 1)]);
        let b = points((1, 1, 8), &[(0, 0, 4)]);
        assert_eq!(hausdorff95(&a, &b, UNIT_SPACING).unwrap(), 3.0);
    }

    #[test]
    fn identical_masks_are_zero() {
        let a = points((3, 4, 5), &[(1, 1, 1), (1, 2, 1), (2, 2, 3)]);
        assert_eq!(hausdorff95(&a, &a, UNIT_SPACING).unwrap(), 0.0);
    }

    #[test]
    fn empty_cases_follow_conventions() {
        let e = points((2, 3, 6), &[]);
        let a = points((2, 3, 6), &[(0, 0, 0)]);
        assert_eq!(hausdorff95(&e, &e, UNIT_SPACING).unwrap(), 0.0);
        assert_eq!(hausdorff95(&a, &e, UNIT_SPACING).unwrap(), 7.0);
    }

    #[test]
    fn solid_block_surface_excludes_interior() {
        let mut m = Mask::filled((5, 5, 5), false).unwrap();
        for z in 1..4 {
            for y in 1..4 {
                for x in 1..4 {
                    m.set(z, y, x, true);
                }
            }
        }
        let s = surface(&m);
        assert!(!s.get(2, 2, 2));
        assert_eq!(s.data().iter().filter(|&&b| b).count(), 26);
    }

    #[test]
    fn anisotropic_spacing_scales_axes() {
        let a = points((3, 1, 1), &[(0, 0, 0)]);
        let b = points((3, 1, 1), &[(2, 0, 0)]);
        assert_eq!(hausdorff95(&a, &b, (2.5, 1.0, 1.0)).unwrap(), 5.0);
    }
}
