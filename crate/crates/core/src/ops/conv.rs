//! 2-D convolution and transposed convolution kernels (im2col + GEMM).

use crate::error::{Error, Result};
use crate::tensor::{Real, Shape4, Tensor4};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Padding {
    /// Output extent `ceil(in / stride)`, zero padding split with the odd
    /// element at the bottom/right.
    SameCeil,
    /// No padding; output extent `(in - k) / stride + 1`.
    Valid,
}

/// Index mapping between an input plane and the output grid of a
/// convolution. Positions outside `[0, in)` read as zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

fn same_ceil(len: usize, k: usize, stride: usize) -> (usize, usize) {
    let out = len.div_ceil(stride);
    let total = ((out - 1) * stride + k).saturating_sub(len);
    (out, total / 2)
}

impl ConvGeometry {
    pub fn conv(
        in_h: usize,
        in_w: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        padding: Padding,
    ) -> Result<Self> {
        let (out_h, out_w, pad_top, pad_left) = match padding {
            Padding::SameCeil => {
                let (oh, pt) = same_ceil(in_h, kh, stride);
                let (ow, pl) = same_ceil(in_w, kw, stride);
                (oh, ow, pt, pl)
            }
            Padding::Valid => {
                if in_h < kh || in_w < kw {
                    return Err(Error::shape(format!(
                        "valid {kh}x{kw} convolution needs at least {kh}x{kw} input, got {in_h}x{in_w}"
                    )));
                }
                ((in_h - kh) / stride + 1, (in_w - kw) / stride + 1, 0, 0)
            }
        };
        Ok(Self {
            in_h,
            in_w,
            out_h,
            out_w,
            kh,
            kw,
            stride,
            pad_top,
            pad_left,
        })
    }

    /// Geometry of the adjoint convolution behind a transposed convolution
    /// whose (cropped) output is `target_h x target_w`.
    pub fn transposed(
        in_h: usize,
        in_w: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        target_h: usize,
        target_w: usize,
    ) -> Result<Self> {
        let full_h = (in_h - 1) * stride + kh;
        let full_w = (in_w - 1) * stride + kw;
        if target_h > full_h || target_w > full_w {
            return Err(Error::shape(format!(
                "transposed convolution of {in_h}x{in_w} can produce at most {full_h}x{full_w}, {target_h}x{target_w} requested"
            )));
        }
        if target_h <= (in_h - 1) * stride || target_w <= (in_w - 1) * stride {
            return Err(Error::shape(format!(
                "target {target_h}x{target_w} would drop whole input rows/columns of {in_h}x{in_w}"
            )));
        }
        Ok(Self {
            in_h: target_h,
            in_w: target_w,
            out_h: in_h,
            out_w: in_w,
            kh,
            kw,
            stride,
            pad_top: 0,
            pad_left: 0,
        })
    }

    pub fn out_plane(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn in_plane(&self) -> usize {
        self.in_h * self.in_w
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1
            && self.kw == 1
            && self.stride == 1
            && self.pad_top == 0
            && self.pad_left == 0
            && self.in_h == self.out_h
            && self.in_w == self.out_w
    }

    #[inline]
    fn src_row(&self, oy: usize, ky: usize) -> Option<usize> {
        let y = (oy * self.stride + ky).checked_sub(self.pad_top)?;
        (y < self.in_h).then_some(y)
    }

    #[inline]
    fn src_col(&self, ox: usize, kx: usize) -> Option<usize> {
        let x = (ox * self.stride + kx).checked_sub(self.pad_left)?;
        (x < self.in_w).then_some(x)
    }
}

/// Unfold a `(channels, in_h, in_w)` block into a
/// `(channels * kh * kw, out_h * out_w)` matrix.
pub fn im2col<T: Real>(src: &[T], channels: usize, g: &ConvGeometry, col: &mut [T]) {
    let plane = g.in_plane();
    let out_plane = g.out_plane();
    debug_assert_eq!(src.len(), channels * plane);
    debug_assert_eq!(col.len(), channels * g.kh * g.kw * out_plane);
    let mut row = 0;
    for c in 0..channels {
        let chan = &src[c * plane..(c + 1) * plane];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let dst = &mut col[row * out_plane..(row + 1) * out_plane];
                for oy in 0..g.out_h {
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    match g.src_row(oy, ky) {
                        None => line.fill(T::zero()),
                        Some(y) => {
                            let src_line = &chan[y * g.in_w..(y + 1) * g.in_w];
                            for (ox, v) in line.iter_mut().enumerate() {
                                *v = match g.src_col(ox, kx) {
                                    Some(x) => src_line[x],
                                    None => T::zero(),
                                };
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add columns back into `dst`.
pub fn col2im<T: Real>(col: &[T], channels: usize, g: &ConvGeometry, dst: &mut [T]) {
    let plane = g.in_plane();
    let out_plane = g.out_plane();
    debug_assert_eq!(dst.len(), channels * plane);
    let mut row = 0;
    for c in 0..channels {
        let chan = &mut dst[c * plane..(c + 1) * plane];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let src = &col[row * out_plane..(row + 1) * out_plane];
                for oy in 0..g.out_h {
                    let Some(y) = g.src_row(oy, ky) else { continue };
                    let line = &src[oy * g.out_w..(oy + 1) * g.out_w];
                    let dst_line = &mut chan[y * g.in_w..(y + 1) * g.in_w];
                    for (ox, &v) in line.iter().enumerate() {
                        if let Some(x) = g.src_col(ox, kx) {
                            dst_line[x] += v;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Weights and hyper-parameters of one convolution.
#[derive(Clone, Debug)]
pub struct ConvParams<T = f32> {
    /// `(out_ch, in_ch, kh, kw)`.
    pub weight: Tensor4<T>,
    pub bias: Vec<T>,
    pub stride: usize,
    pub padding: Padding,
}

impl<T: Real> ConvParams<T> {
    pub fn new(weight: Tensor4<T>, bias: Vec<T>, stride: usize, padding: Padding) -> Result<Self> {
        let p = Self {
            weight,
            bias,
            stride,
            padding,
        };
        check_kernel(&p.weight, &p.bias, p.stride)?;
        Ok(p)
    }
}

fn check_kernel<T: Real>(weight: &Tensor4<T>, bias: &[T], stride: usize) -> Result<()> {
    let w = weight.shape();
    if !(1..=3).contains(&w.h) || !(1..=3).contains(&w.w) {
        return Err(Error::shape(format!(
            "kernel extent {}x{} outside 1..=3",
            w.h, w.w
        )));
    }
    if !(1..=2).contains(&stride) {
        return Err(Error::shape(format!("stride {stride} not in {{1, 2}}")));
    }
    if bias.len() != w.n {
        return Err(Error::shape(format!(
            "bias has {} entries for {} output channels",
            bias.len(),
            w.n
        )));
    }
    Ok(())
}

pub fn conv2d_geometry<T: Real>(
    x: Shape4,
    weight: &Tensor4<T>,
    bias: &[T],
    stride: usize,
    padding: Padding,
) -> Result<ConvGeometry> {
    check_kernel(weight, bias, stride)?;
    let w = weight.shape();
    if x.c != w.c {
        return Err(Error::shape(format!(
            "conv2d channel mismatch: input {x} has {} channels, kernel {w} expects {}",
            x.c, w.c
        )));
    }
    ConvGeometry::conv(x.h, x.w, w.h, w.w, stride, padding)
}

pub fn conv2d<T: Real>(
    x: &Tensor4<T>,
    weight: &Tensor4<T>,
    bias: &[T],
    stride: usize,
    padding: Padding,
) -> Result<Tensor4<T>> {
    let xs = x.shape();
    let g = conv2d_geometry(xs, weight, bias, stride, padding)?;
    let out_ch = weight.shape().n;
    let ckk = xs.c * g.kh * g.kw;
    let out_plane = g.out_plane();
    let mut out = Tensor4::zeros(Shape4::new(xs.n, out_ch, g.out_h, g.out_w));
    let pointwise = g.is_pointwise();
    let mut col = if pointwise {
        Vec::new()
    } else {
        vec![T::zero(); ckk * out_plane]
    };
    for n in 0..xs.n {
        let src = x.item(n);
        let dst = out.item_mut(n);
        for (o, chunk) in dst.chunks_mut(out_plane).enumerate() {
            chunk.fill(bias[o]);
        }
        let rhs = if pointwise {
            src
        } else {
            im2col(src, xs.c, &g, &mut col);
            &col
        };
        T::gemm(
            out_ch,
            ckk,
            out_plane,
            weight.data(),
            false,
            rhs,
            false,
            T::one(),
            dst,
        );
    }
    Ok(out)
}

pub struct ConvGrads<T> {
    pub input: Tensor4<T>,
    pub weight: Tensor4<T>,
    pub bias: Vec<T>,
}

pub fn conv2d_backward<T: Real>(
    x: &Tensor4<T>,
    weight: &Tensor4<T>,
    stride: usize,
    padding: Padding,
    grad_out: &Tensor4<T>,
) -> Result<ConvGrads<T>> {
    let xs = x.shape();
    let ws = weight.shape();
    let bias_stub = vec![T::zero(); ws.n];
    let g = conv2d_geometry(xs, weight, &bias_stub, stride, padding)?;
    let gs = grad_out.shape();
    if gs != Shape4::new(xs.n, ws.n, g.out_h, g.out_w) {
        return Err(Error::shape(format!(
            "conv2d backward: output gradient {gs} does not match forward output"
        )));
    }
    let ckk = xs.c * g.kh * g.kw;
    let out_plane = g.out_plane();
    let pointwise = g.is_pointwise();
    let mut col = vec![T::zero(); if pointwise { 0 } else { ckk * out_plane }];
    let mut dcol = vec![T::zero(); ckk * out_plane];
    let mut dx = Tensor4::zeros(xs);
    let mut dw = Tensor4::zeros(ws);
    let mut db = vec![T::zero(); ws.n];
    for n in 0..xs.n {
        let dy = grad_out.item(n);
        for (o, chunk) in dy.chunks(out_plane).enumerate() {
            db[o] += chunk.iter().copied().sum::<T>();
        }
        let cols: &[T] = if pointwise {
            x.item(n)
        } else {
            im2col(x.item(n), xs.c, &g, &mut col);
            &col
        };
        T::gemm(
            ws.n,
            out_plane,
            ckk,
            dy,
            false,
            cols,
            true,
            T::one(),
            dw.data_mut(),
        );
        if pointwise {
            T::gemm(
                ckk,
                ws.n,
                out_plane,
                weight.data(),
                true,
                dy,
                false,
                T::zero(),
                dx.item_mut(n),
            );
        } else {
            T::gemm(
                ckk,
                ws.n,
                out_plane,
                weight.data(),
                true,
                dy,
                false,
                T::zero(),
                &mut dcol,
            );
            col2im(&dcol, xs.c, &g, dx.item_mut(n));
        }
    }
    Ok(ConvGrads {
        input: dx,
        weight: dw,
        bias: db,
    })
}

fn transposed_geometry<T: Real>(
    x: Shape4,
    weight: &Tensor4<T>,
    bias: &[T],
    stride: usize,
    target_hw: (usize, usize),
) -> Result<ConvGeometry> {
    let ws = weight.shape();
    if x.c != ws.n {
        return Err(Error::shape(format!(
            "conv2d_transpose channel mismatch: input {x} has {} channels, kernel {ws} expects {}",
            x.c, ws.n
        )));
    }
    if bias.len() != ws.c {
        return Err(Error::shape(format!(
            "bias has {} entries for {} output channels",
            bias.len(),
            ws.c
        )));
    }
    if stride != 2 || ws.h != 2 || ws.w != 2 {
        return Err(Error::shape(format!(
            "upsampling expects a 2x2 kernel with stride 2, got {}x{} stride {stride}",
            ws.h, ws.w
        )));
    }
    ConvGeometry::transposed(x.h, x.w, ws.h, ws.w, stride, target_hw.0, target_hw.1)
}

/// Transposed convolution, cropped top-left to `target_hw`.
///
/// `weight` has layout `(in_ch, out_ch, kh, kw)`: the same tensor used as a
/// `conv2d` kernel maps `out_ch -> in_ch`, and this operation is that
/// convolution's adjoint with respect to its input.
pub fn conv2d_transpose<T: Real>(
    x: &Tensor4<T>,
    weight: &Tensor4<T>,
    bias: &[T],
    stride: usize,
    target_hw: (usize, usize),
) -> Result<Tensor4<T>> {
    let xs = x.shape();
    let g = transposed_geometry(xs, weight, bias, stride, target_hw)?;
    let ws = weight.shape();
    let out_ch = ws.c;
    let rows = out_ch * g.kh * g.kw;
    let plane = xs.plane();
    let mut col = vec![T::zero(); rows * plane];
    let mut out = Tensor4::zeros(Shape4::new(xs.n, out_ch, target_hw.0, target_hw.1));
    let out_plane = g.in_plane();
    for n in 0..xs.n {
        T::gemm(
            rows,
            xs.c,
            plane,
            weight.data(),
            true,
            x.item(n),
            false,
            T::zero(),
            &mut col,
        );
        let dst = out.item_mut(n);
        for (o, chunk) in dst.chunks_mut(out_plane).enumerate() {
            chunk.fill(bias[o]);
        }
        col2im(&col, out_ch, &g, dst);
    }
    Ok(out)
}

pub fn conv2d_transpose_backward<T: Real>(
    x: &Tensor4<T>,
    weight: &Tensor4<T>,
    stride: usize,
    grad_out: &Tensor4<T>,
) -> Result<ConvGrads<T>> {
    let xs = x.shape();
    let ws = weight.shape();
    let gs = grad_out.shape();
    let bias_stub = vec![T::zero(); ws.c];
    let g = transposed_geometry(xs, weight, &bias_stub, stride, (gs.h, gs.w))?;
    if gs.n != xs.n || gs.c != ws.c {
        return Err(Error::shape(format!(
            "conv2d_transpose backward: output gradient {gs} does not match forward output"
        )));
    }
    let rows = ws.c * g.kh * g.kw;
    let plane = xs.plane();
    let mut dcol = vec![T::zero(); rows * plane];
    let mut dx = Tensor4::zeros(xs);
    let mut dw = Tensor4::zeros(ws);
    let mut db = vec![T::zero(); ws.c];
    let out_plane = g.in_plane();
    for n in 0..xs.n {
        let dy = grad_out.item(n);
        for (o, chunk) in dy.chunks(out_plane).enumerate() {
            db[o] += chunk.iter().copied().sum::<T>();
        }
        im2col(dy, ws.c, &g, &mut dcol);
        T::gemm(
            xs.c,
            rows,
            plane,
            weight.data(),
            false,
            &dcol,
            false,
            T::zero(),
            dx.item_mut(n),
        );
        T::gemm(
            xs.c,
            plane,
            rows,
            x.item(n),
            false,
            &dcol,
            true,
            T::one(),
            dw.data_mut(),
        );
    }
    Ok(ConvGrads {
        input: dx,
        weight: dw,
        bias: db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_ceil_extents_follow_the_level_trace() {
        let mut extent = 240;
        let mut trace = vec![extent];
        for _ in 0..5 {
            let g = ConvGeometry::conv(extent, extent, 1, 1, 2, Padding::SameCeil).unwrap();
            extent = g.out_h;
            trace.push(extent);
        }
        assert_eq!(trace, [240, 120, 60, 30, 15, 8]);
    }

    #[test]
    fn same_ceil_pads_three_by_three_symmetrically() {
        let g = ConvGeometry::conv(7, 7, 3, 3, 1, Padding::SameCeil).unwrap();
        assert_eq!((g.out_h, g.pad_top), (7, 1));
        let g = ConvGeometry::conv(8, 8, 3, 3, 2, Padding::SameCeil).unwrap();
        // total padding 1: extra goes bottom/right
        assert_eq!((g.out_h, g.pad_top), (4, 0));
    }

    #[test]
    fn identity_pointwise_kernel_is_identity() {
        let x = Tensor4::<f32>::from_fn([2, 3, 4, 5], |[n, c, h, w]| {
            (n + 2 * c) as f32 - 0.3 * (h * w) as f32
        });
        let w = Tensor4::from_fn([3, 3, 1, 1], |[o, c, _, _]| if o == c { 1.0 } else { 0.0 });
        let y = conv2d(&x, &w, &[0.0; 3], 1, Padding::SameCeil).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn channel_mismatch_names_both_shapes() {
        let x = Tensor4::<f32>::zeros([1, 4, 8, 8]);
        let w = Tensor4::<f32>::zeros([2, 3, 3, 3]);
        let err = conv2d(&x, &w, &[0.0; 2], 1, Padding::SameCeil)
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("(1, 4, 8, 8)") && err.contains("(2, 3, 3, 3)"),
            "{err}"
        );
    }

    #[test]
    fn rejects_unsupported_kernels_and_strides() {
        let x = Tensor4::<f32>::zeros([1, 1, 8, 8]);
        let w5 = Tensor4::<f32>::zeros([1, 1, 5, 5]);
        assert!(conv2d(&x, &w5, &[0.0], 1, Padding::SameCeil).is_err());
        let w3 = Tensor4::<f32>::zeros([1, 1, 3, 3]);
        assert!(conv2d(&x, &w3, &[0.0], 3, Padding::SameCeil).is_err());
        assert!(conv2d(&x, &w3, &[0.0, 0.0], 1, Padding::SameCeil).is_err());
    }

    #[test]
    fn transposed_delta_response_is_a_patch_of_ones() {
        let x = Tensor4::<f32>::ones([1, 1, 1, 1]);
        let w = Tensor4::<f32>::ones([1, 1, 2, 2]);
        let y = conv2d_transpose(&x, &w, &[0.0], 2, (2, 2)).unwrap();
        assert_eq!(y.data(), &[1.0; 4]);
    }

    #[test]
    fn transposed_rejects_oversized_targets() {
        let x = Tensor4::<f32>::ones([1, 1, 8, 8]);
        let w = Tensor4::<f32>::ones([1, 1, 2, 2]);
        assert!(conv2d_transpose(&x, &w, &[0.0], 2, (17, 17)).is_err());
        assert!(conv2d_transpose(&x, &w, &[0.0], 2, (14, 14)).is_err());
        assert_eq!(
            conv2d_transpose(&x, &w, &[0.0], 2, (15, 15))
                .unwrap()
                .shape(),
            Shape4::new(1, 1, 15, 15)
        );
    }
}
