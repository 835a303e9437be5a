//! Tape-free tensor kernels. The autodiff tape and the inference path are
//! both built on these.

pub mod activation;
pub mod conv;
pub mod norm;

pub use activation::{
    argmax_channels, dropout_mask, relu, relu_backward, softmax_backward, softmax_channels,
    ClassMap,
};
pub use conv::{
    conv2d, conv2d_backward, conv2d_transpose, conv2d_transpose_backward, ConvGeometry, ConvGrads,
    ConvParams, Padding,
};
pub use norm::{
    batch_norm, batch_norm_backward, batch_norm_infer, batch_norm_train, batch_stats,
    normalize_with, update_running_stats, BatchNormParams, BatchStats, NormForward, NormGrads,
    BN_EPSILON, BN_MOMENTUM,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Infer,
}

/// Channel-wise concatenation, `a` first.
pub fn concat_channels<T: crate::Real>(
    a: &crate::Tensor4<T>,
    b: &crate::Tensor4<T>,
) -> crate::Result<crate::Tensor4<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if (sa.n, sa.h, sa.w) != (sb.n, sb.h, sb.w) {
        return Err(crate::Error::Shape(format!(
            "concat needs matching (n, h, w): {sa} vs {sb}"
        )));
    }
    let mut data = Vec::with_capacity(sa.numel() + sb.numel());
    for n in 0..sa.n {
        data.extend_from_slice(a.item(n));
        data.extend_from_slice(b.item(n));
    }
    crate::Tensor4::from_vec(crate::Shape4::new(sa.n, sa.c + sb.c, sa.h, sa.w), data)
}
