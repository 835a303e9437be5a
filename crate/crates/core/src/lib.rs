//! Core of the DR-Unet104 segmentation engine: tensors and reverse-mode
//! autodiff, the network, training, slice data handling and evaluation
//! metrics.

// `!(x > 0.0)` is how NaN gets rejected along with the non-positive case.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::type_complexity)]

pub mod autodiff;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod params;
pub mod tensor;
pub mod train;

pub use autodiff::{Gradients, Tape, Var};
pub use error::{Error, Result};
pub use model::{Checkpoint, DrUnet104, ModelConfig};
pub use ops::{ClassMap, Mode};
pub use params::{ParamId, ParamStore};
pub use tensor::{Real, Shape4, Tensor4};
