//! Loss, optimizer, augmentation, the training loop and prediction.

pub mod adam;
pub mod augment;
pub mod dataset;
pub mod loss;
pub mod predict;
pub mod trainer;

pub use adam::{adam_update, Adam, AdamConfig, AdamState, Moments};
pub use augment::{apply_flips, augment_flip, Flip};
pub use dataset::{make_batch, sample_tensor, LabeledSlice, INPUT_SCALE};
pub use loss::{sparse_ce_loss, PROB_FLOOR};
pub use predict::{predict_classes, predict_subject, predict_volume};
pub use trainer::{epoch_batches, loss_history_csv, train, train_step, TrainConfig, Trainer};
