//! The DR-Unet104 network: bottleneck encoder, bridge, residual decoder.

pub mod checkpoint;
pub mod config;
pub mod drunet;
pub mod graph;
pub mod init;
pub mod layers;

pub use checkpoint::{Checkpoint, CheckpointHeader, Record, FORMAT_VERSION, MAGIC};
pub use config::{Level, LevelSpec, ModelConfig, LEVELS, MIN_INPUT_EXTENT};
pub use drunet::{DecoderLevel, DrUnet104, EncoderLevel, LayerLedger, TrainForward};
pub use graph::{Graph, InferGraph, ShapeGraph, TrainGraph};
pub use init::he_init;
pub use layers::{
    make_bottleneck_block, make_decoder_block, BottleneckBlock, ConvKind, ConvLayer, DecoderBlock,
    LayerFactory, NormLayer, RunningStats,
};
