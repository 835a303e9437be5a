//! The assembled encoder / bridge / decoder network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Level, ModelConfig, MIN_INPUT_EXTENT};
use super::graph::{Graph, InferGraph, ShapeGraph, TrainGraph};
use super::layers::{
    make_bottleneck_block, make_decoder_block, BottleneckBlock, ConvKind, ConvLayer, DecoderBlock,
    LayerFactory, NormLayer, RunningStats,
};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::ops::{BatchStats, Mode, BN_MOMENTUM};
use crate::params::ParamStore;
use crate::tensor::{Real, Shape4, Tensor4};

#[derive(Clone, Debug)]
pub struct EncoderLevel {
    pub level: Level,
    pub blocks: Vec<BottleneckBlock>,
}

#[derive(Clone, Debug)]
pub struct DecoderLevel {
    /// Encoder level whose output this level concatenates.
    pub level: u8,
    pub upsample: ConvLayer,
    pub block: DecoderBlock,
}

/// Convolution counts by network part.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerLedger {
    pub encoder_bridge: usize,
    pub decoder: usize,
    pub head: usize,
}

impl LayerLedger {
    pub fn total(&self) -> usize {
        self.encoder_bridge + self.decoder + self.head
    }
}

/// Output of a recorded (train-mode) forward pass.
pub struct TrainForward<T> {
    pub logits: Var,
    /// Batch statistics to fold into the running averages once the step is
    /// accepted; see [`DrUnet104::apply_norm_updates`].
    pub norm_updates: Vec<(usize, BatchStats<T>)>,
    pub trace: Vec<(String, Shape4)>,
}

#[derive(Clone, Debug)]
pub struct DrUnet104<T = f32> {
    config: ModelConfig,
    encoder: Vec<EncoderLevel>,
    bridge: Vec<BottleneckBlock>,
    /// Deepest level first.
    decoder: Vec<DecoderLevel>,
    head: ConvLayer,
    params: ParamStore<T>,
    running: Vec<RunningStats<T>>,
}

impl<T: Real> DrUnet104<T> {
    /// He-initialized weights, zero biases, unit gamma and zero beta.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut running = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut f = LayerFactory {
            params: &mut params,
            running: &mut running,
            rng: &mut rng,
        };

        let levels = config.levels();
        let mut in_ch = config.in_channels;
        let mut encoder = Vec::new();
        let mut bridge = Vec::new();
        for spec in &levels {
            let mut blocks = Vec::with_capacity(spec.encoder_block_count);
            for index in 0..spec.encoder_block_count {
                let block =
                    make_bottleneck_block(&mut f, spec, index, in_ch, spec.stride_for(index))?;
                in_ch = block.out_channels();
                blocks.push(block);
            }
            match spec.level {
                Level::Encoder(_) => encoder.push(EncoderLevel {
                    level: spec.level,
                    blocks,
                }),
                Level::Bridge => bridge = blocks,
            }
        }

        let mut decoder = Vec::new();
        for spec in levels[..5].iter().rev() {
            let Level::Encoder(l) = spec.level else {
                unreachable!()
            };
            let width = spec
                .decoder_channels
                .expect("encoder levels have a decoder");
            let upsample = f.conv(
                &format!("dec{l}.up"),
                ConvKind::Transposed,
                in_ch,
                width,
                2,
                2,
            )?;
            let block = make_decoder_block(
                &mut f,
                &format!("dec{l}.block"),
                width + spec.expand_channels(),
                width,
            )?;
            in_ch = width;
            decoder.push(DecoderLevel {
                level: l,
                upsample,
                block,
            });
        }
        let head = f.conv("head", ConvKind::Head, in_ch, config.n_class, 1, 1)?;

        Ok(Self {
            config,
            encoder,
            bridge,
            decoder,
            head,
            params,
            running,
        })
    }

    /// The published network with the given class count, dropout rate and seed.
    pub fn build(in_channels: usize, n_class: usize, dropout_rate: f64, seed: u64) -> Result<Self> {
        Self::new(ModelConfig {
            in_channels,
            n_class,
            dropout_rate,
            width_divisor: 1,
            seed,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn running_stats(&self) -> &[RunningStats<T>] {
        &self.running
    }

    pub fn running_stats_mut(&mut self) -> &mut [RunningStats<T>] {
        &mut self.running
    }

    pub fn encoder(&self) -> &[EncoderLevel] {
        &self.encoder
    }

    pub fn bridge(&self) -> &[BottleneckBlock] {
        &self.bridge
    }

    pub fn decoder(&self) -> &[DecoderLevel] {
        &self.decoder
    }

    pub fn head(&self) -> &ConvLayer {
        &self.head
    }

    pub fn conv_layers(&self) -> impl Iterator<Item = &ConvLayer> {
        let enc = self
            .encoder
            .iter()
            .flat_map(|l| l.blocks.iter())
            .chain(&self.bridge)
            .flat_map(BottleneckBlock::convs);
        let dec = self
            .decoder
            .iter()
            .flat_map(|d| std::iter::once(&d.upsample).chain(d.block.convs()));
        enc.chain(dec).chain(std::iter::once(&self.head))
    }

    pub fn norm_layers(&self) -> impl Iterator<Item = &NormLayer> {
        let enc = self
            .encoder
            .iter()
            .flat_map(|l| l.blocks.iter())
            .chain(&self.bridge)
            .flat_map(BottleneckBlock::norms);
        enc.chain(self.decoder.iter().flat_map(|d| d.block.norms()))
    }

    pub fn layer_ledger(&self) -> LayerLedger {
        let counted =
            |it: &mut dyn Iterator<Item = &ConvLayer>| it.filter(|c| c.is_counted()).count();
        let encoder_bridge = counted(
            &mut self
                .encoder
                .iter()
                .flat_map(|l| l.blocks.iter())
                .chain(&self.bridge)
                .flat_map(BottleneckBlock::convs),
        );
        let decoder = counted(&mut self.decoder.iter().flat_map(|d| d.block.convs()));
        LayerLedger {
            encoder_bridge,
            decoder,
            head: usize::from(self.head.is_counted()),
        }
    }

    /// Main-path convolutions plus the head; projections and upsampling
    /// are excluded.
    pub fn count_conv_layers(&self) -> usize {
        self.layer_ledger().total()
    }

    /// Trainable scalars (running statistics excluded).
    pub fn parameter_count(&self) -> usize {
        self.params.scalar_count()
    }

    fn probe(&self) -> ShapeGraph {
        let mut g = ShapeGraph::default();
        let input = Shape4::new(
            1,
            self.config.in_channels,
            MIN_INPUT_EXTENT,
            MIN_INPUT_EXTENT,
        );
        self.run(&mut g, &input)
            .expect("minimum-size input propagates through a valid model");
        g
    }

    /// Dropout operations executed by one forward pass.
    pub fn dropout_sites(&self) -> usize {
        self.probe().dropout_calls
    }

    /// Encoder-to-decoder concatenations executed by one forward pass.
    pub fn skip_connections(&self) -> usize {
        self.probe().concat_calls
    }

    fn check_input(&self, s: Shape4) -> Result<()> {
        if s.c != self.config.in_channels {
            return Err(Error::Shape(format!(
                "model expects {} input channels, got input {s}",
                self.config.in_channels
            )));
        }
        if s.h < MIN_INPUT_EXTENT || s.w < MIN_INPUT_EXTENT {
            return Err(Error::Shape(format!(
                "input {s} is smaller than {MIN_INPUT_EXTENT}x{MIN_INPUT_EXTENT}"
            )));
        }
        Ok(())
    }

    /// The network description, shared by every execution context.
    pub fn run<G: Graph<T>>(&self, g: &mut G, x: &G::Value) -> Result<G::Value> {
        self.check_input(g.shape(x))?;
        let rate = self.config.dropout_rate;
        let mut skips = Vec::with_capacity(self.encoder.len());
        let mut h = x.clone();
        for level in &self.encoder {
            for block in &level.blocks {
                h = block.forward(g, &h)?;
            }
            h = g.dropout(&h, rate)?;
            g.mark(&level.level.to_string(), &h);
            skips.push(h.clone());
        }
        for block in &self.bridge {
            h = block.forward(g, &h)?;
        }
        g.mark("bridge", &h);
        for (level, skip) in self.decoder.iter().zip(skips.iter().rev()) {
            let s = g.shape(skip);
            let up = g.upsample(&level.upsample, &h, (s.h, s.w))?;
            let joined = g.concat(&up, skip)?;
            g.mark(&format!("concat {}", level.level), &joined);
            h = level.block.forward(g, &joined)?;
            h = g.dropout(&h, rate)?;
            g.mark(&format!("decoder {}", level.level), &h);
        }
        g.conv(&self.head, &h)
    }

    /// Inference: running statistics, no dropout, nothing recorded.
    pub fn forward_infer(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let mut g = InferGraph::new(&self.params, &self.running);
        self.run(&mut g, x)
    }

    /// Inference that also reports the shape at every level boundary.
    pub fn forward_infer_traced(
        &self,
        x: &Tensor4<T>,
    ) -> Result<(Tensor4<T>, Vec<(String, Shape4)>)> {
        let mut g = InferGraph::new(&self.params, &self.running);
        let out = self.run(&mut g, x)?;
        Ok((out, g.trace))
    }

    /// Training forward pass recorded onto `tape`. Running statistics are
    /// left untouched until [`Self::apply_norm_updates`].
    pub fn forward_train<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<T>,
        x: Var,
        rng: &mut R,
    ) -> Result<TrainForward<T>> {
        let mut g = TrainGraph::new(&self.params, tape, rng);
        let logits = self.run(&mut g, &x)?;
        Ok(TrainForward {
            logits,
            norm_updates: g.norm_updates,
            trace: g.trace,
        })
    }

    /// Mode-dispatching forward. Train mode uses batch statistics, applies
    /// dropout and updates the running averages; the tape is discarded.
    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        x: &Tensor4<T>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Tensor4<T>> {
        match mode {
            Mode::Infer => self.forward_infer(x),
            Mode::Train => {
                let mut tape = Tape::new();
                let input = tape.leaf(x.clone());
                let fwd = self.forward_train(&mut tape, input, rng)?;
                self.apply_norm_updates(&fwd.norm_updates);
                Ok(tape.value(fwd.logits).clone())
            }
        }
    }

    pub fn apply_norm_updates(&mut self, updates: &[(usize, BatchStats<T>)]) {
        let keep = T::from_f64_lossy(BN_MOMENTUM);
        let take = T::one() - keep;
        for (slot, stats) in updates {
            let r = &mut self.running[*slot];
            for (m, &b) in r.mean.iter_mut().zip(&stats.mean) {
                *m = keep * *m + take * b;
            }
            for (v, &b) in r.var.iter_mut().zip(&stats.var) {
                *v = keep * *v + take * b;
            }
        }
    }

    /// Shape at every level boundary for an input of shape `input`, without
    /// computing any values.
    pub fn trace_shapes(&self, input: Shape4) -> Result<(Shape4, Vec<(String, Shape4)>)> {
        let mut g = ShapeGraph::default();
        let out = self.run(&mut g, &input)?;
        Ok((out, g.trace))
    }
}
