//! Layer handles and the residual blocks built from them.

use rand::Rng;

use super::config::{Level, LevelSpec};
use super::graph::Graph;
use super::init::he_init;
use crate::error::{Error, Result};
use crate::ops::Padding;
use crate::params::{ParamId, ParamStore};
use crate::tensor::{Real, Tensor4};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConvKind {
    /// Main-path convolution; counted in the layer ledger.
    Plain,
    /// 1x1 shortcut projection; not counted.
    Projection,
    /// 2x2 stride-2 upsampling; not counted.
    Transposed,
    /// Final 1x1 classifier; counted.
    Head,
}

#[derive(Clone, Debug)]
pub struct ConvLayer {
    pub name: String,
    pub kind: ConvKind,
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: Padding,
}

impl ConvLayer {
    pub fn is_counted(&self) -> bool {
        matches!(self.kind, ConvKind::Plain | ConvKind::Head)
    }
}

#[derive(Clone, Debug)]
pub struct NormLayer {
    pub name: String,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub channels: usize,
    /// Index into the model's running statistics.
    pub slot: usize,
}

/// Per-channel running mean and (biased) variance.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// Registers parameters while a network is being assembled.
pub struct LayerFactory<'a, T, R: ?Sized> {
    pub params: &'a mut ParamStore<T>,
    pub running: &'a mut Vec<RunningStats<T>>,
    pub rng: &'a mut R,
}

impl<T: Real, R: Rng + ?Sized> LayerFactory<'_, T, R> {
    pub fn conv(
        &mut self,
        name: &str,
        kind: ConvKind,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
    ) -> Result<ConvLayer> {
        let (shape, fan_in) = match kind {
            // (in_ch, out_ch, k, k): the adjoint of a conv mapping out_ch -> in_ch
            ConvKind::Transposed => ([in_ch, out_ch, kernel, kernel], in_ch * kernel * kernel),
            _ => ([out_ch, in_ch, kernel, kernel], in_ch * kernel * kernel),
        };
        let weight = he_init::<T, R>(fan_in, shape, self.rng)?;
        let weight = self.params.insert(format!("{name}.weight"), weight)?;
        let bias = self
            .params
            .insert(format!("{name}.bias"), Tensor4::zeros([1, out_ch, 1, 1]))?;
        Ok(ConvLayer {
            name: name.to_string(),
            kind,
            weight,
            bias,
            in_ch,
            out_ch,
            kernel,
            stride,
            padding: Padding::SameCeil,
        })
    }

    pub fn norm(&mut self, name: &str, channels: usize) -> Result<NormLayer> {
        let gamma = self
            .params
            .insert(format!("{name}.gamma"), Tensor4::ones([1, channels, 1, 1]))?;
        let beta = self
            .params
            .insert(format!("{name}.beta"), Tensor4::zeros([1, channels, 1, 1]))?;
        self.running.push(RunningStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        });
        Ok(NormLayer {
            name: name.to_string(),
            gamma,
            beta,
            channels,
            slot: self.running.len() - 1,
        })
    }
}

/// Pre-activation bottleneck: three BN-ReLU-conv stages (1x1 reduce,
/// 3x3, 1x1 expand x4) plus a shortcut.
#[derive(Clone, Debug)]
pub struct BottleneckBlock {
    pub norm_in: NormLayer,
    pub reduce: ConvLayer,
    pub norm_mid: NormLayer,
    pub spatial: ConvLayer,
    pub norm_out: NormLayer,
    pub expand: ConvLayer,
    /// Present when channels or stride change; fed by the shared
    /// pre-activation.
    pub projection: Option<ConvLayer>,
}

impl BottleneckBlock {
    pub fn out_channels(&self) -> usize {
        self.expand.out_ch
    }

    pub fn convs(&self) -> impl Iterator<Item = &ConvLayer> {
        [&self.reduce, &self.spatial, &self.expand]
            .into_iter()
            .chain(self.projection.as_ref())
    }

    pub fn norms(&self) -> [&NormLayer; 3] {
        [&self.norm_in, &self.norm_mid, &self.norm_out]
    }

    pub fn forward<T: Real, G: Graph<T>>(&self, g: &mut G, x: &G::Value) -> Result<G::Value> {
        let pre = g.norm(&self.norm_in, x)?;
        let pre = g.relu(&pre);
        let h = g.conv(&self.reduce, &pre)?;
        let h = g.norm(&self.norm_mid, &h)?;
        let h = g.relu(&h);
        let h = g.conv(&self.spatial, &h)?;
        let h = g.norm(&self.norm_out, &h)?;
        let h = g.relu(&h);
        let h = g.conv(&self.expand, &h)?;
        let shortcut = match &self.projection {
            Some(p) => g.conv(p, &pre)?,
            None => x.clone(),
        };
        g.add(&h, &shortcut)
    }
}

/// Builds block `index` of `spec`'s stack.
///
/// Only the first block of a downsampling level may stride.
pub fn make_bottleneck_block<T: Real, R: Rng + ?Sized>(
    f: &mut LayerFactory<'_, T, R>,
    spec: &LevelSpec,
    index: usize,
    in_ch: usize,
    stride: usize,
) -> Result<BottleneckBlock> {
    if !(1..=2).contains(&stride) {
        return Err(Error::Config(format!("stride {stride} not in {{1, 2}}")));
    }
    if stride != spec.stride_for(index) {
        return Err(Error::Config(format!(
            "block {index} of {} must use stride {}, got {stride}",
            spec.level,
            spec.stride_for(index)
        )));
    }
    let (reduce, spatial, expand) = spec.bottleneck_channels;
    let prefix = match spec.level {
        Level::Encoder(l) => format!("enc{l}.block{index}"),
        Level::Bridge => format!("bridge.block{index}"),
    };
    let norm_in = f.norm(&format!("{prefix}.bn_in"), in_ch)?;
    let reduce_conv = f.conv(
        &format!("{prefix}.reduce"),
        ConvKind::Plain,
        in_ch,
        reduce,
        1,
        stride,
    )?;
    let norm_mid = f.norm(&format!("{prefix}.bn_mid"), reduce)?;
    let spatial_conv = f.conv(
        &format!("{prefix}.spatial"),
        ConvKind::Plain,
        reduce,
        spatial,
        3,
        1,
    )?;
    let norm_out = f.norm(&format!("{prefix}.bn_out"), spatial)?;
    let expand_conv = f.conv(
        &format!("{prefix}.expand"),
        ConvKind::Plain,
        spatial,
        expand,
        1,
        1,
    )?;
    let projection = if in_ch != expand || stride != 1 {
        Some(f.conv(
            &format!("{prefix}.projection"),
            ConvKind::Projection,
            in_ch,
            expand,
            1,
            stride,
        )?)
    } else {
        None
    };
    Ok(BottleneckBlock {
        norm_in,
        reduce: reduce_conv,
        norm_mid,
        spatial: spatial_conv,
        norm_out,
        expand: expand_conv,
        projection,
    })
}

/// Pre-activation residual block of two 3x3 convolutions.
#[derive(Clone, Debug)]
pub struct DecoderBlock {
    pub norm_in: NormLayer,
    pub conv_in: ConvLayer,
    pub norm_mid: NormLayer,
    pub conv_out: ConvLayer,
    pub projection: Option<ConvLayer>,
}

impl DecoderBlock {
    pub fn convs(&self) -> impl Iterator<Item = &ConvLayer> {
        [&self.conv_in, &self.conv_out]
            .into_iter()
            .chain(self.projection.as_ref())
    }

    pub fn norms(&self) -> [&NormLayer; 2] {
        [&self.norm_in, &self.norm_mid]
    }

    pub fn forward<T: Real, G: Graph<T>>(&self, g: &mut G, x: &G::Value) -> Result<G::Value> {
        let pre = g.norm(&self.norm_in, x)?;
        let pre = g.relu(&pre);
        let h = g.conv(&self.conv_in, &pre)?;
        let h = g.norm(&self.norm_mid, &h)?;
        let h = g.relu(&h);
        let h = g.conv(&self.conv_out, &h)?;
        let shortcut = match &self.projection {
            Some(p) => g.conv(p, &pre)?,
            None => x.clone(),
        };
        g.add(&h, &shortcut)
    }
}

pub fn make_decoder_block<T: Real, R: Rng + ?Sized>(
    f: &mut LayerFactory<'_, T, R>,
    prefix: &str,
    in_ch: usize,
    out_ch: usize,
) -> Result<DecoderBlock> {
    let norm_in = f.norm(&format!("{prefix}.bn_in"), in_ch)?;
    let conv_in = f.conv(
        &format!("{prefix}.conv_in"),
        ConvKind::Plain,
        in_ch,
        out_ch,
        3,
        1,
    )?;
    let norm_mid = f.norm(&format!("{prefix}.bn_mid"), out_ch)?;
    let conv_out = f.conv(
        &format!("{prefix}.conv_out"),
        ConvKind::Plain,
        out_ch,
        out_ch,
        3,
        1,
    )?;
    let projection = if in_ch != out_ch {
        Some(f.conv(
            &format!("{prefix}.projection"),
            ConvKind::Projection,
            in_ch,
            out_ch,
            1,
            1,
        )?)
    } else {
        None
    };
    Ok(DecoderBlock {
        norm_in,
        conv_in,
        norm_mid,
        conv_out,
        projection,
    })
}
