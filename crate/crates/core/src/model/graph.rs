//! Execution contexts the network description runs against.
//!
//! The architecture is written once, generically over [`Graph`]. Training
//! records onto a [`Tape`], inference computes owned tensors directly, and
//! [`ShapeGraph`] only propagates shapes.

use std::collections::HashMap;

use rand::Rng;

use super::layers::{ConvLayer, NormLayer, RunningStats};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::ops::{self, BatchStats, ConvGeometry, BN_EPSILON};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{Real, Shape4, Tensor4};

pub trait Graph<T: Real> {
    type Value: Clone;

    fn shape(&self, v: &Self::Value) -> Shape4;
    fn conv(&mut self, layer: &ConvLayer, x: &Self::Value) -> Result<Self::Value>;
    fn upsample(
        &mut self,
        layer: &ConvLayer,
        x: &Self::Value,
        target_hw: (usize, usize),
    ) -> Result<Self::Value>;
    fn norm(&mut self, layer: &NormLayer, x: &Self::Value) -> Result<Self::Value>;
    fn relu(&mut self, x: &Self::Value) -> Self::Value;
    fn dropout(&mut self, x: &Self::Value, rate: f64) -> Result<Self::Value>;
    fn concat(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;

    /// Hook called at level boundaries.
    fn mark(&mut self, _label: &str, _v: &Self::Value) {}
}

/// Direct evaluation with running normalization statistics and no dropout.
pub struct InferGraph<'m, T> {
    params: &'m ParamStore<T>,
    running: &'m [RunningStats<T>],
    pub trace: Vec<(String, Shape4)>,
}

impl<'m, T: Real> InferGraph<'m, T> {
    pub fn new(params: &'m ParamStore<T>, running: &'m [RunningStats<T>]) -> Self {
        Self {
            params,
            running,
            trace: Vec::new(),
        }
    }
}

impl<T: Real> Graph<T> for InferGraph<'_, T> {
    type Value = Tensor4<T>;

    fn shape(&self, v: &Tensor4<T>) -> Shape4 {
        v.shape()
    }

    fn conv(&mut self, l: &ConvLayer, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        ops::conv2d(
            x,
            self.params.get(l.weight),
            self.params.get(l.bias).data(),
            l.stride,
            l.padding,
        )
    }

    fn upsample(
        &mut self,
        l: &ConvLayer,
        x: &Tensor4<T>,
        target_hw: (usize, usize),
    ) -> Result<Tensor4<T>> {
        ops::conv2d_transpose(
            x,
            self.params.get(l.weight),
            self.params.get(l.bias).data(),
            l.stride,
            target_hw,
        )
    }

    fn norm(&mut self, l: &NormLayer, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let stats = &self.running[l.slot];
        ops::normalize_with(
            x,
            self.params.get(l.gamma).data(),
            self.params.get(l.beta).data(),
            &stats.mean,
            &stats.var,
            T::from_f64_lossy(BN_EPSILON),
        )
    }

    fn relu(&mut self, x: &Tensor4<T>) -> Tensor4<T> {
        ops::relu(x)
    }

    fn dropout(&mut self, x: &Tensor4<T>, _rate: f64) -> Result<Tensor4<T>> {
        Ok(x.clone())
    }

    fn concat(&mut self, a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
        ops::concat_channels(a, b)
    }

    fn add(&mut self, a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
        a.zip_map(b, |x, y| x + y)
    }

    fn mark(&mut self, label: &str, v: &Tensor4<T>) {
        self.trace.push((label.to_string(), v.shape()));
    }
}

/// Records every operation on a tape; batch statistics and dropout are live.
pub struct TrainGraph<'a, T, R: ?Sized> {
    params: &'a ParamStore<T>,
    tape: &'a mut Tape<T>,
    rng: &'a mut R,
    param_vars: HashMap<ParamId, Var>,
    /// `(running-stat slot, batch statistics)` in forward order.
    pub norm_updates: Vec<(usize, BatchStats<T>)>,
    pub trace: Vec<(String, Shape4)>,
}

impl<'a, T: Real, R: Rng + ?Sized> TrainGraph<'a, T, R> {
    pub fn new(params: &'a ParamStore<T>, tape: &'a mut Tape<T>, rng: &'a mut R) -> Self {
        Self {
            params,
            tape,
            rng,
            param_vars: HashMap::new(),
            norm_updates: Vec::new(),
            trace: Vec::new(),
        }
    }

    fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let v = self.tape.param(id, self.params.get(id).clone());
        self.param_vars.insert(id, v);
        v
    }
}

impl<T: Real, R: Rng + ?Sized> Graph<T> for TrainGraph<'_, T, R> {
    type Value = Var;

    fn shape(&self, v: &Var) -> Shape4 {
        self.tape.shape(*v)
    }

    fn conv(&mut self, l: &ConvLayer, x: &Var) -> Result<Var> {
        let w = self.param(l.weight);
        let b = self.param(l.bias);
        self.tape.conv2d(*x, w, b, l.stride, l.padding)
    }

    fn upsample(&mut self, l: &ConvLayer, x: &Var, target_hw: (usize, usize)) -> Result<Var> {
        let w = self.param(l.weight);
        let b = self.param(l.bias);
        self.tape.conv2d_transpose(*x, w, b, l.stride, target_hw)
    }

    fn norm(&mut self, l: &NormLayer, x: &Var) -> Result<Var> {
        let gamma = self.param(l.gamma);
        let beta = self.param(l.beta);
        let (out, stats) = self
            .tape
            .batch_norm(*x, gamma, beta, T::from_f64_lossy(BN_EPSILON))?;
        self.norm_updates.push((l.slot, stats));
        Ok(out)
    }

    fn relu(&mut self, x: &Var) -> Var {
        self.tape.relu(*x)
    }

    fn dropout(&mut self, x: &Var, rate: f64) -> Result<Var> {
        if rate == 0.0 {
            return Ok(*x);
        }
        self.tape.dropout(*x, rate, self.rng)
    }

    fn concat(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.tape.concat(*a, *b)
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.tape.add(*a, *b)
    }

    fn mark(&mut self, label: &str, v: &Var) {
        self.trace.push((label.to_string(), self.tape.shape(*v)));
    }
}

/// Shape propagation only; validates every channel and extent on the way.
#[derive(Default)]
pub struct ShapeGraph {
    pub trace: Vec<(String, Shape4)>,
    pub dropout_calls: usize,
    pub concat_calls: usize,
}

impl<T: Real> Graph<T> for ShapeGraph {
    type Value = Shape4;

    fn shape(&self, v: &Shape4) -> Shape4 {
        *v
    }

    fn conv(&mut self, l: &ConvLayer, x: &Shape4) -> Result<Shape4> {
        if x.c != l.in_ch {
            return Err(Error::Shape(format!(
                "{}: input {x} has {} channels, layer expects {}",
                l.name, x.c, l.in_ch
            )));
        }
        let g = ConvGeometry::conv(x.h, x.w, l.kernel, l.kernel, l.stride, l.padding)?;
        Ok(Shape4::new(x.n, l.out_ch, g.out_h, g.out_w))
    }

    fn upsample(&mut self, l: &ConvLayer, x: &Shape4, target_hw: (usize, usize)) -> Result<Shape4> {
        if x.c != l.in_ch {
            return Err(Error::Shape(format!(
                "{}: input {x} has {} channels, layer expects {}",
                l.name, x.c, l.in_ch
            )));
        }
        ConvGeometry::transposed(
            x.h,
            x.w,
            l.kernel,
            l.kernel,
            l.stride,
            target_hw.0,
            target_hw.1,
        )?;
        Ok(Shape4::new(x.n, l.out_ch, target_hw.0, target_hw.1))
    }

    fn norm(&mut self, l: &NormLayer, x: &Shape4) -> Result<Shape4> {
        if x.c != l.channels {
            return Err(Error::Shape(format!(
                "{}: {} channels into a {}-channel norm",
                l.name, x.c, l.channels
            )));
        }
        Ok(*x)
    }

    fn relu(&mut self, x: &Shape4) -> Shape4 {
        *x
    }

    fn dropout(&mut self, x: &Shape4, _rate: f64) -> Result<Shape4> {
        self.dropout_calls += 1;
        Ok(*x)
    }

    fn concat(&mut self, a: &Shape4, b: &Shape4) -> Result<Shape4> {
        self.concat_calls += 1;
        if (a.n, a.h, a.w) != (b.n, b.h, b.w) {
            return Err(Error::Shape(format!(
                "concat needs matching (n, h, w): {a} vs {b}"
            )));
        }
        Ok(Shape4::new(a.n, a.c + b.c, a.h, a.w))
    }

    fn add(&mut self, a: &Shape4, b: &Shape4) -> Result<Shape4> {
        if a != b {
            return Err(Error::Shape(format!("add: shapes {a} and {b} differ")));
        }
        Ok(*a)
    }

    fn mark(&mut self, label: &str, v: &Shape4) {
        self.trace.push((label.to_string(), *v));
    }
}
