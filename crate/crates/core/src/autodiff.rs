//! Reverse-mode differentiation over a linear tape of recorded operations.
//!
//! Every operation appends one node holding its output value and whatever it
//! needs for the backward pass. Node indices are therefore a topological
//! order, and [`Tape::backward`] walks them in exact reverse.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::ops::{self, BatchStats, Padding};
use crate::params::ParamId;
use crate::tensor::{Real, Shape4, Tensor4};

/// Handle of a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) enum Op<T> {
    Leaf {
        param: Option<ParamId>,
    },
    Conv2d {
        x: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: Padding,
    },
    ConvTranspose2d {
        x: Var,
        weight: Var,
        bias: Var,
        stride: usize,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Tensor4<T>,
        inv_std: Vec<T>,
    },
    Relu {
        x: Var,
    },
    Dropout {
        x: Var,
        mask: Tensor4<T>,
    },
    Concat {
        a: Var,
        b: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Softmax {
        x: Var,
    },
    SparseCe {
        logits: Var,
        /// Softmax probabilities of `logits`.
        probs: Tensor4<T>,
        labels: Vec<usize>,
        /// Pixels whose log-probability hit the floor carry no gradient.
        clamped: Vec<bool>,
    },
    Sum {
        x: Var,
    },
    WeightedSum {
        x: Var,
        weights: Tensor4<T>,
    },
}

impl<T> Op<T> {
    fn kind(&self) -> &'static str {
        match self {
            Op::Leaf { .. } => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::ConvTranspose2d { .. } => "conv2d_transpose",
            Op::BatchNorm { .. } => "batch_norm",
            Op::Relu { .. } => "relu",
            Op::Dropout { .. } => "dropout",
            Op::Concat { .. } => "concat",
            Op::Add { .. } => "add",
            Op::Softmax { .. } => "softmax",
            Op::SparseCe { .. } => "sparse_ce",
            Op::Sum { .. } => "sum",
            Op::WeightedSum { .. } => "weighted_sum",
        }
    }
}

struct Node<T> {
    value: Tensor4<T>,
    op: Op<T>,
}

/// Recorded forward computation.
pub struct Tape<T = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor4<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape4 {
        self.nodes[v.0].value.shape()
    }

    /// Name of the operation that produced `v`.
    pub fn op_kind(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.kind()
    }

    pub(crate) fn push(&mut self, value: Tensor4<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// A constant or input; its gradient is still reported by backward.
    pub fn leaf(&mut self, value: Tensor4<T>) -> Var {
        self.push(value, Op::Leaf { param: None })
    }

    /// A trainable parameter; backward reports its gradient under `id`.
    pub fn param(&mut self, id: ParamId, value: Tensor4<T>) -> Var {
        self.push(value, Op::Leaf { param: Some(id) })
    }

    pub fn conv2d(
        &mut self,
        x: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: Padding,
    ) -> Result<Var> {
        let out = ops::conv2d(
            self.value(x),
            self.value(weight),
            self.value(bias).data(),
            stride,
            padding,
        )?;
        Ok(self.push(
            out,
            Op::Conv2d {
                x,
                weight,
                bias,
                stride,
                padding,
            },
        ))
    }

    /// Stride-2 transposed convolution cropped top-left to `target_hw`.
    /// `weight` is laid out `(in_ch, out_ch, kh, kw)`.
    pub fn conv2d_transpose(
        &mut self,
        x: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        target_hw: (usize, usize),
    ) -> Result<Var> {
        let out = ops::conv2d_transpose(
            self.value(x),
            self.value(weight),
            self.value(bias).data(),
            stride,
            target_hw,
        )?;
        Ok(self.push(
            out,
            Op::ConvTranspose2d {
                x,
                weight,
                bias,
                stride,
            },
        ))
    }

    /// Train-mode batch normalization. The batch statistics are returned so
    /// the caller can fold them into its running averages.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        epsilon: T,
    ) -> Result<(Var, BatchStats<T>)> {
        let fwd = ops::batch_norm_train(
            self.value(x),
            self.value(gamma).data(),
            self.value(beta).data(),
            epsilon,
        )?;
        let var = self.push(
            fwd.output,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                normalized: fwd.normalized,
                inv_std: fwd.inv_std,
            },
        );
        Ok((var, fwd.stats))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = ops::relu(self.value(x));
        self.push(out, Op::Relu { x })
    }

    /// Inverted dropout with a freshly drawn mask.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, rng: &mut R) -> Result<Var> {
        let mask = ops::dropout_mask(self.shape(x), rate, rng)?;
        self.dropout_with_mask(x, mask)
    }

    /// Dropout with caller-supplied multipliers (0 or `1 / (1 - rate)`).
    pub fn dropout_with_mask(&mut self, x: Var, mask: Tensor4<T>) -> Result<Var> {
        let out = self.value(x).zip_map(&mask, |v, m| v * m)?;
        Ok(self.push(out, Op::Dropout { x, mask }))
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::concat_channels(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Concat { a, b }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.push(out, Op::Add { a, b }))
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let out = ops::softmax_channels(self.value(x));
        self.push(out, Op::Softmax { x })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).sum();
        self.push(Tensor4::scalar(total), Op::Sum { x })
    }

    /// `sum(x * weights)` for a constant `weights` tensor.
    pub fn weighted_sum(&mut self, x: Var, weights: Tensor4<T>) -> Result<Var> {
        let value = self.value(x);
        value.expect_same_shape(&weights, "weighted_sum")?;
        let total = value
            .data()
            .iter()
            .zip(weights.data())
            .map(|(&a, &b)| a * b)
            .sum();
        Ok(self.push(Tensor4::scalar(total), Op::WeightedSum { x, weights }))
    }

    /// Propagate from the scalar `loss` back to every leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let loss_shape = self.shape(loss);
        if loss_shape.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {loss_shape}"
            )));
        }
        let mut grads: Vec<Option<Tensor4<T>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Tensor4::ones(loss_shape));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if let Op::Leaf { .. } = node.op {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(&node.op, &node.value, g, &mut grads)?;
        }

        let mut params = HashMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Leaf { param: Some(id) } = node.op {
                if grads[i].is_none() {
                    grads[i] = Some(Tensor4::zeros(node.value.shape()));
                }
                params.insert(id, i);
            }
        }
        Ok(Gradients { grads, params })
    }

    fn propagate(
        &self,
        op: &Op<T>,
        out: &Tensor4<T>,
        g: Tensor4<T>,
        grads: &mut [Option<Tensor4<T>>],
    ) -> Result<()> {
        match op {
            Op::Leaf { .. } => {}
            Op::Conv2d {
                x,
                weight,
                bias,
                stride,
                padding,
            } => {
                let w = self.value(*weight);
                let d = ops::conv2d_backward(self.value(*x), w, *stride, *padding, &g)?;
                accumulate(grads, *x, d.input)?;
                accumulate(grads, *weight, d.weight)?;
                let bias_shape = self.shape(*bias);
                accumulate(grads, *bias, Tensor4::from_vec(bias_shape, d.bias)?)?;
            }
            Op::ConvTranspose2d {
                x,
                weight,
                bias,
                stride,
            } => {
                let w = self.value(*weight);
                let d = ops::conv2d_transpose_backward(self.value(*x), w, *stride, &g)?;
                accumulate(grads, *x, d.input)?;
                accumulate(grads, *weight, d.weight)?;
                let bias_shape = self.shape(*bias);
                accumulate(grads, *bias, Tensor4::from_vec(bias_shape, d.bias)?)?;
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            } => {
                let d =
                    ops::batch_norm_backward(&g, normalized, inv_std, self.value(*gamma).data())?;
                accumulate(grads, *x, d.input)?;
                let gs = self.shape(*gamma);
                accumulate(grads, *gamma, Tensor4::from_vec(gs, d.gamma)?)?;
                let bs = self.shape(*beta);
                accumulate(grads, *beta, Tensor4::from_vec(bs, d.beta)?)?;
            }
            Op::Relu { x } => {
                let dx = ops::relu_backward(self.value(*x), &g)?;
                accumulate(grads, *x, dx)?;
            }
            Op::Dropout { x, mask } => {
                let dx = g.zip_map(mask, |a, m| a * m)?;
                accumulate(grads, *x, dx)?;
            }
            Op::Concat { a, b } => {
                let ca = self.shape(*a).c;
                let total = g.shape().c;
                accumulate(grads, *a, g.slice_channels(0, ca)?)?;
                accumulate(grads, *b, g.slice_channels(ca, total)?)?;
            }
            Op::Add { a, b } => {
                if a == b {
                    accumulate(grads, *a, g.map(|v| v + v))?;
                } else {
                    accumulate(grads, *a, g.clone())?;
                    accumulate(grads, *b, g)?;
                }
            }
            Op::Softmax { x } => {
                let dx = ops::softmax_backward(out, &g)?;
                accumulate(grads, *x, dx)?;
            }
            Op::SparseCe {
                logits,
                probs,
                labels,
                clamped,
            } => {
                let scale = g.to_scalar()?;
                let dx = crate::train::loss::sparse_ce_grad(probs, labels, clamped, scale);
                accumulate(grads, *logits, dx)?;
            }
            Op::Sum { x } => {
                let scale = g.to_scalar()?;
                accumulate(grads, *x, Tensor4::full(self.shape(*x), scale))?;
            }
            Op::WeightedSum { x, weights } => {
                let scale = g.to_scalar()?;
                accumulate(grads, *x, weights.map(|w| w * scale))?;
            }
        }
        Ok(())
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor4<T>>], v: Var, g: Tensor4<T>) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Gradients of a scalar with respect to every leaf of a tape.
pub struct Gradients<T = f32> {
    grads: Vec<Option<Tensor4<T>>>,
    params: HashMap<ParamId, usize>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of a leaf; `None` if the leaf does not reach the loss.
    pub fn wrt(&self, v: Var) -> Option<&Tensor4<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of a parameter recorded on the tape. Recorded parameters the
    /// loss does not depend on report zeros; parameters never recorded
    /// report `None`.
    pub fn param(&self, id: ParamId) -> Option<&Tensor4<T>> {
        self.params.get(&id).and_then(|&i| self.grads[i].as_ref())
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.params.keys().copied()
    }
}
