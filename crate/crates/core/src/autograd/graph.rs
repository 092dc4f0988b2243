//! Tape-based reverse-mode differentiation.
//!
//! Every op appends a node holding its forward value; nodes are therefore
//! stored in topological order and `backward` is one reverse sweep.

use rand::Rng;

use super::conv::{self, ConvSpec};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Lower/upper clamp applied to probabilities before the BCE logarithm.
pub const BCE_CLAMP: f32 = 1e-7;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule of a user-supplied op: receives the input values, the
/// forward output and the upstream gradient, returns one optional gradient
/// per input.
pub type CustomBackward = Box<dyn Fn(&[&Tensor], &Tensor, &[f32]) -> Vec<Option<Vec<f32>>>>;

enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        spec: ConvSpec,
    },
    ConvTranspose2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        spec: ConvSpec,
    },
    LeakyRelu {
        input: Var,
        slope: f32,
    },
    Tanh {
        input: Var,
    },
    Sigmoid {
        input: Var,
    },
    Dropout {
        input: Var,
        mask: Vec<f32>,
    },
    Concat {
        a: Var,
        b: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Scale {
        input: Var,
        factor: f32,
    },
    WeightedSum {
        input: Var,
        weights: Vec<f32>,
    },
    Bce {
        input: Var,
        real: bool,
    },
    L1 {
        a: Var,
        b: Var,
    },
    Custom {
        inputs: Vec<Var>,
        backward: CustomBackward,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    /// f64 value of scalar reductions before rounding to f32.
    precise: Option<f64>,
}

/// A single forward/backward computation.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f32>>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            precise: None,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    /// Fingerprint of which side of each non-differentiable point every
    /// piecewise op currently sits on (leaky-ReLU inputs, L1 residual
    /// signs, BCE clamp region). Two evaluations with equal patterns lie on
    /// one smooth piece of the loss.
    pub fn kink_pattern(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |bit: u8| h = (h ^ bit as u64).wrapping_mul(0x0100_0000_01b3);
        for node in &self.nodes {
            match &node.op {
                Op::LeakyRelu { input, .. } => {
                    self.nodes[input.0]
                        .value
                        .data()
                        .iter()
                        .for_each(|&v| mix((v > 0.0) as u8));
                }
                Op::L1 { a, b } => {
                    let (x, y) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
                    x.iter()
                        .zip(y)
                        .for_each(|(p, q)| mix((p - q).partial_cmp(&0.0).map_or(3, |o| o as i8 as u8)));
                }
                Op::Bce { input, .. } => {
                    self.nodes[input.0]
                        .value
                        .data()
                        .iter()
                        .for_each(|&v| mix((BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&v) as u8));
                }
                _ => {}
            }
        }
        h
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Input whose gradient is tracked.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.needs(v)
    }

    /// Gradient of the last `backward` loss with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f32]> {
        self.grads[v.0].as_deref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<f32>> {
        self.grads[v.0].take()
    }

    /// Scalar value of a loss node.
    pub fn scalar(&self, v: Var) -> f32 {
        self.value(v).data()[0]
    }

    /// Scalar value of a loss node, at f64 precision where the op
    /// reduced in f64.
    pub fn scalar_f64(&self, v: Var) -> f64 {
        self.nodes[v.0].precise.unwrap_or(self.value(v).data()[0] as f64)
    }

    fn push_scalar(&mut self, value: f64, op: Op, requires_grad: bool) -> Var {
        let v = self.push(Tensor::scalar(value as f32), op, requires_grad);
        self.nodes[v.0].precise = Some(value);
        v
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, spec: &ConvSpec) -> Result<Var> {
        let out = conv::conv2d_forward(self.value(input), self.value(weight), bias.map(|b| self.value(b)), spec)?;
        let rg = self.needs(input) || self.needs(weight) || bias.is_some_and(|b| self.needs(b));
        Ok(self.push(
            out,
            Op::Conv2d {
                input,
                weight,
                bias,
                spec: *spec,
            },
            rg,
        ))
    }

    pub fn conv_transpose2d(&mut self, input: Var, weight: Var, bias: Option<Var>, spec: &ConvSpec) -> Result<Var> {
        let out =
            conv::conv_transpose2d_forward(self.value(input), self.value(weight), bias.map(|b| self.value(b)), spec)?;
        let rg = self.needs(input) || self.needs(weight) || bias.is_some_and(|b| self.needs(b));
        Ok(self.push(
            out,
            Op::ConvTranspose2d {
                input,
                weight,
                bias,
                spec: *spec,
            },
            rg,
        ))
    }

    fn map(&mut self, input: Var, f: impl Fn(f32) -> f32, op: Op) -> Var {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| f(v)).collect();
        let out = Tensor::from_vec(x.shape(), data).expect("elementwise map keeps shape");
        let rg = self.needs(input);
        self.push(out, op, rg)
    }

    /// `max(x, slope * x)` for `slope` in (0, 1).
    pub fn leaky_relu(&mut self, input: Var, slope: f32) -> Result<Var> {
        if !(slope > 0.0 && slope < 1.0) {
            return Err(Error::Contract(format!("leaky_relu slope {slope} outside (0, 1)")));
        }
        Ok(self.map(
            input,
            |v| if v > 0.0 { v } else { slope * v },
            Op::LeakyRelu { input, slope },
        ))
    }

    pub fn tanh(&mut self, input: Var) -> Var {
        self.map(input, f32::tanh, Op::Tanh { input })
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        self.map(input, sigmoid, Op::Sigmoid { input })
    }

    /// Inverted dropout. `rng = None` is inference mode: the input node is
    /// returned unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, input: Var, rate: f32, rng: Option<&mut R>) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Contract(format!("dropout rate {rate} outside [0, 1)")));
        }
        let Some(rng) = rng else {
            return Ok(input);
        };
        if rate == 0.0 {
            return Ok(input);
        }
        let keep = 1.0 / (1.0 - rate);
        let x = self.value(input);
        let mask: Vec<f32> = (0..x.numel())
            .map(|_| if rng.random::<f32>() < rate { 0.0 } else { keep })
            .collect();
        let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let out = Tensor::from_vec(x.shape(), data)?;
        let rg = self.needs(input);
        Ok(self.push(out, Op::Dropout { input, mask }, rg))
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        for (axis, ea, eb) in [
            ("batch", sa.batch, sb.batch),
            ("height", sa.height, sb.height),
            ("width", sa.width, sb.width),
        ] {
            if ea != eb {
                return Err(Error::Dimension {
                    op: "concat_channels",
                    axis,
                    expected: ea,
                    found: eb,
                });
            }
        }
        let shape = Shape::new(sa.batch, sa.channels + sb.channels, sa.height, sa.width);
        let (ca, cb) = (sa.channels * sa.plane(), sb.channels * sb.plane());
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..sa.batch {
            data.extend_from_slice(&self.value(a).data()[n * ca..(n + 1) * ca]);
            data.extend_from_slice(&self.value(b).data()[n * cb..(n + 1) * cb]);
        }
        let out = Tensor::from_vec(shape, data)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Concat { a, b }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Contract(format!(
                "add: shapes differ {} vs {}",
                ta.shape(),
                tb.shape()
            )));
        }
        let rg = self.needs(a) || self.needs(b);
        if ta.numel() == 1 {
            let s = self.scalar_f64(a) + self.scalar_f64(b);
            return Ok(self.push_scalar(s, Op::Add { a, b }, rg));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::from_vec(ta.shape(), data)?;
        Ok(self.push(out, Op::Add { a, b }, rg))
    }

    pub fn scale(&mut self, input: Var, factor: f32) -> Var {
        if self.value(input).numel() == 1 {
            let s = self.scalar_f64(input) * factor as f64;
            let rg = self.needs(input);
            return self.push_scalar(s, Op::Scale { input, factor }, rg);
        }
        self.map(input, |v| v * factor, Op::Scale { input, factor })
    }

    /// Scalar `sum(weights * input)`, accumulated in f64.
    pub fn weighted_sum(&mut self, input: Var, weights: &Tensor) -> Result<Var> {
        let s = self.value(input).dot(weights)?;
        let rg = self.needs(input);
        Ok(self.push_scalar(
            s,
            Op::WeightedSum {
                input,
                weights: weights.data().to_vec(),
            },
            rg,
        ))
    }

    /// Mean binary cross-entropy of probabilities against an all-real or
    /// all-fake target. Probabilities are clamped to `[1e-7, 1 - 1e-7]`.
    pub fn bce_loss(&mut self, input: Var, target_is_real: bool) -> Result<Var> {
        let p = self.value(input);
        if let Some(bad) = p.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            if bad.is_nan() {
                return Err(Error::NonFinite("bce_loss: probability is NaN".into()));
            }
            return Err(Error::Contract(format!("bce_loss: probability {bad} outside [0, 1]")));
        }
        let n = p.numel() as f64;
        let total: f64 = p
            .data()
            .iter()
            .map(|&v| {
                let c = v.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP) as f64;
                if target_is_real {
                    -c.ln()
                } else {
                    -(1.0 - c).ln()
                }
            })
            .sum();
        let rg = self.needs(input);
        Ok(self.push_scalar(
            total / n,
            Op::Bce {
                input,
                real: target_is_real,
            },
            rg,
        ))
    }

    /// Mean absolute difference.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (a, b) = (self.value(pred), self.value(target));
        if a.shape() != b.shape() {
            let (sa, sb) = (a.shape(), b.shape());
            let axis = ["batch", "channel", "height", "width"]
                .into_iter()
                .zip(sa.dims().into_iter().zip(sb.dims()))
                .find(|(_, (x, y))| x != y)
                .map(|(name, _)| name)
                .unwrap_or("shape");
            let i = ["batch", "channel", "height", "width"]
                .iter()
                .position(|n| *n == axis)
                .unwrap_or(0);
            return Err(Error::Dimension {
                op: "l1_loss",
                axis,
                expected: sa.dims()[i],
                found: sb.dims()[i],
            });
        }
        let total: f64 = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| (x as f64 - y as f64).abs())
            .sum();
        let n = a.numel() as f64;
        let rg = self.needs(pred) || self.needs(target);
        Ok(self.push_scalar(total / n, Op::L1 { a: pred, b: target }, rg))
    }

    /// Registers an op whose forward value was computed by the caller.
    pub fn custom(&mut self, inputs: &[Var], value: Tensor, backward: CustomBackward) -> Var {
        let rg = inputs.iter().any(|&v| self.needs(v));
        self.push(
            value,
            Op::Custom {
                inputs: inputs.to_vec(),
                backward,
            },
            rg,
        )
    }

    fn accumulate(&mut self, v: Var, g: Vec<f32>) {
        if !self.needs(v) {
            return;
        }
        match &mut self.grads[v.0] {
            Some(buf) => buf.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(g),
        }
    }

    /// Reverse sweep from a scalar loss. Clears gradients of any previous
    /// sweep first.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward expects a scalar loss, got shape {}",
                self.value(loss).shape()
            )));
        }
        self.grads.iter_mut().for_each(|g| *g = None);
        if !self.needs(loss) {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(up) = self.grads[i].take() else {
                continue;
            };
            let pending = self.local_grads(i, &up);
            // Leaves keep their gradient for the caller.
            if matches!(self.nodes[i].op, Op::Leaf) {
                self.grads[i] = Some(up);
            }
            for (v, g) in pending {
                self.accumulate(v, g);
            }
        }
        Ok(())
    }

    fn local_grads(&self, i: usize, up: &[f32]) -> Vec<(Var, Vec<f32>)> {
        let node = &self.nodes[i];
        let out = &node.value;
        let mut res = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                spec,
            } => {
                let need = (
                    self.needs(*input),
                    self.needs(*weight),
                    bias.is_some_and(|b| self.needs(b)),
                );
                let g = conv::conv2d_backward(self.value(*input), self.value(*weight), spec, up, out.shape(), need);
                push_conv_grads(&mut res, *input, *weight, *bias, g);
            }
            Op::ConvTranspose2d {
                input,
                weight,
                bias,
                spec,
            } => {
                let need = (
                    self.needs(*input),
                    self.needs(*weight),
                    bias.is_some_and(|b| self.needs(b)),
                );
                let g = conv::conv_transpose2d_backward(
                    self.value(*input),
                    self.value(*weight),
                    spec,
                    up,
                    out.shape(),
                    need,
                );
                push_conv_grads(&mut res, *input, *weight, *bias, g);
            }
            Op::LeakyRelu { input, slope } => {
                let x = self.value(*input).data();
                res.push((
                    *input,
                    x.iter()
                        .zip(up)
                        .map(|(&v, &g)| if v > 0.0 { g } else { slope * g })
                        .collect(),
                ));
            }
            Op::Tanh { input } => {
                let y = out.data();
                res.push((*input, y.iter().zip(up).map(|(&t, &g)| g * (1.0 - t * t)).collect()));
            }
            Op::Sigmoid { input } => {
                let y = out.data();
                res.push((*input, y.iter().zip(up).map(|(&s, &g)| g * s * (1.0 - s)).collect()));
            }
            Op::Dropout { input, mask } => {
                res.push((*input, mask.iter().zip(up).map(|(&m, &g)| m * g).collect()));
            }
            Op::Concat { a, b } => {
                let (sa, sb) = (self.value(*a).shape(), self.value(*b).shape());
                let (ca, cb) = (sa.channels * sa.plane(), sb.channels * sb.plane());
                let mut ga = Vec::with_capacity(sa.numel());
                let mut gb = Vec::with_capacity(sb.numel());
                for chunk in up.chunks(ca + cb) {
                    ga.extend_from_slice(&chunk[..ca]);
                    gb.extend_from_slice(&chunk[ca..]);
                }
                res.push((*a, ga));
                res.push((*b, gb));
            }
            Op::Add { a, b } => {
                res.push((*a, up.to_vec()));
                res.push((*b, up.to_vec()));
            }
            Op::Scale { input, factor } => {
                res.push((*input, up.iter().map(|g| g * factor).collect()));
            }
            Op::WeightedSum { input, weights } => {
                res.push((*input, weights.iter().map(|w| w * up[0]).collect()));
            }
            Op::Bce { input, real } => {
                let p = self.value(*input).data();
                let scale = up[0] as f64 / p.len() as f64;
                let g = p
                    .iter()
                    .map(|&v| {
                        if !(BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&v) {
                            return 0.0;
                        }
                        let v = v as f64;
                        let d = if *real { -1.0 / v } else { 1.0 / (1.0 - v) };
                        (d * scale) as f32
                    })
                    .collect();
                res.push((*input, g));
            }
            Op::L1 { a, b } => {
                let (x, y) = (self.value(*a).data(), self.value(*b).data());
                let scale = up[0] / x.len() as f32;
                let ga: Vec<f32> = x
                    .iter()
                    .zip(y)
                    .map(|(&p, &t)| {
                        let d = p - t;
                        if d > 0.0 {
                            scale
                        } else if d < 0.0 {
                            -scale
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let gb = ga.iter().map(|v| -v).collect();
                res.push((*a, ga));
                res.push((*b, gb));
            }
            Op::Custom { inputs, backward } => {
                let vals: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
                for (v, g) in inputs.iter().zip(backward(&vals, out, up)) {
                    if let Some(g) = g {
                        res.push((*v, g));
                    }
                }
            }
        }
        res
    }
}

fn push_conv_grads(res: &mut Vec<(Var, Vec<f32>)>, input: Var, weight: Var, bias: Option<Var>, g: conv::ConvGrads) {
    if let Some(gi) = g.input {
        res.push((input, gi));
    }
    if let Some(gw) = g.weight {
        res.push((weight, gw));
    }
    if let (Some(b), Some(gb)) = (bias, g.bias) {
        res.push((b, gb));
    }
}

pub(crate) fn sigmoid(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
