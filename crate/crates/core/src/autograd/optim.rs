use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::graph::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Trainable tensor with Adam moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub value: Tensor,
    pub first_moment: Tensor,
    pub second_moment: Tensor,
    pub step_count: u64,
}

impl Parameter {
    pub fn new(value: Tensor) -> Self {
        let shape = value.shape();
        Parameter {
            value,
            first_moment: Tensor::zeros(shape),
            second_moment: Tensor::zeros(shape),
            step_count: 0,
        }
    }

    /// Gaussian initialization, mean 0 and the given standard deviation.
    pub fn gaussian<R: Rng + ?Sized>(shape: impl Into<Shape>, std: f32, rng: &mut R) -> Self {
        let shape = shape.into();
        let normal = Normal::new(0.0f32, std).expect("positive std");
        let data = (0..shape.numel()).map(|_| normal.sample(rng)).collect();
        Parameter::new(Tensor::from_vec(shape, data).expect("sized to shape"))
    }

    pub fn zeros(shape: impl Into<Shape>) -> Self {
        Parameter::new(Tensor::zeros(shape))
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }
}

/// Ordered, named collection of parameters belonging to one model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, Parameter)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a parameter and returns its slot index.
    pub fn push(&mut self, name: impl Into<String>, param: Parameter) -> usize {
        self.entries.push((name.into(), param));
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Parameter)> {
        self.entries.iter().map(|(n, p)| (n.as_str(), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Parameter)> {
        self.entries.iter_mut().map(|(n, p)| (n.as_str(), p))
    }

    pub fn get(&self, index: usize) -> &Parameter {
        &self.entries[index].1
    }

    pub fn get_mut(&mut self, index: usize) -> &mut Parameter {
        &mut self.entries[index].1
    }

    pub fn name(&self, index: usize) -> &str {
        &self.entries[index].0
    }

    pub fn find(&self, name: &str) -> Option<&Parameter> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    /// Total number of scalar weights.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, p)| p.numel()).sum()
    }

    /// Places every parameter value on `graph` as a leaf, returning one
    /// handle per slot. With `trainable = false` the leaves are constants.
    pub fn bind(&self, graph: &mut Graph, trainable: bool) -> Vec<Var> {
        self.entries
            .iter()
            .map(|(_, p)| {
                if trainable {
                    graph.variable(p.value.clone())
                } else {
                    graph.constant(p.value.clone())
                }
            })
            .collect()
    }

    /// Moves the leaf gradients of a finished backward sweep into the
    /// parameters' gradient buffers. Slots that received no gradient get
    /// an explicit zero gradient.
    pub fn collect_grads(&mut self, graph: &mut Graph, vars: &[Var]) -> Result<()> {
        if vars.len() != self.entries.len() {
            return Err(Error::Contract(format!(
                "collect_grads: {} handles for {} parameters",
                vars.len(),
                self.entries.len()
            )));
        }
        for ((_, p), &v) in self.entries.iter_mut().zip(vars) {
            match graph.take_grad(v) {
                Some(g) => p.value.accumulate_grad(&g)?,
                None => p.value.accumulate_grad(&vec![0.0; p.numel()])?,
            }
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        self.entries.iter_mut().for_each(|(_, p)| p.value.zero_grad());
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, p)| p.value.check_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update over every parameter; gradients are
/// cleared afterwards. Fails without touching anything if any parameter
/// lacks a gradient.
pub fn adam_step(params: &mut ParamSet, cfg: &AdamConfig) -> Result<()> {
    if let Some((name, _)) = params.iter().find(|(_, p)| p.value.grad().is_none()) {
        return Err(Error::Contract(format!("adam_step: parameter {name} has no gradient")));
    }
    let (b1, b2) = (cfg.beta1 as f64, cfg.beta2 as f64);
    for (_, p) in params.iter_mut() {
        p.step_count += 1;
        let t = p.step_count as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let grad = p.value.take_grad().expect("checked above");
        let m = p.first_moment.data_mut();
        let v = p.second_moment.data_mut();
        let w = p.value.data_mut();
        for i in 0..grad.len() {
            let g = grad[i] as f64;
            let mi = b1 * m[i] as f64 + (1.0 - b1) * g;
            let vi = b2 * v[i] as f64 + (1.0 - b2) * g * g;
            m[i] = mi as f32;
            v[i] = vi as f32;
            let update = cfg.lr as f64 * (mi / c1) / ((vi / c2).sqrt() + cfg.epsilon as f64);
            w[i] = (w[i] as f64 - update) as f32;
        }
    }
    Ok(())
}
