//! Named parameter storage shared by every model.

use numcore::{Graph64, Tensor64, Var};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered list of named tensors.
///
/// Values are kept representable in `f32`, the on-disk precision, so a
/// checkpoint roundtrip reproduces a model exactly. Call
/// [`ParamStore::round_to_storage`] after every in-place update.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor64>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, mut value: Tensor64) -> ParamId {
        round_tensor(&mut value);
        self.names.push(name.into());
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor64] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor64] {
        &mut self.tensors
    }

    pub fn get(&self, id: ParamId) -> &Tensor64 {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor64 {
        &mut self.tensors[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// Registers every tensor as a trainable leaf of `g`, in store order.
    pub fn bind(&self, g: &mut Graph64) -> Vec<Var> {
        self.tensors.iter().map(|t| g.param(t.clone())).collect()
    }

    /// Registers every tensor as a constant (inference without gradients).
    pub fn bind_frozen(&self, g: &mut Graph64) -> Vec<Var> {
        self.tensors.iter().map(|t| g.constant(t.clone())).collect()
    }

    pub fn round_to_storage(&mut self) {
        self.tensors.iter_mut().for_each(round_tensor);
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.is_finite())
    }

    /// Replaces all values with `(name, tensor)` pairs that must match this
    /// store's names and shapes one to one.
    pub fn load_named(&mut self, entries: Vec<(String, Tensor64)>) -> Result<()> {
        if entries.len() != self.tensors.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} tensors, found {}",
                self.tensors.len(),
                entries.len()
            )));
        }
        for ((name, t), (own_name, own)) in entries.iter().zip(self.names.iter().zip(&self.tensors)) {
            if name != own_name || t.shape() != own.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "{name} {:?} where {own_name} {:?} was expected",
                    t.shape(),
                    own.shape()
                )));
            }
        }
        self.tensors = entries.into_iter().map(|(_, t)| t).collect();
        self.round_to_storage();
        Ok(())
    }
}

fn round_tensor(t: &mut Tensor64) {
    t.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
}

/// Uniform initialization in `[-bound, bound]`.
pub fn uniform(shape: &[usize], bound: f64, rng: &mut Rng) -> Tensor64 {
    Tensor64::from_fn(shape.to_vec(), |_| rng.random_range(-bound..=bound))
}

/// Fully connected layer `x · w + b` acting on the last axis.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    /// Weights and bias drawn from `U(-1/√fan_in, 1/√fan_in)`.
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, bias: bool, rng: &mut Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = store.add(format!("{name}.weight"), uniform(&[fan_in, fan_out], bound, rng));
        let bias = bias.then(|| store.add(format!("{name}.bias"), uniform(&[fan_out], bound, rng)));
        Self { weight, bias }
    }

    pub fn zeros(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let weight = store.add(format!("{name}.weight"), Tensor64::zeros([fan_in, fan_out]));
        let bias = Some(store.add(format!("{name}.bias"), Tensor64::zeros([fan_out])));
        Self { weight, bias }
    }

    pub fn forward(&self, g: &mut Graph64, p: &[Var], x: Var) -> Result<Var> {
        let y = g.matmul(x, p[self.weight.0])?;
        Ok(match self.bias {
            Some(b) => g.add(y, p[b.0])?,
            None => y,
        })
    }
}

/// Layer normalization with learned gain and bias.
#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        let gain = store.add(format!("{name}.gain"), Tensor64::ones([dim]));
        let bias = store.add(format!("{name}.bias"), Tensor64::zeros([dim]));
        Self { gain, bias }
    }

    pub fn forward(&self, g: &mut Graph64, p: &[Var], x: Var, axis: usize) -> Result<Var> {
        Ok(g.layer_norm(x, p[self.gain.0], p[self.bias.0], axis, Self::EPS)?)
    }
}

/// Inverted dropout: active only when an RNG is supplied.
pub fn dropout(g: &mut Graph64, x: Var, rate: f64, rng: Option<&mut Rng>) -> Result<Var> {
    let Some(rng) = rng else { return Ok(x) };
    if rate <= 0.0 {
        return Ok(x);
    }
    let keep = 1.0 - rate;
    let mask = Tensor64::from_fn(g.shape(x).to_vec(), |_| {
        if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }
    });
    let m = g.constant(mask);
    Ok(g.mul(x, m)?)
}
