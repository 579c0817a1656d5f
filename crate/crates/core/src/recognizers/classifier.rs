use numcore::{Graph64, NumError, Tensor64, Var};
use serde::{Deserialize, Serialize};

use super::config::{MambaSlConfig, TransformerSlConfig};
use super::mamba::MambaSl;
use super::transformer::TransformerSl;
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::posedata::{PoseSequence, FEATURES};
use crate::rng::Rng;

/// Token sequence `[B, F + 1, H]` and the index of each clip's class token.
#[derive(Clone, Debug)]
pub struct Tokens {
    pub tokens: Var,
    pub class_positions: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelConfig {
    TransformerSl(TransformerSlConfig),
    MambaSl(MambaSlConfig),
}

impl ModelConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelConfig::TransformerSl(_) => "transformer-sl",
            ModelConfig::MambaSl(_) => "mamba-sl",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::TransformerSl(c) => c.validate(),
            ModelConfig::MambaSl(c) => c.validate(),
        }
    }
}

/// Checks `x[B, F, 180]` against per-clip valid frame counts in `[1, F]`.
pub(crate) fn check_input(g: &Graph64, x: Var, valid: &[usize]) -> Result<(usize, usize)> {
    let s = g.shape(x);
    if s.len() != 3 || s[2] != FEATURES || s[0] != valid.len() {
        return Err(NumError::Shape {
            op: "tokenize",
            detail: format!("input {s:?} with {} valid counts", valid.len()),
        }
        .into());
    }
    let frames = s[1];
    if let Some(&v) = valid.iter().find(|&&v| v == 0 || v > frames) {
        return Err(NumError::Range(format!("valid_frames {v} outside [1, {frames}]")).into());
    }
    Ok((s[0], frames))
}

#[derive(Clone, Debug)]
pub enum Classifier {
    Transformer(TransformerSl),
    Mamba(MambaSl),
}

impl Classifier {
    pub fn new(config: &ModelConfig, num_classes: usize, seed: u64) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::Config("classifier needs at least one class".into()));
        }
        Ok(match config {
            ModelConfig::TransformerSl(c) => Classifier::Transformer(TransformerSl::new(c.clone(), num_classes, seed)?),
            ModelConfig::MambaSl(c) => Classifier::Mamba(MambaSl::new(c.clone(), num_classes, seed)?),
        })
    }

    pub fn config(&self) -> ModelConfig {
        match self {
            Classifier::Transformer(m) => ModelConfig::TransformerSl(m.config().clone()),
            Classifier::Mamba(m) => ModelConfig::MambaSl(m.config().clone()),
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            Classifier::Transformer(m) => m.num_classes(),
            Classifier::Mamba(m) => m.num_classes(),
        }
    }

    pub fn params(&self) -> &ParamStore {
        match self {
            Classifier::Transformer(m) => m.params(),
            Classifier::Mamba(m) => m.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        match self {
            Classifier::Transformer(m) => m.params_mut(),
            Classifier::Mamba(m) => m.params_mut(),
        }
    }

    pub fn tokenize(&self, g: &mut Graph64, p: &[Var], x: Var, valid: &[usize]) -> Result<Tokens> {
        match self {
            Classifier::Transformer(m) => m.tokenize(g, p, x, valid),
            Classifier::Mamba(m) => m.tokenize(g, p, x, valid),
        }
    }

    /// Records the forward pass: `x[B, F, 180]` → logits `[B, C]`. Dropout is
    /// active only when `rng` is given.
    pub fn graph_logits(&self, g: &mut Graph64, p: &[Var], x: Var, valid: &[usize], rng: Option<&mut Rng>) -> Result<Var> {
        match self {
            Classifier::Transformer(m) => m.graph_logits(g, p, x, valid, rng),
            Classifier::Mamba(m) => m.graph_logits(g, p, x, valid, rng),
        }
    }

    /// Inference logits `[B, C]` for equally long clips, dropout off.
    pub fn logits(&self, clips: &[PoseSequence], valid: &[usize]) -> Result<Tensor64> {
        let x = stack_clips(clips)?;
        let mut g = Graph64::new();
        let p = self.params().bind_frozen(&mut g);
        let xv = g.constant(x);
        let out = self.graph_logits(&mut g, &p, xv, valid, None)?;
        let logits = g.value(out).clone();
        if !logits.is_finite() {
            return Err(Error::NonFinite("classifier logits".into()));
        }
        Ok(logits)
    }

    /// Arg-max class of every clip.
    pub fn predict(&self, clips: &[PoseSequence], valid: &[usize]) -> Result<Vec<usize>> {
        let logits = self.logits(clips, valid)?;
        let c = self.num_classes();
        Ok(logits
            .data()
            .chunks_exact(c)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                    .0
            })
            .collect())
    }
}

/// Stacks equally long clips into `[B, F, 180]`.
pub(crate) fn stack_clips(clips: &[PoseSequence]) -> Result<Tensor64> {
    let frames = clips.first().map_or(0, PoseSequence::frames);
    if clips.iter().any(|c| c.frames() != frames) {
        return Err(NumError::Shape { op: "stack_clips", detail: "clips differ in length".into() }.into());
    }
    let data = clips.iter().flat_map(|c| c.values().iter().copied()).collect();
    Ok(Tensor64::new(vec![clips.len(), frames, FEATURES], data)?)
}

/// Mean softmax cross-entropy of `logits[B, C]` against `labels`.
pub fn classify_loss(g: &mut Graph64, logits: Var, labels: &[usize]) -> Result<Var> {
    Ok(g.cross_entropy(logits, labels)?)
}
