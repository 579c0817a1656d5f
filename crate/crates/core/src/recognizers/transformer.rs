use numcore::{Graph64, NumError, Tensor64, Var};

use super::classifier::{check_input, Tokens};
use super::config::TransformerSlConfig;
use super::head::ClassHead;
use crate::error::Result;
use crate::params::{dropout, uniform, LayerNorm, Linear, ParamId, ParamStore};
use crate::posedata::FEATURES;
use crate::rng::{seeded, Rng};

const TOKEN_INIT: f64 = 0.02;

/// Multi-head scaled dot-product attention.
///
/// `q`, `k`, `v` are `[B, T, H]` projections; `key_mask` is an additive
/// `[B, T]` mask (0 for visible keys, −∞ for hidden ones). Returns the
/// merged head outputs `[B, T, H]` and the attention weights
/// `[B · heads, T, T]`.
pub fn attention(g: &mut Graph64, q: Var, k: Var, v: Var, heads: usize, key_mask: Option<&Tensor64>) -> Result<(Var, Var)> {
    let shape = g.shape(q).to_vec();
    if shape.len() != 3 || heads == 0 || shape[2] % heads != 0 {
        return Err(NumError::Shape { op: "attention", detail: format!("{shape:?} with {heads} heads") }.into());
    }
    let (b, t, h) = (shape[0], shape[1], shape[2]);
    let dh = h / heads;
    let split = |x: Var, g: &mut Graph64| -> Result<Var> {
        let x = g.reshape(x, &[b, t, heads, dh])?;
        let x = g.permute(x, &[0, 2, 1, 3])?;
        Ok(g.reshape(x, &[b * heads, t, dh])?)
    };
    let (qh, kh, vh) = (split(q, g)?, split(k, g)?, split(v, g)?);
    let kt = g.transpose(kh)?;
    let scores = g.matmul(qh, kt)?;
    let mut scores = g.scale(scores, 1.0 / (dh as f64).sqrt());
    if let Some(mask) = key_mask {
        if mask.shape() != [b, t] {
            return Err(NumError::Shape { op: "attention", detail: format!("mask {:?} for [{b}, {t}]", mask.shape()) }.into());
        }
        let per_head = Tensor64::from_fn([b * heads, 1, t], |i| mask.data()[(i / (heads * t)) * t + i % t]);
        let m = g.constant(per_head);
        scores = g.add(scores, m)?;
    }
    let probs = g.softmax(scores)?;
    let out = g.matmul(probs, vh)?;
    let out = g.reshape(out, &[b, heads, t, dh])?;
    let out = g.permute(out, &[0, 2, 1, 3])?;
    let out = g.reshape(out, &[b, t, h])?;
    Ok((out, probs))
}

#[derive(Clone, Debug)]
struct EncoderBlock {
    attn_norm: LayerNorm,
    query: Linear,
    key: Linear,
    value: Linear,
    proj: Linear,
    mlp_norm: LayerNorm,
    fc1: Linear,
    fc2: Linear,
}

/// Pre-norm Transformer encoder with a leading class token, trainable
/// positional vectors and a key mask over padded frames.
#[derive(Clone, Debug)]
pub struct TransformerSl {
    config: TransformerSlConfig,
    num_classes: usize,
    params: ParamStore,
    embed: Linear,
    class_token: ParamId,
    positions: ParamId,
    blocks: Vec<EncoderBlock>,
    head: ClassHead,
}

impl TransformerSl {
    pub fn new(config: TransformerSlConfig, num_classes: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(seed);
        let mut params = ParamStore::new();
        let hd = config.hidden_dim;
        let embed = Linear::new(&mut params, "embed", FEATURES, hd, true, &mut rng);
        let class_token = params.add("class_token", uniform(&[1, 1, hd], TOKEN_INIT, &mut rng));
        let positions = params.add("positions", uniform(&[config.max_tokens, hd], TOKEN_INIT, &mut rng));
        let blocks = (0..config.layers)
            .map(|i| {
                let n = |s: &str| format!("blocks.{i}.{s}");
                EncoderBlock {
                    attn_norm: LayerNorm::new(&mut params, &n("attn_norm"), hd),
                    query: Linear::new(&mut params, &n("query"), hd, hd, true, &mut rng),
                    key: Linear::new(&mut params, &n("key"), hd, hd, true, &mut rng),
                    value: Linear::new(&mut params, &n("value"), hd, hd, true, &mut rng),
                    proj: Linear::new(&mut params, &n("proj"), hd, hd, true, &mut rng),
                    mlp_norm: LayerNorm::new(&mut params, &n("mlp_norm"), hd),
                    fc1: Linear::new(&mut params, &n("fc1"), hd, config.mlp_dim, true, &mut rng),
                    fc2: Linear::new(&mut params, &n("fc2"), config.mlp_dim, hd, true, &mut rng),
                }
            })
            .collect();
        let head = ClassHead::new(&mut params, hd, config.output_size, num_classes, config.dropout, &mut rng);
        Ok(Self { config, num_classes, params, embed, class_token, positions, blocks, head })
    }

    pub fn config(&self) -> &TransformerSlConfig {
        &self.config
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Embeds every frame, prepends the class token and adds positional
    /// vectors: `x[B, F, 180]` → `[B, F + 1, H]`.
    pub fn tokenize(&self, g: &mut Graph64, p: &[Var], x: Var, valid: &[usize]) -> Result<Tokens> {
        let (b, frames) = check_input(g, x, valid)?;
        let n = frames + 1;
        if n > self.config.max_tokens {
            return Err(NumError::Range(format!("{n} tokens exceed max_tokens {}", self.config.max_tokens)).into());
        }
        let hd = self.config.hidden_dim;
        let frames_emb = self.embed.forward(g, p, x)?;
        let zeros = g.constant(Tensor64::zeros([b, 1, hd]));
        let cls = g.add(zeros, p[self.class_token.index()])?;
        let seq = g.concat(&[cls, frames_emb], 1)?;
        let pos = g.narrow(p[self.positions.index()], 0, 0, n)?;
        let tokens = g.add(seq, pos)?;
        Ok(Tokens { tokens, class_positions: vec![0; b] })
    }

    pub fn graph_logits(&self, g: &mut Graph64, p: &[Var], x: Var, valid: &[usize], mut rng: Option<&mut Rng>) -> Result<Var> {
        let Tokens { tokens, class_positions } = self.tokenize(g, p, x, valid)?;
        let (b, n) = (valid.len(), g.shape(tokens)[1]);
        // class token and the first `valid` frames are visible
        let mask = Tensor64::from_fn([b, n], |i| if i % n <= valid[i / n] { 0.0 } else { f64::NEG_INFINITY });
        let rate = self.config.dropout;
        let mut z = tokens;
        for blk in &self.blocks {
            let h = blk.attn_norm.forward(g, p, z, 2)?;
            let q = blk.query.forward(g, p, h)?;
            let k = blk.key.forward(g, p, h)?;
            let v = blk.value.forward(g, p, h)?;
            let (a, _) = attention(g, q, k, v, self.config.heads, Some(&mask))?;
            let a = blk.proj.forward(g, p, a)?;
            let a = dropout(g, a, rate, rng.as_deref_mut())?;
            z = g.add(z, a)?;

            let h = blk.mlp_norm.forward(g, p, z, 2)?;
            let h = blk.fc1.forward(g, p, h)?;
            let h = g.gelu(h);
            let h = blk.fc2.forward(g, p, h)?;
            let h = dropout(g, h, rate, rng.as_deref_mut())?;
            z = g.add(z, h)?;
        }
        let cls = g.gather_tokens(z, &class_positions)?;
        self.head.forward(g, p, cls, rng)
    }
}
