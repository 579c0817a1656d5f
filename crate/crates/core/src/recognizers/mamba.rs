use numcore::{Graph64, Tensor64, Var};
use rand::Rng as _;

use super::classifier::{check_input, Tokens};
use super::config::MambaSlConfig;
use super::head::ClassHead;
use crate::error::Result;
use crate::params::{dropout, uniform, LayerNorm, Linear, ParamId, ParamStore};
use crate::posedata::FEATURES;
use crate::rng::{seeded, Rng};

const DT_MIN: f64 = 1e-3;
const DT_MAX: f64 = 1e-1;

#[derive(Clone, Debug)]
struct MambaBlock {
    norm: LayerNorm,
    in_proj: Linear,
    conv_weight: ParamId,
    conv_bias: ParamId,
    x_proj: Linear,
    dt_proj: Linear,
    a_log: ParamId,
    skip: ParamId,
    out_proj: Linear,
}

/// Selective state-space classifier. The class token sits right after the
/// last real frame, so the causal backbone never sees padding before it.
#[derive(Clone, Debug)]
pub struct MambaSl {
    config: MambaSlConfig,
    num_classes: usize,
    params: ParamStore,
    embed: Linear,
    class_token: ParamId,
    blocks: Vec<MambaBlock>,
    head: ClassHead,
}

impl MambaSl {
    pub fn new(config: MambaSlConfig, num_classes: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(seed);
        let mut params = ParamStore::new();
        let (hd, e, n, r, k) = (
            config.hidden_dim,
            config.inner_dim(),
            config.state_dim,
            config.dt_rank(),
            config.conv_width,
        );
        let embed = Linear::new(&mut params, "embed", FEATURES, hd, true, &mut rng);
        let class_token = params.add("class_token", uniform(&[1, 1, hd], 0.02, &mut rng));
        let blocks = (0..config.layers)
            .map(|i| {
                let nm = |s: &str| format!("blocks.{i}.{s}");
                let norm = LayerNorm::new(&mut params, &nm("norm"), hd);
                let in_proj = Linear::new(&mut params, &nm("in_proj"), hd, 2 * e, false, &mut rng);
                let conv_bound = 1.0 / (k as f64).sqrt();
                let conv_weight = params.add(nm("conv.weight"), uniform(&[e, k], conv_bound, &mut rng));
                let conv_bias = params.add(nm("conv.bias"), uniform(&[e], conv_bound, &mut rng));
                let x_proj = Linear::new(&mut params, &nm("x_proj"), e, r + 2 * n, false, &mut rng);
                let dt_proj = Linear::new(&mut params, &nm("dt_proj"), r, e, true, &mut rng);
                // Δ starts log-uniform in [DT_MIN, DT_MAX]: bias = softplus⁻¹(Δ)
                let dt_bias = Tensor64::from_fn([e], |_| {
                    let dt = (rng.random_range(DT_MIN.ln()..DT_MAX.ln())).exp();
                    dt + (-(-dt).exp_m1()).ln()
                });
                *params.get_mut(dt_proj.bias.expect("dt_proj has a bias")) = dt_bias;
                let a_log = params.add(nm("a_log"), Tensor64::from_fn([e, n], |i| ((i % n + 1) as f64).ln()));
                let skip = params.add(nm("skip"), Tensor64::ones([e]));
                let out_proj = Linear::new(&mut params, &nm("out_proj"), e, hd, false, &mut rng);
                MambaBlock { norm, in_proj, conv_weight, conv_bias, x_proj, dt_proj, a_log, skip, out_proj }
            })
            .collect();
        params.round_to_storage();
        let head = ClassHead::new(&mut params, hd, config.output_size, num_classes, config.dropout, &mut rng);
        Ok(Self { config, num_classes, params, embed, class_token, blocks, head })
    }

    pub fn config(&self) -> &MambaSlConfig {
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

    /// Embeds every frame and inserts the class token at index
    /// `valid[b]`: `x[B, F, 180]` → `[B, F + 1, H]`.
    pub fn tokenize(&self, g: &mut Graph64, p: &[Var], x: Var, valid: &[usize]) -> Result<Tokens> {
        let (b, frames) = check_input(g, x, valid)?;
        let emb = self.embed.forward(g, p, x)?;
        let cls = p[self.class_token.index()];
        let mut rows = Vec::with_capacity(b);
        for (i, &v) in valid.iter().enumerate() {
            let row = g.narrow(emb, 0, i, 1)?;
            let before = g.narrow(row, 1, 0, v)?;
            let after = g.narrow(row, 1, v, frames - v)?;
            rows.push(g.concat(&[before, cls, after], 1)?);
        }
        let tokens = g.concat(&rows, 0)?;
        Ok(Tokens { tokens, class_positions: valid.to_vec() })
    }

    pub fn graph_logits(&self, g: &mut Graph64, p: &[Var], x: Var, valid: &[usize], mut rng: Option<&mut Rng>) -> Result<Var> {
        let Tokens { tokens, class_positions } = self.tokenize(g, p, x, valid)?;
        let cfg = &self.config;
        let (e, n, r) = (cfg.inner_dim(), cfg.state_dim, cfg.dt_rank());
        let mut z = tokens;
        for blk in &self.blocks {
            let h = blk.norm.forward(g, p, z, 2)?;
            let xz = blk.in_proj.forward(g, p, h)?;
            let xs = g.narrow(xz, 2, 0, e)?;
            let gate = g.narrow(xz, 2, e, e)?;
            let xs = g.causal_conv1d(xs, p[blk.conv_weight.index()], p[blk.conv_bias.index()])?;
            let xs = g.silu(xs);
            let proj = blk.x_proj.forward(g, p, xs)?;
            let dt = g.narrow(proj, 2, 0, r)?;
            let bm = g.narrow(proj, 2, r, n)?;
            let cm = g.narrow(proj, 2, r + n, n)?;
            let dt = blk.dt_proj.forward(g, p, dt)?;
            let delta = g.softplus(dt);
            let a = g.exp(p[blk.a_log.index()]);
            let a = g.neg(a);
            let y = g.selective_scan(xs, delta, a, bm, cm, p[blk.skip.index()])?;
            let gate = g.silu(gate);
            let y = g.mul(y, gate)?;
            let y = blk.out_proj.forward(g, p, y)?;
            let y = dropout(g, y, cfg.dropout, rng.as_deref_mut())?;
            z = g.add(z, y)?;
        }
        let cls = g.gather_tokens(z, &class_positions)?;
        self.head.forward(g, p, cls, rng)
    }
}
