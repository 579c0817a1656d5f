use numcore::{DctBasis64, Graph64, NumError, Tensor64, Var};
use rand_distr::{Distribution, Normal, StandardNormal};

use super::config::CmlpeConfig;
use crate::error::{Error, Result};
use crate::params::{LayerNorm, Linear, ParamId, ParamStore};
use crate::posedata::{PoseSequence, FEATURES};
use crate::rng::{seeded, Rng};

/// Source of the label-embedding noise ε for a forward pass.
pub enum Noise<'a> {
    Zero,
    /// `B × D` values in row-major order.
    Given(&'a [f64]),
    /// Fresh `N(0, σ²)` draws.
    Sample(&'a mut Rng),
}

/// One conditional MLP block: adaLN over the temporal axis followed by a
/// gated temporal FC layer with a residual path.
#[derive(Clone, Debug)]
struct Block {
    norm: LayerNorm,
    temporal: Linear,
    modulation: Linear,
}

#[derive(Clone, Debug)]
pub struct CmlpeModel {
    config: CmlpeConfig,
    params: ParamStore,
    in_proj: Linear,
    out_proj: Linear,
    blocks: Vec<Block>,
    label_embedding: ParamId,
    dct: DctBasis64,
}

impl CmlpeModel {
    pub fn new(config: CmlpeConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(seed);
        let mut params = ParamStore::new();
        let (m, d, l) = (config.input_frames, config.embed_dim, config.features);
        let in_proj = Linear::new(&mut params, "in_proj", l, d, true, &mut rng);
        let blocks = (0..config.num_blocks)
            .map(|k| Block {
                norm: LayerNorm::new(&mut params, &format!("blocks.{k}.norm"), m),
                temporal: Linear::new(&mut params, &format!("blocks.{k}.temporal"), m, m, true, &mut rng),
                modulation: Linear::zeros(&mut params, &format!("blocks.{k}.modulation"), d, 3 * m),
            })
            .collect();
        let out_proj = Linear::new(&mut params, "out_proj", d, l, true, &mut rng);
        let table = Tensor64::from_fn([config.num_classes, d], |_| StandardNormal.sample(&mut rng));
        let label_embedding = params.add("label_embedding", table);
        let dct = DctBasis64::new(m)?;
        Ok(Self { config, params, in_proj, out_proj, blocks, label_embedding, dct })
    }

    pub fn config(&self) -> &CmlpeConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Sets the output projection to zero, so every prediction collapses to
    /// the residual base frame.
    pub fn zero_out_proj(&mut self) {
        let ids = [Some(self.out_proj.weight), self.out_proj.bias];
        for id in ids.into_iter().flatten() {
            self.params.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// `B × D` Gaussian noise with standard deviation `noise_scale`.
    pub fn sample_noise(&self, batch: usize, rng: &mut Rng) -> Tensor64 {
        let d = self.config.embed_dim;
        if self.config.noise_scale == 0.0 {
            return Tensor64::zeros([batch, d]);
        }
        let normal = Normal::new(0.0, self.config.noise_scale).expect("validated noise scale");
        Tensor64::from_fn([batch, d], |_| normal.sample(rng))
    }

    fn noise_tensor(&self, batch: usize, noise: Noise<'_>) -> Result<Tensor64> {
        let d = self.config.embed_dim;
        Ok(match noise {
            Noise::Zero => Tensor64::zeros([batch, d]),
            Noise::Given(v) => Tensor64::new(vec![batch, d], v.to_vec())?,
            Noise::Sample(rng) => self.sample_noise(batch, rng),
        })
    }

    /// Records the forward pass on `g`. `p` are the bound parameters (see
    /// [`ParamStore::bind`]), `x` is `[B, M, L]`, `noise` is `[B, D]`.
    /// Returns `[B, T, L]` predictions.
    pub fn graph_forward(&self, g: &mut Graph64, p: &[Var], x: Var, labels: &[usize], noise: &Tensor64) -> Result<Var> {
        let cfg = &self.config;
        let (m, l) = (cfg.input_frames, cfg.features);
        let shape = g.shape(x).to_vec();
        if shape.len() != 3 || shape[1] != m || shape[2] != l || shape[0] != labels.len() {
            return Err(NumError::Shape {
                op: "cmlpe_forward",
                detail: format!("input {shape:?} with {} labels, expected [B, {m}, {l}]", labels.len()),
            }
            .into());
        }
        let b = shape[0];
        if let Some(&bad) = labels.iter().find(|&&y| y >= cfg.num_classes) {
            return Err(NumError::Index(format!("label {bad} with {} classes", cfg.num_classes)).into());
        }

        let freq = self.dct.dct(g, x)?;
        let z_in = self.in_proj.forward(g, p, freq)?;
        let mut z = g.transpose(z_in)?; // [B, D, M]

        let emb = g.select_rows(p[self.label_embedding.index()], labels)?;
        let eps = g.constant(noise.clone());
        let cond = g.add(emb, eps)?;
        for block in &self.blocks {
            let mods = block.modulation.forward(g, p, cond)?; // [B, 3M]
            let part = |k: usize, g: &mut Graph64| -> Result<Var> {
                let v = g.narrow(mods, 1, k * m, m)?;
                Ok(g.reshape(v, &[b, 1, m])?)
            };
            let gamma = part(0, g)?;
            let beta = part(1, g)?;
            let alpha = part(2, g)?;
            let h = block.norm.forward(g, p, z, 2)?;
            let one_plus_beta = g.add_scalar(beta, 1.0);
            let h = g.mul(h, one_plus_beta)?;
            let h = g.add(h, gamma)?;
            let f = block.temporal.forward(g, p, h)?;
            let gated = g.mul(alpha, f)?;
            z = g.add(z, gated)?;
        }

        let z = g.transpose(z)?; // [B, M, D]
        let motion = self.out_proj.forward(g, p, z)?;
        let motion = self.dct.idct(g, motion)?;
        let base = g.narrow(x, 1, m - 1, 1)?;
        Ok(g.add(motion, base)?)
    }

    /// Predicts the next `T` frames of each clip in `xs`.
    pub fn forward_batch(&self, xs: &[PoseSequence], labels: &[usize], noise: Noise<'_>) -> Result<Vec<PoseSequence>> {
        let cfg = &self.config;
        if cfg.features != FEATURES {
            return Err(Error::Config(format!("pose sequences carry {FEATURES} features, model expects {}", cfg.features)));
        }
        if let Some(bad) = xs.iter().find(|s| s.frames() != cfg.input_frames) {
            return Err(NumError::Shape {
                op: "cmlpe_forward",
                detail: format!("{} input frames, expected {}", bad.frames(), cfg.input_frames),
            }
            .into());
        }
        let b = xs.len();
        let data: Vec<f64> = xs.iter().flat_map(|s| s.values().iter().copied()).collect();
        let x = Tensor64::new(vec![b, cfg.input_frames, FEATURES], data)?;
        let noise = self.noise_tensor(b, noise)?;
        let mut g = Graph64::new();
        let p = self.params.bind_frozen(&mut g);
        let xv = g.constant(x);
        let out = self.graph_forward(&mut g, &p, xv, labels, &noise)?;
        let step = cfg.target_frames * FEATURES;
        g.value(out)
            .data()
            .chunks_exact(step)
            .map(|c| PoseSequence::new(cfg.target_frames, c.to_vec()))
            .collect()
    }

    pub fn forward(&self, x_value: &PoseSequence, label: usize, noise: Noise<'_>) -> Result<PoseSequence> {
        Ok(self.forward_batch(std::slice::from_ref(x_value), &[label], noise)?.remove(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_parameter_count() {
        let m = CmlpeModel::new(CmlpeConfig::with_classes(10), 0).unwrap();
        // in/out projections, 6 × (LN + FC + modulation), label table
        let blocks = 6 * (2 * 16 + 16 * 16 + 16 + 32 * 48 + 48);
        let expected = (180 * 32 + 32) + (32 * 180 + 180) + blocks + 10 * 32;
        assert_eq!(m.params().num_scalars(), expected);
    }

    #[test]
    fn bad_label_is_index_error() {
        let m = CmlpeModel::new(CmlpeConfig::with_classes(2), 0).unwrap();
        let x = PoseSequence::zeros(16);
        assert!(matches!(m.forward(&x, 2, Noise::Zero), Err(Error::Num(NumError::Index(_)))));
    }
}
