use numcore::{Graph64, OptimizerConfig, OptimizerState64, Tensor64};
use rand::seq::SliceRandom;
use rand::RngCore;

use super::config::CmlpeConfig;
use super::loss::motion_loss;
use super::model::CmlpeModel;
use crate::error::{Error, Result};
use crate::posedata::{oversample_balance, window_frames, PoseSequence, Sample, WindowMode, FEATURES};
use crate::rng::{derive_seed, seeded};

/// Forward and time-reversed generators sharing one configuration.
#[derive(Clone, Debug)]
pub struct GenerationPair {
    pub forward_model: CmlpeModel,
    pub reversed_model: CmlpeModel,
}

impl GenerationPair {
    pub fn new(config: CmlpeConfig, seed: u64) -> Result<Self> {
        Ok(Self {
            forward_model: CmlpeModel::new(config.clone(), derive_seed(seed, 0))?,
            reversed_model: CmlpeModel::new(config, derive_seed(seed, 1))?,
        })
    }

    pub fn config(&self) -> &CmlpeConfig {
        self.forward_model.config()
    }

    pub fn all_finite(&self) -> bool {
        self.forward_model.params().all_finite() && self.reversed_model.params().all_finite()
    }
}

/// Per-step training loss of each generator, measured before the update.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GeneratorTrace {
    pub forward: Vec<f64>,
    pub reversed: Vec<f64>,
}

struct Trainer {
    opt: OptimizerState64,
}

impl Trainer {
    fn new(model: &CmlpeModel) -> Self {
        let cfg = OptimizerConfig::adam(model.config().weight_decay);
        Self { opt: OptimizerState64::new(cfg, model.params().tensors()) }
    }

    fn step(&mut self, model: &mut CmlpeModel, x: Tensor64, y: Tensor64, labels: &[usize], noise: &Tensor64) -> Result<f64> {
        let mut g = Graph64::new();
        let p = model.params().bind(&mut g);
        let xv = g.constant(x);
        let yv = g.constant(y);
        let pred = model.graph_forward(&mut g, &p, xv, labels, noise)?;
        let loss = motion_loss(&mut g, pred, yv)?.value;
        let value = g.value(loss).item();
        let grads = g.backward(loss)?.collect(&g, &p);
        let lr = model.config().lr;
        self.opt.step(model.params_mut().tensors_mut(), &grads, lr)?;
        model.params_mut().round_to_storage();
        Ok(value)
    }
}

fn stack(seqs: &[PoseSequence]) -> Result<Tensor64> {
    let frames = seqs.first().map_or(0, PoseSequence::frames);
    let data = seqs.iter().flat_map(|s| s.values().iter().copied()).collect();
    Ok(Tensor64::new(vec![seqs.len(), frames, FEATURES], data)?)
}

/// Trains both generators of `pair` on class-balanced random 32-frame
/// windows of `train_samples` for `train_steps` Adam steps each.
///
/// The forward model learns first half → second half; the reversed model
/// learns reversed second half → reversed first half. Label noise is active.
pub fn train_generator(mut pair: GenerationPair, train_samples: &[Sample], seed: u64) -> Result<(GenerationPair, GeneratorTrace)> {
    let cfg = pair.config().clone();
    if cfg.features != FEATURES {
        return Err(Error::Config(format!("generator expects {} features, samples carry {FEATURES}", cfg.features)));
    }
    let pool = oversample_balance(train_samples, cfg.num_classes, derive_seed(seed, 0))?;
    if pool.len() < cfg.batch_size {
        return Err(Error::Config(format!(
            "{} balanced training clips, fewer than one batch of {}",
            pool.len(),
            cfg.batch_size
        )));
    }
    let (m, t) = (cfg.input_frames, cfg.target_frames);
    let mut rng = seeded(derive_seed(seed, 1));
    let mut order: Vec<usize> = Vec::new();
    let mut fwd = Trainer::new(&pair.forward_model);
    let mut rev = Trainer::new(&pair.reversed_model);
    let mut trace = GeneratorTrace::default();

    for _ in 0..cfg.train_steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size {
            if order.is_empty() {
                order = (0..pool.len()).collect();
                order.shuffle(&mut rng);
            }
            batch.push(order.pop().expect("refilled above"));
        }
        let mut labels = Vec::with_capacity(batch.len());
        let (mut first, mut second) = (Vec::new(), Vec::new());
        for &i in &batch {
            let w = window_frames(&pool[i].sequence, m + t, WindowMode::Random(rng.next_u64()));
            first.push(w.sequence.slice(0, m));
            second.push(w.sequence.slice(m, t));
            labels.push(pool[i].class_index);
        }
        let rev_in: Vec<PoseSequence> = second.iter().map(PoseSequence::reversed).collect();
        let rev_out: Vec<PoseSequence> = first.iter().map(PoseSequence::reversed).collect();

        let noise_f = pair.forward_model.sample_noise(batch.len(), &mut rng);
        let noise_r = pair.reversed_model.sample_noise(batch.len(), &mut rng);
        trace.forward.push(fwd.step(&mut pair.forward_model, stack(&first)?, stack(&second)?, &labels, &noise_f)?);
        trace.reversed.push(rev.step(&mut pair.reversed_model, stack(&rev_in)?, stack(&rev_out)?, &labels, &noise_r)?);
    }
    Ok((pair, trace))
}
