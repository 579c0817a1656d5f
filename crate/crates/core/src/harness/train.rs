use numcore::{DctBasis64, Graph64, OneCycleSchedule64, OptimizerConfig, OptimizerState64, Tensor64};
use rand::seq::SliceRandom;
use rand::RngCore;

use super::config::ExperimentConfig;
use super::eval::evaluate_accuracy;
use super::metrics::{Metric, Phase};
use crate::error::{Error, Result};
use crate::posedata::{augment, oversample_balance, window_frames, Dataset, PoseSequence, Sample, Split, Window, WindowMode, WINDOW};
use crate::recognizers::{classify_loss, Classifier};
use crate::rng::{derive_seed, seeded, Rng};

/// A classifier together with its input preprocessing.
#[derive(Clone, Debug)]
pub struct Recognizer {
    pub classifier: Classifier,
    pub dct_inputs: bool,
}

impl Recognizer {
    /// The network input for a 32-frame window.
    pub fn prepare(&self, window: &PoseSequence) -> Result<PoseSequence> {
        if !self.dct_inputs {
            return Ok(window.clone());
        }
        let basis = DctBasis64::new(window.frames())?;
        Ok(PoseSequence::from_tensor(&basis.dct_tensor(&window.to_tensor())?)?)
    }

    pub fn predict_windows(&self, windows: &[Window]) -> Result<Vec<usize>> {
        let inputs = windows.iter().map(|w| self.prepare(&w.sequence)).collect::<Result<Vec<_>>>()?;
        let valid: Vec<usize> = windows.iter().map(|w| w.valid_frames).collect();
        self.classifier.predict(&inputs, &valid)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Recognizer,
    pub metrics: Vec<Metric>,
}

/// Endless stream of pool indices, reshuffled every epoch.
struct Sampler {
    len: usize,
    order: Vec<usize>,
    rng: Rng,
}

impl Sampler {
    fn new(len: usize, seed: u64) -> Self {
        Self { len, order: Vec::new(), rng: seeded(seed) }
    }

    fn next(&mut self) -> usize {
        if self.order.is_empty() {
            self.order = (0..self.len).collect();
            self.order.shuffle(&mut self.rng);
        }
        self.order.pop().expect("refilled above")
    }
}

struct Batch {
    inputs: Vec<PoseSequence>,
    valid: Vec<usize>,
    labels: Vec<usize>,
}

fn draw_batch(pool: &[Sample], sampler: &mut Sampler, size: usize, augmented: bool, model: &Recognizer) -> Result<Batch> {
    let mut b = Batch { inputs: Vec::with_capacity(size), valid: Vec::with_capacity(size), labels: Vec::with_capacity(size) };
    for _ in 0..size {
        let s = &pool[sampler.next()];
        let w = window_frames(&s.sequence, WINDOW, WindowMode::Random(sampler.rng.next_u64()));
        let seq = if augmented { augment(&w.sequence, w.valid_frames, sampler.rng.next_u64()) } else { w.sequence };
        b.inputs.push(model.prepare(&seq)?);
        b.valid.push(w.valid_frames);
        b.labels.push(s.class_index);
    }
    Ok(b)
}

/// Pretrains on `synthetic` for `synthetic_pretrain_steps` RAdam steps, then
/// fine-tunes on the (oversampled, optionally augmented) real train split
/// for the remaining steps. One OneCycle schedule spans the whole run.
///
/// Streams come from `seed`: 0 initializes the model, 1 drives the synthetic
/// phase, 2 the real phase and 3 dropout, so a run without pretraining
/// consumes exactly the randomness of a plain real-data run.
pub fn train_two_phase(cfg: &ExperimentConfig, real: &Dataset, synthetic: Option<&Dataset>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let num_classes = real.num_classes();
    let train = real.split_owned(Split::Train);
    if train.is_empty() {
        return Err(Error::Config(format!("dataset {} has an empty train split", real.name)));
    }
    let synthetic_pool: Vec<Sample> = match synthetic {
        Some(s) if cfg.synthetic_pretrain_steps > 0 => {
            if s.num_classes() != num_classes {
                return Err(Error::Config(format!(
                    "synthetic set has {} classes, real set {num_classes}",
                    s.num_classes()
                )));
            }
            s.split_owned(Split::Train)
        }
        _ => Vec::new(),
    };
    if cfg.synthetic_pretrain_steps > 0 && synthetic_pool.is_empty() {
        return Err(Error::Config("synthetic pretraining requested without synthetic samples".into()));
    }
    let real_pool = if cfg.oversample { oversample_balance(&train, num_classes, derive_seed(cfg.seed, 4))? } else { train };
    let val_split_empty = real.splits.val.is_empty();

    let classifier = Classifier::new(&cfg.model, num_classes, derive_seed(cfg.seed, 0))?;
    let mut model = Recognizer { classifier, dct_inputs: cfg.dct_inputs };
    let schedule = OneCycleSchedule64::new(cfg.peak_lr, cfg.total_steps, cfg.warmup_ratio)?;
    let mut opt = OptimizerState64::new(OptimizerConfig::radam(cfg.weight_decay), model.classifier.params().tensors());
    let mut synthetic_sampler = Sampler::new(synthetic_pool.len(), derive_seed(cfg.seed, 1));
    let mut real_sampler = Sampler::new(real_pool.len(), derive_seed(cfg.seed, 2));
    let mut dropout_rng = seeded(derive_seed(cfg.seed, 3));
    let val_every = (cfg.total_steps / 10).max(1);
    let mut metrics = Vec::with_capacity(cfg.total_steps + 10);

    for step in 0..cfg.total_steps {
        let phase = if step < cfg.synthetic_pretrain_steps { Phase::Pretrain } else { Phase::Finetune };
        let batch = match phase {
            Phase::Pretrain => draw_batch(&synthetic_pool, &mut synthetic_sampler, cfg.batch_size, false, &model)?,
            Phase::Finetune => draw_batch(&real_pool, &mut real_sampler, cfg.batch_size, cfg.augmentation, &model)?,
        };
        let lr = schedule.lr(step)?;
        let loss = train_step(&mut model.classifier, &mut opt, &batch, lr, &mut dropout_rng)?;
        metrics.push(Metric::Step { step: step + 1, phase, lr, loss });
        if !val_split_empty && (step + 1) % val_every == 0 {
            let val_accuracy = evaluate_accuracy(&model, real, Split::Val)?;
            metrics.push(Metric::Validation { step: step + 1, val_accuracy });
        }
    }
    Ok(TrainOutcome { model, metrics })
}

/// Real-data-only training with the same configuration.
pub fn train_baseline(cfg: &ExperimentConfig, real: &Dataset) -> Result<TrainOutcome> {
    let cfg = ExperimentConfig { synthetic_pretrain_steps: 0, ..cfg.clone() };
    train_two_phase(&cfg, real, None)
}

fn train_step(model: &mut Classifier, opt: &mut OptimizerState64, batch: &Batch, lr: f64, dropout_rng: &mut Rng) -> Result<f64> {
    let frames = batch.inputs[0].frames();
    let data = batch.inputs.iter().flat_map(|s| s.values().iter().copied()).collect();
    let x = Tensor64::new(vec![batch.inputs.len(), frames, crate::posedata::FEATURES], data)?;
    let mut g = Graph64::new();
    let p = model.params().bind(&mut g);
    let xv = g.constant(x);
    let logits = model.graph_logits(&mut g, &p, xv, &batch.valid, Some(dropout_rng))?;
    let loss = classify_loss(&mut g, logits, &batch.labels)?;
    let value = g.value(loss).item();
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("training loss {value}")));
    }
    let grads = g.backward(loss)?.collect(&g, &p);
    opt.step(model.params_mut().tensors_mut(), &grads, lr)?;
    model.params_mut().round_to_storage();
    Ok(value)
}
