use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::model::Noise;
use super::train::GenerationPair;
use crate::error::{Error, Result};
use crate::posedata::{window_frames, Dataset, PoseSequence, Sample, Split, Splits, WindowMode};
use crate::rng::{derive_seed, seeded};

/// Builds a full synthetic clip from a real one.
///
/// The second half is the forward model's continuation of the first real
/// half; the first half is the reversed model's continuation of the reversed
/// second real half, reversed back. Each model gets its own noise draw.
pub fn generate_sequence(pair: &GenerationPair, seed_clip: &PoseSequence, label: usize, seed: u64) -> Result<PoseSequence> {
    let cfg = pair.config();
    let (m, t) = (cfg.input_frames, cfg.target_frames);
    if seed_clip.frames() != m + t {
        return Err(Error::Config(format!("seed clip has {} frames, expected {}", seed_clip.frames(), m + t)));
    }
    if !pair.all_finite() {
        return Err(Error::NonFinite("generator parameters".into()));
    }
    let mut rng = seeded(seed);
    let eps_forward = pair.forward_model.sample_noise(1, &mut rng);
    let eps_reversed = pair.reversed_model.sample_noise(1, &mut rng);
    let second = pair
        .forward_model
        .forward(&seed_clip.slice(0, m), label, Noise::Given(eps_forward.data()))?;
    let first = pair
        .reversed_model
        .forward(&seed_clip.slice(m, t).reversed(), label, Noise::Given(eps_reversed.data()))?
        .reversed();
    let out = first.concat(&second);
    if !out.is_clean() {
        return Err(Error::NonFinite("generated clip".into()));
    }
    Ok(out)
}

/// Class-balanced synthetic dataset: `n_per_class` clips for every class,
/// each generated from a real train clip of that class. Seed clips are taken
/// cyclically from a seeded shuffle of the class members. `None` uses the
/// largest real class count.
pub fn build_synthetic_dataset(
    pair: &GenerationPair,
    real: &Dataset,
    n_per_class: Option<usize>,
    seed: u64,
) -> Result<Dataset> {
    let num_classes = real.num_classes();
    let clip_len = pair.config().clip_frames();
    let train = real.split(Split::Train);
    let mut members: Vec<Vec<&Sample>> = vec![Vec::new(); num_classes];
    for s in train {
        members[s.class_index].push(s);
    }
    if let Some(c) = members.iter().position(Vec::is_empty) {
        return Err(Error::Config(format!("class {c} ({}) has no real training clips", real.classes[c])));
    }
    let n = n_per_class.unwrap_or_else(|| members.iter().map(Vec::len).max().unwrap_or(0));

    let mut jobs = Vec::with_capacity(num_classes * n);
    for (c, list) in members.iter_mut().enumerate() {
        list.shuffle(&mut seeded(derive_seed(seed, c as u64)));
        for k in 0..n {
            jobs.push((c, k, list[k % list.len()]));
        }
    }
    let base = derive_seed(seed, u64::MAX);
    let samples: Vec<Sample> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, &(c, k, src))| {
            let s = derive_seed(base, i as u64);
            let clip = window_frames(&src.sequence, clip_len, WindowMode::Random(derive_seed(s, 0))).sequence;
            let sequence = generate_sequence(pair, &clip, c, derive_seed(s, 1))?;
            Ok(Sample { id: format!("syn-c{c:03}-{k:05}"), class_index: c, sequence })
        })
        .collect::<Result<_>>()?;
    let splits = Splits { train: samples.iter().map(|s| s.id.clone()).collect(), ..Splits::default() };
    let mut ds = Dataset::new(format!("{}-synthetic", real.name), real.classes.clone(), samples, splits)?;
    ds.synthetic = true;
    Ok(ds)
}
