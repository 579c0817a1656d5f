use rayon::prelude::*;
use serde::Serialize;

use super::train::Recognizer;
use crate::cmlpe::{mpjpe_sequences, GenerationPair, Noise};
use crate::error::{Error, Result};
use crate::posedata::{window_frames, Dataset, Split, Window, WindowMode, WINDOW};

const EVAL_CHUNK: usize = 64;

/// Top-1 accuracy on centered windows of `split`, dropout off.
pub fn evaluate_accuracy(model: &Recognizer, dataset: &Dataset, split: Split) -> Result<f64> {
    let samples = dataset.split(split);
    if samples.is_empty() {
        return Err(Error::Config(format!("{split:?} split of {} is empty", dataset.name)));
    }
    let windows: Vec<Window> = samples.iter().map(|s| window_frames(&s.sequence, WINDOW, WindowMode::Center)).collect();
    let predictions: Vec<Vec<usize>> = windows
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| model.predict_windows(chunk))
        .collect::<Result<_>>()?;
    let correct = predictions
        .iter()
        .flatten()
        .zip(&samples)
        .filter(|(p, s)| **p == s.class_index)
        .count();
    Ok(correct as f64 / samples.len() as f64)
}

/// Mean MPJPE of each generator direction on centered windows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GeneratorReport {
    pub forward: f64,
    pub reversed: f64,
}

/// Forward: first half → second half. Reversed: reversed second half →
/// reversed first half. Label noise is off.
pub fn evaluate_generator(pair: &GenerationPair, dataset: &Dataset, split: Split) -> Result<GeneratorReport> {
    let samples = dataset.split(split);
    if samples.is_empty() {
        return Err(Error::Config(format!("{split:?} split of {} is empty", dataset.name)));
    }
    let cfg = pair.config();
    let (m, t) = (cfg.input_frames, cfg.target_frames);
    let per_sample: Vec<(f64, f64)> = samples
        .par_iter()
        .map(|s| {
            let w = window_frames(&s.sequence, m + t, WindowMode::Center).sequence;
            let (first, second) = (w.slice(0, m), w.slice(m, t));
            let fwd = pair.forward_model.forward(&first, s.class_index, Noise::Zero)?;
            let rev = pair.reversed_model.forward(&second.reversed(), s.class_index, Noise::Zero)?;
            Ok((mpjpe_sequences(&fwd, &second)?, mpjpe_sequences(&rev, &first.reversed())?))
        })
        .collect::<Result<_>>()?;
    let n = per_sample.len() as f64;
    Ok(GeneratorReport {
        forward: per_sample.iter().map(|p| p.0).sum::<f64>() / n,
        reversed: per_sample.iter().map(|p| p.1).sum::<f64>() / n,
    })
}
