//! Procedural sign-like motion datasets with known class structure.
//!
//! Every class owns a trajectory template: each landmark follows a sum of two
//! sinusoids around a rest pose. Classes share the rest pose and a common
//! motion component and differ by a class-specific component whose weight is
//! `class_separation`. Samples are templates with random speed, phase,
//! translation and per-frame jitter. Hand depth is zero as in real data.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::dataset::{Dataset, Sample, Splits};
use super::layout::{LandmarkLayout, COORDS, FEATURES};
use super::sequence::PoseSequence;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct ToyWorldConfig {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    /// Weight of the class-specific motion relative to the shared motion.
    pub class_separation: f64,
    /// Standard deviation of the per-frame jitter.
    pub noise: f64,
    /// Fraction of each class placed in the test split (rounded down, at
    /// least one sample stays in train).
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for ToyWorldConfig {
    fn default() -> Self {
        Self {
            num_classes: 4,
            samples_per_class: 5,
            min_frames: 24,
            max_frames: 40,
            class_separation: 1.0,
            noise: 0.01,
            test_fraction: 0.0,
            seed: 0,
        }
    }
}

struct Component {
    amplitude: Vec<f64>,
    freq: Vec<f64>,
    phase: Vec<f64>,
}

impl Component {
    fn draw(rng: &mut Rng, amp: f64) -> Self {
        Self {
            amplitude: (0..FEATURES).map(|_| rng.random_range(-amp..amp)).collect(),
            freq: (0..FEATURES).map(|_| rng.random_range(0.5..2.5)).collect(),
            phase: (0..FEATURES).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect(),
        }
    }

    fn at(&self, f: usize, u: f64) -> f64 {
        self.amplitude[f] * (std::f64::consts::TAU * self.freq[f] * u + self.phase[f]).sin()
    }
}

pub fn toyworld(cfg: &ToyWorldConfig) -> Result<Dataset> {
    if cfg.num_classes == 0 || cfg.samples_per_class == 0 || cfg.min_frames == 0 || cfg.min_frames > cfg.max_frames {
        return Err(Error::Config(format!("invalid toy world config {cfg:?}")));
    }
    let layout = LandmarkLayout::default();
    let mut rng = seeded(derive_seed(cfg.seed, 0));
    let rest: Vec<f64> = (0..FEATURES).map(|_| rng.random_range(0.3..0.7)).collect();
    let shared = Component::draw(&mut rng, 0.08);
    let classes: Vec<Component> = (0..cfg.num_classes).map(|_| Component::draw(&mut rng, 0.08)).collect();
    let jitter = Normal::new(0.0, cfg.noise.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;

    let mut samples = Vec::new();
    let mut splits = Splits::default();
    for (c, class) in classes.iter().enumerate() {
        let n_test = ((cfg.samples_per_class as f64 * cfg.test_fraction).floor() as usize)
            .min(cfg.samples_per_class - 1);
        for k in 0..cfg.samples_per_class {
            let mut r = seeded(derive_seed(cfg.seed, 1 + (c * cfg.samples_per_class + k) as u64));
            let frames = r.random_range(cfg.min_frames..=cfg.max_frames);
            let speed = r.random_range(0.85..1.15);
            let shift = r.random_range(-0.05..0.05);
            let offset = [r.random_range(-0.03..0.03), r.random_range(-0.03..0.03)];
            let mut values = Vec::with_capacity(frames * FEATURES);
            for t in 0..frames {
                let u = speed * t as f64 / frames as f64 + shift;
                for f in 0..FEATURES {
                    let landmark = f / COORDS;
                    let coord = f % COORDS;
                    if coord == 2 && layout.is_hand(landmark) {
                        values.push(0.0);
                        continue;
                    }
                    let mut v = rest[f] + shared.at(f, u) + cfg.class_separation * class.at(f, u);
                    if coord < 2 {
                        v += offset[coord];
                    }
                    v += jitter.sample(&mut r);
                    values.push(v);
                }
            }
            let id = format!("c{c:02}-s{k:03}");
            if k < n_test {
                splits.test.push(id.clone());
            } else {
                splits.train.push(id.clone());
            }
            samples.push(Sample { id, class_index: c, sequence: PoseSequence::new(frames, values)? });
        }
    }
    let names = (0..cfg.num_classes).map(|c| format!("sign-{c}")).collect();
    Dataset::new(format!("toyworld-{}", cfg.seed), names, samples, splits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posedata::Split;

    #[test]
    fn shape_and_split() {
        let cfg = ToyWorldConfig { num_classes: 3, samples_per_class: 4, test_fraction: 0.5, ..Default::default() };
        let ds = toyworld(&cfg).unwrap();
        assert_eq!(ds.samples.len(), 12);
        assert_eq!(ds.class_counts(Split::Train), vec![2, 2, 2]);
        assert_eq!(ds.class_counts(Split::Test), vec![2, 2, 2]);
        let layout = LandmarkLayout::default();
        for s in &ds.samples {
            assert!(s.sequence.is_clean());
            assert_eq!(s.sequence.point(0, layout.hand_landmarks().start)[2], 0.0);
        }
        assert_eq!(toyworld(&cfg).unwrap(), ds);
    }
}
