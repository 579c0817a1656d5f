use rand::Rng as _;

use super::sequence::PoseSequence;
use crate::rng::seeded;

/// Frames per training and evaluation clip.
pub const WINDOW: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowMode {
    /// Uniform start in `[0, N − window]`, for training.
    Random(u64),
    /// Start at `⌊(N − window) / 2⌋`, for evaluation.
    Center,
}

/// A fixed-length clip and the number of rows that hold real frames.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub sequence: PoseSequence,
    pub valid_frames: usize,
    pub start: usize,
}

/// Cuts a contiguous `window`-frame slice, or zero-pads clips that are
/// shorter than `window`.
pub fn window_frames(seq: &PoseSequence, window: usize, mode: WindowMode) -> Window {
    let n = seq.frames();
    if n >= window {
        let slack = n - window;
        let start = match mode {
            WindowMode::Random(seed) => seeded(seed).random_range(0..=slack),
            WindowMode::Center => slack / 2,
        };
        Window { sequence: seq.slice(start, window), valid_frames: window, start }
    } else {
        let padded = seq.concat(&PoseSequence::zeros(window - n));
        Window { sequence: padded, valid_frames: n, start: 0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posedata::FEATURES;

    fn ramp(n: usize) -> PoseSequence {
        PoseSequence::new(n, (0..n * FEATURES).map(|v| (v / FEATURES) as f64 + 1.0).collect()).unwrap()
    }

    #[test]
    fn random_start_range() {
        let s = ramp(40);
        for seed in 0..200 {
            let w = window_frames(&s, 32, WindowMode::Random(seed));
            assert!(w.start <= 8);
            assert_eq!(w.sequence.frames(), 32);
            assert_eq!(w.sequence.get(0, 0), (w.start + 1) as f64);
        }
    }

    #[test]
    fn short_clip_is_zero_padded() {
        let w = window_frames(&ramp(20), 32, WindowMode::Random(3));
        assert_eq!(w.valid_frames, 20);
        assert_eq!(w.sequence.frames(), 32);
        assert!((0..20).all(|t| w.sequence.get(t, 0) != 0.0));
        assert!((20..32).all(|t| w.sequence.frame(t).iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn center_on_exact_length_is_identity() {
        let s = ramp(32);
        let w = window_frames(&s, 32, WindowMode::Center);
        assert_eq!(w.sequence, s);
        assert_eq!(w.valid_frames, 32);
        assert_eq!(window_frames(&ramp(41), 32, WindowMode::Center).start, 4);
    }
}
