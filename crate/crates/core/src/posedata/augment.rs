use rand::Rng as _;

use super::layout::{LandmarkLayout, COORDS};
use super::sequence::PoseSequence;
use crate::rng::seeded;

pub const MAX_ROTATION_DEG: f64 = 5.0;
pub const MAX_SCALE_DEVIATION: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    pub rotation_rad: f64,
    pub scale: f64,
}

impl AugmentParams {
    pub fn identity() -> Self {
        Self { rotation_rad: 0.0, scale: 1.0 }
    }

    /// `θ ~ U(−5°, 5°)`, `s ~ U(0.95, 1.05)`.
    pub fn draw(seed: u64) -> Self {
        let mut rng = seeded(seed);
        let deg = rng.random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG);
        let scale = rng.random_range(1.0 - MAX_SCALE_DEVIATION..=1.0 + MAX_SCALE_DEVIATION);
        Self { rotation_rad: deg.to_radians(), scale }
    }
}

/// Random in-plane rotation and uniform scaling of the first `valid_frames`
/// rows; padding rows are left untouched.
pub fn augment(seq: &PoseSequence, valid_frames: usize, seed: u64) -> PoseSequence {
    augment_with(seq, valid_frames, AugmentParams::draw(seed), &LandmarkLayout::default())
}

/// Rotates `(x, y)` about the mean `(x, y)` of all landmarks in the valid
/// frames and scales about the same center. Face and body depth is scaled
/// about its own mean; hand depth stays zero.
pub fn augment_with(seq: &PoseSequence, valid_frames: usize, p: AugmentParams, layout: &LandmarkLayout) -> PoseSequence {
    let valid = valid_frames.min(seq.frames());
    if valid == 0 {
        return seq.clone();
    }
    let total = layout.total();
    let (mut cx, mut cy, mut cz) = (0.0, 0.0, 0.0);
    let mut depth_count = 0usize;
    for t in 0..valid {
        for l in 0..total {
            let [x, y, z] = seq.point(t, l);
            cx += x;
            cy += y;
            if !layout.is_hand(l) {
                cz += z;
                depth_count += 1;
            }
        }
    }
    let n = (valid * total) as f64;
    cx /= n;
    cy /= n;
    if depth_count > 0 {
        cz /= depth_count as f64;
    }
    let (sin, cos) = p.rotation_rad.sin_cos();
    let mut out = seq.clone();
    for t in 0..valid {
        let frame = out.frame_mut(t);
        for l in 0..total {
            let o = l * COORDS;
            let (dx, dy) = (frame[o] - cx, frame[o + 1] - cy);
            frame[o] = cx + p.scale * (cos * dx - sin * dy);
            frame[o + 1] = cy + p.scale * (sin * dx + cos * dy);
            if !layout.is_hand(l) {
                frame[o + 2] = cz + p.scale * (frame[o + 2] - cz);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_within_bounds() {
        for seed in 0..1000 {
            let p = AugmentParams::draw(seed);
            assert!(p.rotation_rad.abs() <= MAX_ROTATION_DEG.to_radians());
            assert!((0.95..=1.05).contains(&p.scale));
        }
    }

    #[test]
    fn identity_params_change_nothing() {
        let s = PoseSequence::new(2, (0..360).map(|v| (v as f64 * 0.01).sin()).collect()).unwrap();
        let out = augment_with(&s, 2, AugmentParams::identity(), &LandmarkLayout::default());
        assert!(out.values().iter().zip(s.values()).all(|(a, b)| (a - b).abs() < 1e-15));
    }
}
