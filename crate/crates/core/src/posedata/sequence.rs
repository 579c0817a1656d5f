use numcore::Tensor64;

use super::layout::{COORDS, FEATURES};
use crate::error::{Error, Result};

/// `frames × 180` landmark coordinates. NaN marks a missing value before
/// cleaning.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseSequence {
    frames: usize,
    values: Vec<f64>,
}

impl PoseSequence {
    pub fn new(frames: usize, values: Vec<f64>) -> Result<Self> {
        if frames == 0 {
            return Err(Error::Config("a pose sequence needs at least one frame".into()));
        }
        if values.len() != frames * FEATURES {
            return Err(Error::Config(format!(
                "{} values do not form {frames} frames of {FEATURES}",
                values.len()
            )));
        }
        Ok(Self { frames, values })
    }

    pub fn zeros(frames: usize) -> Self {
        Self { frames, values: vec![0.0; frames * FEATURES] }
    }

    pub fn from_frames<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut values = Vec::new();
        let mut frames = 0;
        for r in rows {
            if r.len() != FEATURES {
                return Err(Error::Config(format!("frame of {} features", r.len())));
            }
            values.extend_from_slice(r);
            frames += 1;
        }
        Self::new(frames, values)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * FEATURES..(t + 1) * FEATURES]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.values[t * FEATURES..(t + 1) * FEATURES]
    }

    pub fn get(&self, t: usize, feature: usize) -> f64 {
        self.values[t * FEATURES + feature]
    }

    /// `(x, y, z)` of `landmark` at frame `t`.
    pub fn point(&self, t: usize, landmark: usize) -> [f64; 3] {
        let o = t * FEATURES + landmark * COORDS;
        [self.values[o], self.values[o + 1], self.values[o + 2]]
    }

    pub fn channel(&self, feature: usize) -> Vec<f64> {
        (0..self.frames).map(|t| self.get(t, feature)).collect()
    }

    pub fn set_channel(&mut self, feature: usize, data: &[f64]) {
        for (t, &v) in data.iter().enumerate() {
            self.values[t * FEATURES + feature] = v;
        }
    }

    pub fn is_clean(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Frames `start..start + len` as a new sequence.
    pub fn slice(&self, start: usize, len: usize) -> PoseSequence {
        Self { frames: len, values: self.values[start * FEATURES..(start + len) * FEATURES].to_vec() }
    }

    /// Frames in reverse temporal order.
    pub fn reversed(&self) -> PoseSequence {
        let mut values = Vec::with_capacity(self.values.len());
        for t in (0..self.frames).rev() {
            values.extend_from_slice(self.frame(t));
        }
        Self { frames: self.frames, values }
    }

    pub fn concat(&self, other: &PoseSequence) -> PoseSequence {
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Self { frames: self.frames + other.frames, values }
    }

    pub fn to_tensor(&self) -> Tensor64 {
        Tensor64::new([self.frames, FEATURES], self.values.clone()).expect("consistent shape")
    }

    /// View as `[frames, landmarks, 3]`.
    pub fn to_joint_tensor(&self) -> Tensor64 {
        Tensor64::new([self.frames, FEATURES / COORDS, COORDS], self.values.clone()).expect("consistent shape")
    }

    pub fn from_tensor(t: &Tensor64) -> Result<Self> {
        match t.shape() {
            [frames, f] if *f == FEATURES => Self::new(*frames, t.data().to_vec()),
            s => Err(Error::Num(numcore::NumError::Shape {
                op: "PoseSequence::from_tensor",
                detail: format!("{s:?}"),
            })),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reverse_and_slice() {
        let s = PoseSequence::new(3, (0..3 * FEATURES).map(|v| v as f64).collect()).unwrap();
        let r = s.reversed();
        assert_eq!(r.frame(0), s.frame(2));
        assert_eq!(r.reversed(), s);
        assert_eq!(s.slice(1, 2).frame(0), s.frame(1));
        assert_eq!(s.slice(0, 1).concat(&s.slice(1, 2)), s);
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(PoseSequence::new(0, vec![]).is_err());
        assert!(PoseSequence::new(2, vec![0.0; 10]).is_err());
    }
}
