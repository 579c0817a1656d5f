use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posedata::FEATURES;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CmlpeConfig {
    pub num_blocks: usize,
    pub embed_dim: usize,
    pub input_frames: usize,
    pub target_frames: usize,
    pub features: usize,
    pub num_classes: usize,
    /// Standard deviation of the Gaussian noise added to the label embedding.
    pub noise_scale: f64,
    pub lr: f64,
    pub weight_decay: f64,
    /// Optimizer steps (not epochs).
    pub train_steps: usize,
    pub batch_size: usize,
}

impl Default for CmlpeConfig {
    fn default() -> Self {
        Self {
            num_blocks: 6,
            embed_dim: 32,
            input_frames: 16,
            target_frames: 16,
            features: FEATURES,
            num_classes: 1,
            noise_scale: 0.1,
            lr: 1e-4,
            weight_decay: 1e-4,
            train_steps: 100,
            batch_size: 256,
        }
    }
}

impl CmlpeConfig {
    pub fn with_classes(num_classes: usize) -> Self {
        Self { num_classes, ..Self::default() }
    }

    /// Frames of a full clip handled by a generation pair.
    pub fn clip_frames(&self) -> usize {
        self.input_frames + self.target_frames
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.num_blocks,
            self.embed_dim,
            self.input_frames,
            self.target_frames,
            self.features,
            self.num_classes,
            self.batch_size,
        ];
        if dims.contains(&0) {
            return Err(Error::Config(format!("generator dimensions must be positive: {self:?}")));
        }
        if self.input_frames != self.target_frames {
            return Err(Error::Config(format!(
                "input_frames ({}) must equal target_frames ({}) for paired generation",
                self.input_frames, self.target_frames
            )));
        }
        if !(self.noise_scale >= 0.0) || !(self.lr >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("noise_scale, lr and weight_decay must be non-negative".into()));
        }
        Ok(())
    }
}
