use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cmlpe::CmlpeConfig;
use crate::error::{Error, Result};
use crate::recognizers::{MambaSlConfig, ModelConfig, TransformerSlConfig};

/// One classifier training run, stored as a single JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    pub model: ModelConfig,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub weight_decay: f64,
    pub total_steps: usize,
    pub warmup_ratio: f64,
    #[serde(default)]
    pub synthetic_pretrain_steps: usize,
    #[serde(default = "yes")]
    pub augmentation: bool,
    #[serde(default = "yes")]
    pub oversample: bool,
    #[serde(default)]
    pub seed: u64,
    /// Feed classifiers DCT coefficients of the window instead of frames.
    #[serde(default)]
    pub dct_inputs: bool,
    /// Generator settings for `train-gen`; defaults apply when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<CmlpeConfig>,
}

fn yes() -> bool {
    true
}

/// Published per-dataset hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetPreset {
    Lsfb,
    Include,
    Display,
}

impl FromStr for DatasetPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lsfb" => Ok(Self::Lsfb),
            "include" => Ok(Self::Include),
            "display" => Ok(Self::Display),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }
}

struct Schedule {
    batch_size: usize,
    weight_decay: f64,
    peak_lr: f64,
    total_steps: usize,
    warmup_ratio: f64,
    synthetic_pretrain_steps: usize,
}

impl ExperimentConfig {
    fn from_parts(model: ModelConfig, s: Schedule) -> Self {
        Self {
            dataset: None,
            model,
            batch_size: s.batch_size,
            peak_lr: s.peak_lr,
            weight_decay: s.weight_decay,
            total_steps: s.total_steps,
            warmup_ratio: s.warmup_ratio,
            synthetic_pretrain_steps: s.synthetic_pretrain_steps,
            augmentation: true,
            oversample: true,
            seed: 0,
            dct_inputs: false,
            generator: None,
        }
    }

    pub fn transformer_preset(preset: DatasetPreset) -> Self {
        let (mlp_dim, s) = match preset {
            DatasetPreset::Lsfb => (256, Schedule {
                batch_size: 2048,
                weight_decay: 1e-4,
                peak_lr: 1e-3,
                total_steps: 50,
                warmup_ratio: 0.3,
                synthetic_pretrain_steps: 5,
            }),
            DatasetPreset::Include => (128, Schedule {
                batch_size: 16,
                weight_decay: 1e-4,
                peak_lr: 1e-2,
                total_steps: 400,
                warmup_ratio: 0.3,
                synthetic_pretrain_steps: 75,
            }),
            DatasetPreset::Display => (128, Schedule {
                batch_size: 16,
                weight_decay: 1e-4,
                peak_lr: 1e-2,
                total_steps: 400,
                warmup_ratio: 0.1,
                synthetic_pretrain_steps: 50,
            }),
        };
        let model = TransformerSlConfig { layers: 2, heads: 4, hidden_dim: 80, mlp_dim, output_size: 1024, ..Default::default() };
        Self::from_parts(ModelConfig::TransformerSl(model), s)
    }

    pub fn mamba_preset(preset: DatasetPreset) -> Self {
        let (layers, hidden_dim, s) = match preset {
            DatasetPreset::Lsfb => (1, 512, Schedule {
                batch_size: 2048,
                weight_decay: 1e-3,
                peak_lr: 1e-4,
                total_steps: 50,
                warmup_ratio: 0.1,
                synthetic_pretrain_steps: 5,
            }),
            DatasetPreset::Include => (2, 64, Schedule {
                batch_size: 16,
                weight_decay: 1e-4,
                peak_lr: 1e-2,
                total_steps: 400,
                warmup_ratio: 0.3,
                synthetic_pretrain_steps: 75,
            }),
            DatasetPreset::Display => (1, 64, Schedule {
                batch_size: 16,
                weight_decay: 1e-4,
                peak_lr: 1e-2,
                total_steps: 400,
                warmup_ratio: 0.1,
                synthetic_pretrain_steps: 50,
            }),
        };
        let model = MambaSlConfig { layers, hidden_dim, output_size: 1024, ..Default::default() };
        Self::from_parts(ModelConfig::MambaSl(model), s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 || self.total_steps == 0 {
            return Err(Error::Config("batch_size and total_steps must be positive".into()));
        }
        if self.synthetic_pretrain_steps > self.total_steps {
            return Err(Error::Config(format!(
                "synthetic_pretrain_steps {} exceeds total_steps {}",
                self.synthetic_pretrain_steps, self.total_steps
            )));
        }
        if !(self.warmup_ratio > 0.0 && self.warmup_ratio < 1.0) {
            return Err(Error::Config(format!("warmup_ratio {} outside (0, 1)", self.warmup_ratio)));
        }
        if !(self.peak_lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("peak_lr must be positive and weight_decay non-negative".into()));
        }
        if let Some(g) = &self.generator {
            g.validate()?;
        }
        Ok(())
    }
}
