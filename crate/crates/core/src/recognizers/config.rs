use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posedata::WINDOW;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformerSlConfig {
    pub layers: usize,
    pub heads: usize,
    pub hidden_dim: usize,
    pub mlp_dim: usize,
    /// Width of the hidden layer of the classification head.
    pub output_size: usize,
    pub dropout: f64,
    /// Positional table length: frames plus the class token.
    pub max_tokens: usize,
}

impl Default for TransformerSlConfig {
    fn default() -> Self {
        Self { layers: 2, heads: 4, hidden_dim: 80, mlp_dim: 256, output_size: 1024, dropout: 0.2, max_tokens: WINDOW + 1 }
    }
}

impl TransformerSlConfig {
    pub fn validate(&self) -> Result<()> {
        if [self.layers, self.heads, self.hidden_dim, self.mlp_dim, self.output_size, self.max_tokens].contains(&0) {
            return Err(Error::Config(format!("transformer dimensions must be positive: {self:?}")));
        }
        if self.hidden_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "hidden_dim {} is not divisible by {} heads",
                self.hidden_dim, self.heads
            )));
        }
        check_dropout(self.dropout)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MambaSlConfig {
    pub layers: usize,
    pub hidden_dim: usize,
    pub state_dim: usize,
    pub conv_width: usize,
    pub expand_factor: usize,
    pub output_size: usize,
    pub dropout: f64,
}

impl Default for MambaSlConfig {
    fn default() -> Self {
        Self { layers: 1, hidden_dim: 512, state_dim: 16, conv_width: 4, expand_factor: 2, output_size: 1024, dropout: 0.2 }
    }
}

impl MambaSlConfig {
    /// Rank of the low-rank Δ projection, `⌈hidden_dim / 16⌉`.
    pub fn dt_rank(&self) -> usize {
        self.hidden_dim.div_ceil(16)
    }

    pub fn inner_dim(&self) -> usize {
        self.expand_factor * self.hidden_dim
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.layers, self.hidden_dim, self.state_dim, self.conv_width, self.expand_factor, self.output_size];
        if dims.contains(&0) {
            return Err(Error::Config(format!("mamba dimensions must be positive: {self:?}")));
        }
        check_dropout(self.dropout)
    }
}

fn check_dropout(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")))
    }
}
