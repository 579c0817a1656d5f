//! Sequence classifiers over 32-frame pose windows: a Transformer encoder
//! with a leading class token and a selective state-space (Mamba-style)
//! backbone with the class token placed after the last real frame.

mod classifier;
mod config;
mod head;
mod mamba;
mod transformer;

pub use classifier::{classify_loss, Classifier, ModelConfig, Tokens};
pub use config::{MambaSlConfig, TransformerSlConfig};
pub use mamba::MambaSl;
pub use transformer::{attention, TransformerSl};
