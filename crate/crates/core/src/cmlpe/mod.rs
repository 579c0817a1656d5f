//! Label-conditioned MLP motion generator.
//!
//! A model maps 16 observed frames and a sign label to the next 16 frames.
//! Two models, one trained on time-reversed clips, are combined to produce
//! full 32-frame synthetic clips.

mod config;
mod generate;
mod loss;
mod metric;
mod model;
mod train;

pub use config::CmlpeConfig;
pub use generate::{build_synthetic_dataset, generate_sequence};
pub use loss::{motion_loss, MotionLoss};
pub use metric::{mpjpe, mpjpe_sequences};
pub use model::{CmlpeModel, Noise};
pub use train::{train_generator, GenerationPair, GeneratorTrace};
