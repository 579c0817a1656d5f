//! Sign-language pose toolkit: data pipeline, a label-conditioned motion
//! generator, two sequence classifiers and a two-phase (synthetic pretrain,
//! real fine-tune) training harness.

pub mod cmlpe;
pub mod error;
pub mod harness;
pub mod params;
pub mod posedata;
pub mod recognizers;
pub mod rng;

pub use error::{Error, Result};
