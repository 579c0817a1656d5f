//! Numeric core: dense tensors, a tape-based reverse-mode differentiator,
//! orthonormal DCT, Adam/RAdam and a one-cycle learning-rate schedule.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the 64-bit type that model code uses.

mod dct;
mod error;
mod gradcheck;
mod graph;
mod kernels;
mod optim;
mod scalar;
mod schedule;
mod tensor;

pub use dct::DctBasis;
pub use error::{NumError, Result};
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Gradients, Graph, Unary, Var};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};
pub use scalar::Scalar;
pub use schedule::OneCycleSchedule;
pub use tensor::Tensor;

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Graph64 = Graph<f64>;
pub type Gradients64 = Gradients<f64>;
pub type DctBasis64 = DctBasis<f64>;
pub type OptimizerState64 = OptimizerState<f64>;
pub type OneCycleSchedule64 = OneCycleSchedule<f64>;
