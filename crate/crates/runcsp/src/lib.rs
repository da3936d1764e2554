//! Unsupervised recurrent message-passing networks for binary Max-CSP,
//! plus the instance generators, exact oracles, and classical baselines
//! needed to train and evaluate them end to end.

pub mod csp;
pub mod eval;
pub mod model;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use csp::{ConstraintLanguage, Constraint, HardAssignment, Instance, Problem, Relation, SoftAssignment};
pub use model::{ModelConfig, Parameters, RunResult};
pub use scalar::Scalar;
pub use tensor::Tensor;

/// Concrete f64 aliases; the numeric core itself is generic over [`Scalar`].
pub type Tensor64 = Tensor<f64>;
pub type SoftAssignment64 = SoftAssignment<f64>;
pub type Parameters64 = Parameters<f64>;
pub type RunResult64 = RunResult<f64>;

/// f32 variants for callers trading precision for memory.
pub type Tensor32 = Tensor<f32>;
pub type SoftAssignment32 = SoftAssignment<f32>;
pub type Parameters32 = Parameters<f32>;
pub type RunResult32 = RunResult<f32>;
