//! The recurrent message-passing network: configuration, trainable
//! parameters, forward execution, losses, and boosted inference.

mod forward;
mod loss;
mod params;

pub use forward::{boosted_solve, forward, message_step, Objective, RunResult, SolveOptions, StateInit};
pub(crate) use forward::{record_forward, register_params, ConstraintGroups, ParamNodes};
pub use loss::{loss_csp, loss_discounted, loss_mis, LossKind};
pub(crate) use loss::record_loss;
pub use params::Parameters;

use crate::csp::ConstraintLanguage;
use std::sync::Arc;

/// Numeric epsilon inside batch normalization.
pub const BATCH_NORM_EPS: f64 = 1e-5;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("instance has no constraints; nothing can exchange messages")]
    EmptyInstance,
    #[error("iteration count must be at least 1")]
    ZeroIterations,
    #[error("parameter shapes do not match the model configuration")]
    ShapeMismatch,
    #[error("initial states have shape {got_rows}x{got_cols}, expected {rows}x{cols}")]
    BadInitialStates {
        got_rows: usize,
        got_cols: usize,
        rows: usize,
        cols: usize,
    },
    #[error(transparent)]
    Csp(#[from] crate::csp::CspError),
    #[error(transparent)]
    Tape(#[from] crate::tape::TapeError),
}

/// Network hyperparameters bound to one constraint language.
#[derive(Clone, Debug)]
pub struct ModelConfig {
    pub language: Arc<ConstraintLanguage>,
    /// State vector width k.
    pub state_size: usize,
    /// Message-passing iterations during training.
    pub train_iters: usize,
    /// Message-passing iterations during evaluation.
    pub eval_iters: usize,
    /// Geometric weight on per-iteration losses; later iterations count more.
    pub discount: f64,
    /// Offset added to the constraint loss in the independent-set objective;
    /// smaller values favor larger sets.
    pub mis_offset: f64,
    /// Binary domains read out one sigmoid probability instead of a softmax.
    pub sigmoid_readout: bool,
}

impl ModelConfig {
    pub fn new(language: Arc<ConstraintLanguage>) -> Self {
        let sigmoid_readout = language.domain_size() == 2;
        ModelConfig {
            language,
            state_size: 128,
            train_iters: 30,
            eval_iters: 100,
            discount: 0.95,
            mis_offset: 1.0,
            sigmoid_readout,
        }
    }
}
