//! Minimal reverse-mode differentiation, optimizers and parameter-space
//! arithmetic.

mod graph;
mod gradcheck;
mod optim;
mod tensor;

pub use graph::{masked_log_softmax, softmax, Grads, Graph, Var};
pub use gradcheck::{grad_check, GradCheckReport, FD_STEP};
pub use optim::{Adam, AdamConfig, Sgd};
pub use tensor::{interpolate_params, ParamStore, Tensor, CHECKPOINT_VERSION};
