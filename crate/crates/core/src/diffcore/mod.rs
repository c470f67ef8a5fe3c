//! Small reverse-mode differentiation engine for dense networks.

mod adam;
mod gradcheck;
mod graph;
mod tensor;

pub use adam::{clip_grad_norm, AdamConfig, AdamState};
pub use gradcheck::{analytic_gradients, compare_gradients, grad_check, relative_error};
pub use graph::{log_sum_exp, Gradients, Graph, Var};
pub use tensor::Tensor;
