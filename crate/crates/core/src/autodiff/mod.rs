//! Exact derivatives of the trial field.
//!
//! Spatial derivatives (value, gradient, Hessian) are carried forward through
//! the network as jets; parameter gradients of a loss assembled from those
//! jets are obtained by a reverse sweep over the recorded forward pass.

mod activation;
mod batch;
mod jet;

pub use activation::{ActivationKind, DEFAULT_LEAKY_SLOPE, DEFAULT_SMRELU_RHO};
pub use batch::{
    fold_pattern, forward_batch, loss_param_gradient, BatchJets, Integrand, InteriorTerm,
    LossGradient, MismatchTerm, ParamGradient,
};
pub use jet::{forward_jet, hess_pairs, Jet, JetOrder};

/// `activation_eval` in operation form: σ and its derivatives up to order 3.
pub fn activation_eval(kind: ActivationKind, x: f64, order: usize) -> f64 {
    kind.eval(x, order)
}
