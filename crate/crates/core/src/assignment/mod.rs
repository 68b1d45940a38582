//! Differentiable assignment: Sinkhorn normalization, Kuhn-Munkres,
//! Hungarian attention and the contrastive objective.

mod attention;
mod contrastive;
mod hungarian;
mod sinkhorn;

use ndarray::Array2;

pub use attention::{
    attended_bce_loss, attention_mask, hungarian_attention_mask, one_hot, AttentionMask,
    BCE_EPSILON,
};
pub use contrastive::{contrastive_loss, ContrastiveOutput};
pub use hungarian::{hungarian_binarize, hungarian_solve, solve_rectangular};
pub use sinkhorn::{
    max_marginal_deviation, sinkhorn_backward, sinkhorn_normalize, DoublyStochasticMatrix,
    DEFAULT_MAX_ITERS, DEFAULT_TOL,
};

/// Dense piece-by-slot score matrix; larger means a better match.
pub type CostMatrix = Array2<f64>;
