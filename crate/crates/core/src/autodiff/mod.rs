//! Reverse-mode automatic differentiation over dense n-d arrays.
//!
//! The graph is a DAG of [`Tensor`] nodes built during the forward pass;
//! [`backward`] walks it once in reverse topological order and accumulates
//! gradients into parameter leaves. Forward kernels may parallelize
//! internally (disjoint output slabs, fixed reduction order), so results
//! are bitwise deterministic for any worker count. Graph construction and
//! backward are single-threaded per training step.

mod adam;
mod checkpoint;
mod conv;
mod norm;
mod ops;
mod tensor;

pub use adam::{adam_step, zero_grads, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, AdamSnapshot, Checkpoint, NamedParam};
pub use conv::{conv3d, conv3d_output_dims, tconv3d, tconv3d_output_dims, ConvParams, KERNEL};
pub use norm::{norm_layer, NormMode};
pub use ops::{
    add, concat_channels, leaky_relu, mul, relu, scale, sigmoid, sub, sum, tanh,
};
pub use tensor::{backward, no_grad, Adjoints, Scalar, Tensor};

use thiserror::Error;

/// Errors raised while building or differentiating the graph.
#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch { context: &'static str, expected: Vec<usize>, got: Vec<usize> },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("parameter {0} has no gradient; run backward first")]
    MissingGrad(usize),
    #[error("convolution stride must be 1 or 2, got {0}")]
    BadStride(usize),
    #[error("spatial dims {dims:?} with padding {pad} are smaller than the 4^3 kernel")]
    InputTooSmall { dims: [usize; 3], pad: usize },
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
