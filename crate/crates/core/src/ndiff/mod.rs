//! Dense tensors, a reverse-mode tape, weighted cross-entropy and Adam.
//!
//! Training runs in `f32`; every op is generic over [`Scalar`] so gradient
//! checks can run the same code in `f64`.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{
    decode_params, encode_params, load_checkpoint, save_checkpoint, CheckpointManifest, TensorEntry,
};
pub use params::{Bound, ParamStore};
pub use tape::{backward_invocations, Gradients, Tape, Var};
pub use tensor::{Scalar, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NdError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("tensors support 1 to 3 axes, got shape {0:?}")]
    Rank(Vec<usize>),
    #[error("shape {shape:?} does not match {len} values")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("axis {axis} out of range for shape {shape:?}")]
    Axis { axis: usize, shape: Vec<usize> },
    #[error("index out of range: {0}")]
    Index(String),
    #[error("value is not recorded on this tape")]
    NotOnTape,
    #[error("backward called on a value that does not depend on any trainable leaf")]
    Untraced,
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("label {label} outside 0..{classes}")]
    Label { label: usize, classes: usize },
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("missing parameter {0}")]
    MissingParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests;
