//! Dense tensors with tape-based reverse-mode differentiation.
//!
//! The primitive vocabulary is fixed and small: it covers exactly what a
//! convolutional object encoder, MLPs and a sum-aggregating graph network
//! need at 16×16 scale on a CPU. Forward passes record onto a [`Tape`];
//! [`Tape::backward`] walks it in reverse and returns gradients for the
//! registered parameters only.
//!
//! Everything is generic over [`Scalar`] so the same model code runs in
//! `f32` for training and in `f64` for finite-difference checks.

mod adam;
mod error;
pub mod gradcheck;
mod kernels;
mod params;
mod scalar;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use error::{Result, TensorError};
pub use params::{
    read_checkpoint, read_checkpoint_from, write_checkpoint, write_checkpoint_to, CheckpointEntry,
    ParamId, ParamStore,
};
pub use scalar::Scalar;
pub use tape::{Gradients, Primitive, Tape, Var};
pub use tensor::Tensor;
