//! Dense and LSTM layers with hand-derived gradients, losses, a linear SVM,
//! optimizers, a training loop and finite-difference gradient checks.
//!
//! Batched tensors are row-major with one example per row. Sequences are
//! `(steps, batch, features)`.

mod checkpoint;
mod dense;
pub mod gradcheck;
mod loss;
mod lstm;
mod optim;
mod svm;
mod train;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};
pub use dense::{Activation, DenseGrads, DenseLayer};
pub use loss::{argmax, hinge, l1_loss, mse_loss, softmax, softmax_xent, softmax_xent_batch};
pub use lstm::{Gate, LstmCache, LstmCell, LstmGrads, DEFAULT_FORGET_BIAS};
pub use optim::{OptimizerKind, OptimizerState, TrainConfig};
pub use svm::{hinge_train, hinge_train_traced, SvmModel};
pub use train::{evaluate_all, EVAL_CHUNK, train_loop, BatchOutput, Trace, TraceRow, Trainable};

#[derive(Debug, Error)]
pub enum NeuroError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("loss became non-finite at step {0}")]
    NanLoss(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
}

pub(crate) fn shape_err(expected: impl std::fmt::Debug, got: impl std::fmt::Debug) -> NeuroError {
    NeuroError::ShapeMismatch { expected: format!("{expected:?}"), got: format!("{got:?}") }
}

/// Flat access to every trainable tensor, in a fixed order. Gradients are
/// stored in a value of the same type, so both sides enumerate identically.
pub trait Params {
    fn slices(&self) -> Vec<&[f64]>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    fn flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    fn set_flat(&mut self, values: &[f64]) -> Result<(), NeuroError> {
        if values.len() != self.num_params() {
            return Err(shape_err(self.num_params(), values.len()));
        }
        let mut off = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&values[off..off + s.len()]);
            off += s.len();
        }
        Ok(())
    }

    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut z = self.clone();
        for s in z.slices_mut() {
            s.fill(0.0);
        }
        z
    }

    fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Uniform draw in `[-bound, bound]`.
pub(crate) fn uniform(rng: &mut ChaCha8Rng, bound: f64) -> f64 {
    bound * (2.0 * rng.gen::<f64>() - 1.0)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
