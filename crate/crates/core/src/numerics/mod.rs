//! Dense matrices, a dynamic reverse-mode tape, optimizers and a
//! central-difference gradient checker.
//!
//! A [`Tape`] is rebuilt for every forward pass. Trainable weights live in a
//! [`ParamStore`] outside the tape and are bound onto it as leaves with
//! [`ParamStore::bind`]; after [`Tape::backward`] the gradients are folded
//! back into the store and an [`Optimizer`] updates the weights in place.

mod gradcheck;
mod init;
mod matrix;
mod optim;
mod params;
mod tape;

pub use gradcheck::{grad_check, grad_check_params, ParamCheck};
pub use init::glorot_uniform;
pub use matrix::Matrix;
pub use optim::{Adam, Optimizer, OptimizerKind, Sgd};
pub use params::{BoundParams, Param, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};

use thiserror::Error;

/// Lower clamp applied to the argument of `log`.
pub const LOG_EPS: f64 = 1e-12;
/// Pre-activations are clamped to `[-SIGMOID_CLAMP, SIGMOID_CLAMP]` before the logistic.
pub const SIGMOID_CLAMP: f64 = 30.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {}x{} vs {}x{}", .left.0, .left.1, .right.0, .right.1)]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("data of length {len} cannot fill a {rows}x{cols} matrix")]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("row {row} has {found} entries, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("backward needs a 1x1 loss, got {}x{}", .0.0, .0.1)]
    NonScalarLoss((usize, usize)),
    #[error("parameter `{0}` has no gradient; run backward before stepping")]
    MissingGrad(String),
}

impl NumericsError {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        NumericsError::Shape { op, left, right }
    }
}
