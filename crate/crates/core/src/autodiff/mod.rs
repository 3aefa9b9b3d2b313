//! Exact-derivative engine.
//!
//! Two mechanisms cooperate here:
//!
//! * a reverse-mode [`Tape`] that records scalar primitives and yields
//!   gradients of any recorded scalar with respect to the registered
//!   parameter slots, and
//! * forward-mode propagation of input derivatives (value, first
//!   derivatives, pure second derivatives), whose components are
//!   themselves tape variables.
//!
//! Because the forward dual components live on the tape, a loss built
//! from PDE residuals — which contain input derivatives of the network
//! outputs — can be differentiated with respect to the parameters by a
//! single reverse sweep. Derivatives are exact for the composed function;
//! there is no truncation error.

mod check;
mod fdual;
mod scalar;
mod tape;

pub use check::{finite_diff_check, finite_diff_check_hess, FD_FLOOR};
pub use fdual::F1;
pub use scalar::{Scalar, TVar, TapeCell};
pub use tape::{swish_derivs, ParamSlots, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AutodiffError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameters must be registered on an empty tape")]
    ParamsNotFirst,
    #[error("parameter slot {slot} is not registered on this tape")]
    UnregisteredParam { slot: usize },
    #[error("variable {var} is out of range for this tape (len {len})")]
    VarOutOfRange { var: u32, len: usize },
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
}

/// Value plus exact input derivatives of one scalar output.
///
/// `input_grad[i]` is the first derivative with respect to input
/// coordinate `i`; `input_hess_diag[i]` is the pure second derivative
/// with respect to the same coordinate (mixed partials are not carried —
/// Laplacians only need the diagonal).
#[derive(Clone, Debug, PartialEq)]
pub struct DualValue {
    pub value: f64,
    pub input_grad: Vec<f64>,
    pub input_hess_diag: Vec<f64>,
}

impl DualValue {
    pub fn new(value: f64, input_grad: Vec<f64>, input_hess_diag: Vec<f64>) -> Result<Self, AutodiffError> {
        if input_grad.len() != input_hess_diag.len() {
            return Err(AutodiffError::DimensionMismatch {
                expected: input_grad.len(),
                got: input_hess_diag.len(),
            });
        }
        Ok(Self { value, input_grad, input_hess_diag })
    }

    /// A constant: all derivatives zero.
    pub fn constant(value: f64, dim: usize) -> Self {
        Self { value, input_grad: vec![0.0; dim], input_hess_diag: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.input_grad.len()
    }
}
