//! Scalar automatic differentiation: reverse-mode tape plus forward Taylor
//! jets, composable as reverse-over-forward.
//!
//! * [`grad`] differentiates a scalar function of many parameters by
//!   recording a tape and running one backward sweep.
//! * [`Jet`] / [`jet_eval`] propagate input derivatives up to order 3
//!   forward through a computation.
//! * Because jet coefficients can themselves be tape variables, gradients of
//!   jet-using losses (PDE residuals and the like) need no extra machinery:
//!   build jets of [`Var`]s inside a [`grad`] closure and the backward sweep
//!   differentiates through the whole propagation.

mod jet;
mod tape;

pub use jet::{jet_eval, Jet};
pub use tape::{eval_value, grad, grad_check, tape_fn, Op, Tape, Var};

/// Errors from differentiation.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdError {
    /// An intermediate value, partial, or gradient entry was NaN/infinite.
    #[error("non-finite value encountered during differentiation")]
    NonFiniteValue,

    /// Requested jet order above the supported maximum of 3.
    #[error("jet order {order} exceeds the supported maximum of 3")]
    OrderTooHigh { order: usize },

    /// Opcode byte outside the registered primitive set.
    #[error("unregistered primitive opcode {opcode}")]
    UnregisteredOp { opcode: u8 },
}
