//! Reverse-mode automatic differentiation over small dense `f64` tensors.
//!
//! A [`Tape`] records forward operations on [`Var`] handles; [`Tape::backward`]
//! sweeps the recording in reverse and accumulates gradients on leaves created
//! with `requires_grad`. Gradients persist until [`Tape::zero_grad`] or
//! [`Tape::reset`], so losses from several heads can be summed before one
//! optimizer step.
//!
//! Broadcasting is limited to scalar-vs-tensor in elementwise ops plus the
//! explicit [`Tape::add_row`] bias op.

pub mod adam;
pub mod error;
pub mod gradcheck;
pub mod nn;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use adam::{clip_global_norm, AdamState};
pub use error::{DiffError, Result};
pub use gradcheck::{compare_gradients, finite_diff_check, op_oracle_suite, GradCheckConfig, GradCheckReport, OpCheck};
pub use nn::{collect_grads, BoundLinear, BoundMlp, Linear, Mlp, Param, Parameters};
pub use rng::{RngState, SplitRng};
pub use tape::{BinaryOp, Tape, UnaryOp, Var, GUARD_EPS};
pub use tensor::Tensor;
