//! Reverse-mode differentiation over scalars and dense arrays.

mod gradcheck;
pub mod kernels;
mod real;
mod tape;

pub use gradcheck::grad_check;
pub use real::{indicator, Real, VarCtx};
pub use tape::{Gradients, Shape, Tape, Var};
