//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Values live in [`Tensor`]; computations are recorded on a [`Tape`] through
//! [`Var`] handles. [`Tape::grad`] with `create_graph = true` records the
//! backward pass itself, so gradients such as an input gradient can be
//! differentiated again (gradient penalties, adversarial perturbations).
//!
//! ReLU and LeakyReLU are recorded as products with a constant slope mask, so
//! their curvature contributes nothing to a second derivative.

mod check;
mod error;
pub mod suite;
mod tape;
mod tensor;

pub use check::{gradient_check, input_gradient, numeric_gradient, relative_error, second_order_check, FD_STEP};
pub use error::{AutodiffError, Result};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
