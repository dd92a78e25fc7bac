//! Minimal reverse-mode differentiation over dense matrices.
//!
//! The kernel set is closed: it covers exactly what the CSG network and its
//! losses need (matrix products, relu, clip to `[0, 1]`, row minimum,
//! elementwise arithmetic, maxima, absolute value and reductions) plus the
//! zero-arithmetic shape ops used to split the primitive predictor output.
//!
//! Subgradient conventions at kinks are fixed: `relu'(0) = 0`, the clip
//! derivative is 0 at exactly 0 and 1, `min_rows` routes to the lowest
//! index among ties, `maximum` routes to its first operand on ties and
//! `abs'(0) = 0`.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{finite_difference_check, BlockReport, FdOptions, GradCheckReport};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Real, Tensor};
