//! Recovery of compact, editable CSG trees from a single shape.
//!
//! A per-shape network predicts two matrices of axis-aligned quadric
//! primitives (half convex, half complementary), selects them into
//! intersections, unions those, and subtracts a residual shape from a cover
//! shape. After staged optimisation and pruning, the network is read back
//! as an explicit `Difference(Union(Inter…), Union(Inter…))` tree that can
//! be evaluated, meshed, measured and exported to OpenSCAD.

pub mod autodiff;
pub mod error;
pub mod export;
pub mod extract;
pub mod fixtures;
pub mod geometry;
pub mod metrics;
pub mod network;
pub mod trainer;

pub use error::{Error, Result};
