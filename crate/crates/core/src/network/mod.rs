//! The dual-branch CSG network.
//!
//! A latent code feeds a two-layer MLP that predicts two `p×7` quadric
//! matrices, one per branch. Each branch intersects selected primitives
//! (`Con = relu(Q·Pᵀ)·T`), unions the intermediate shapes (soft union in
//! stage 0, masked row minimum afterwards) and the final field subtracts
//! the residual from the cover: `s* = max(a*_C, α − a*_R)`.

mod checkpoint;
mod evaluator;
mod field;
pub mod graph;
mod hyper;
mod model;

pub use evaluator::{effective_weights, importance_delta, BranchField, FieldEvaluator, Importance, Removal};
pub use field::{
    asd, difference_field, feature_row, inside_count, intersect, quadric_value, query_features, union_min, union_soft,
};
pub use hyper::{DeltaMode, HyperParams, Phase};
pub use model::{
    apply_sign_constraints, predict_primitives, Branch, FittedModel, ParamSet, PrimitiveMatrix, Quadric, BLOCKS,
    BLOCK_NAMES, LEAKY_SLOPE, QUADRIC_COEFFS,
};
