//! Neural implicit models of the cylindrical shadows cast by irregular
//! small bodies, with the geometric ground truth needed to train them and
//! an orbit propagator that switches solar radiation pressure at
//! detected eclipse events.
//!
//! Module map:
//! - [`geometry`]: meshes, Möller–Trumbore ray casting, BVH, mascons,
//!   Fibonacci-sphere directions.
//! - [`eclipse`]: projection frames, silhouettes and the signed eclipse
//!   function used as the training oracle.
//! - [`dataset`]: sampled `(position, Sun direction) -> F` datasets.
//! - [`neuralnet`]: sine / rectifier multilayer perceptrons with Adam.
//! - [`dynamics`]: rotating-frame propagation with eclipse events.

// `!(x > 0.0)` guards deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod dynamics;
pub mod eclipse;
pub mod geometry;
pub mod neuralnet;
