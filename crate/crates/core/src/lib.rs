//! Geometrically exact viscoelastic beams discretized with isogeometric collocation.
// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod nurbs;
pub mod so3;
pub mod material;
pub mod kinematics;
pub mod scene;
pub mod assembly;
pub mod linalg;
pub mod solver;
pub mod cli;

pub use error::{Error, Result};
