//! Mimetic spectral-element solver for Darcy flow on hexahedral meshes, with
//! a continuous mixed formulation and a hybrid domain-decomposition
//! formulation built on algebraic dual representations.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod basis;
pub mod cases;
pub mod cli;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod postproc;
pub mod solver;
pub mod topology;

pub use error::{Error, ErrorCategory, Result};
