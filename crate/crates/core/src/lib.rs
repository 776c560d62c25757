//! Finite element simulation of the Cahn–Hilliard equation with
//! reaction-rate dependent dynamic boundary conditions.

// Negated comparisons are kept so NaN fails the test; index loops mirror the
// matrix formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assembly;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod oracle;
pub mod params;
pub mod potential;
pub mod scalar;
pub mod schur;
pub mod sparse;
pub mod stepper;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mesh64 = mesh::Mesh<f64>;
pub type Mesh32 = mesh::Mesh<f32>;
pub type FemMatrices64 = assembly::FemMatrices<f64>;
pub type FemMatrices32 = assembly::FemMatrices<f32>;
pub type ModelParams64 = params::ModelParams<f64>;
pub type ModelParams32 = params::ModelParams<f32>;
pub type Stepper64 = stepper::Stepper<f64>;
pub type Stepper32 = stepper::Stepper<f32>;
