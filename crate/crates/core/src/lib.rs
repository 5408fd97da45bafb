//! Structure-preserving finite-volume solvers for the compressible Euler
//! equations on the periodic unit square, and the post-processing needed to
//! study their weak limits: Cesàro averages over mesh refinements, Reynolds
//! stress and energy defects, consistency residuals and Wasserstein
//! distances between per-cell empirical measures.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod diagnostics;
pub mod eos;
pub mod error;
pub mod grid;
pub mod ic;
pub mod io;
pub mod kconv;
pub mod par;
pub mod solver;

pub use eos::{GasParams, PointState};
pub use error::{Error, Result};
pub use grid::{Field, Grid};
pub use solver::{RunRecord, Scheme, SchemeConfig};
