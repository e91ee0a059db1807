//! Synthesis, certification and simulation of multivariable extremum-seeking
//! loops whose parameter update passes through a saturating actuator.

// links the system BLAS/LAPACK used by the semidefinite solver
extern crate openblas_src;

pub mod dither;
pub mod error;
pub mod linalg;
pub mod lmi;
pub mod model;
pub mod report;
pub mod simulate;
pub mod verify;

pub use error::{Error, Result};
