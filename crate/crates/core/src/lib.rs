//! Regularized Boundary Control inversion for the 1+1D wave equation.

pub mod config;
pub mod control;
pub mod error;
pub mod forward;
pub mod grids;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod operators;
pub mod postprocess;
pub mod regularize;
pub mod study;
pub mod velocity;

pub use error::{Error, Result};
