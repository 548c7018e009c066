//! Simulation and verification toolkit for the viscoelastic wave equation
//! with memory, weak damping and a variable-exponent logarithmic source.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod exponents;
pub mod expr;
pub mod functionals;
pub mod grid;
pub mod kernels;
pub mod quad;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
