//! Neural solvers for single-term time-fractional differential equations.
//!
//! The Caputo time derivative is discretized with the L1 or L2-1σ formula,
//! which turns the equation into a temporal iteration scheme. A dense tanh
//! network is then trained so that its own outputs reproduce that scheme,
//! plus the initial and boundary data. A classical finite-difference solver
//! built on the same kernels serves as an independent reference.

// negated comparisons are deliberate: NaN has to fail the range guards
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod benchmarks;
pub mod caputo;
pub mod error;
pub mod fdm;
pub mod neural;
pub mod problem;
pub mod solver;

pub use error::{Error, Result};
