//! Optimal portfolio selection under terminal and intertemporal utility via
//! the Riccati transform of the Hamilton–Jacobi–Bellman equation.
//!
//! The pipeline is: [`alpha`] tabulates the value of the parametric
//! quadratic program, [`pde`] evolves the risk-aversion field φ(x, τ),
//! [`reconstruct`] recovers V, ψ and the optimal weights, and [`hjb`] solves
//! the untransformed equation directly for comparison.

pub mod alpha;
pub mod benchmark;
pub mod cli;
pub mod error;
pub mod grid;
pub mod hjb;
pub mod interp;
pub mod market;
pub mod market_io;
pub mod pde;
pub mod qp;
pub mod reconstruct;
pub mod tridiag;
pub mod utility;

pub use error::{Error, Result};
