//! Tangential homogenization of periodic integrands on manifold-valued fields.
//!
//! The library computes the homogenized density `Tf_hom(s, ξ)` through
//! discrete corrector cell problems whose correctors take values in the
//! tangent space `T_s(M)`, checks its structural properties, and probes the
//! convergence of minimum energies of oscillating functionals `F_ε` towards
//! the homogenized functional.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cell_solver;
pub mod cli;
pub mod config;
pub mod density;
pub mod error;
pub mod gamma_sim;
pub mod grid;
pub mod integrand;
pub mod io;
pub mod manifold;
pub mod optim;

pub use error::{HomogError, Result};
