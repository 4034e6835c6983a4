//! Radial numerics for the focusing energy-critical generalized Hartree equation
//!
//! `i u_t + Δu + (I_λ * |u|^p)|u|^{p-2} u = 0` on ℝ^N with radial data.
//!
//! The crate is organised bottom-up: [`model`] holds closed forms, [`grid`]
//! the spectral-element radial discretization, [`riesz`] the nonlocal
//! convolution, [`nonlinearity`] the Hartree term and its expansion around the
//! ground state, [`linearized`] the spectral theory of the linearization,
//! [`special`] the exponential series for the threshold solutions,
//! [`evolution`] the time integrator and diagnostics, and [`modulation`] the
//! symmetry decomposition near the ground state.

pub mod dense;
pub mod error;
pub mod evolution;
pub mod field;
pub mod grid;
pub mod io;
pub mod lab;
pub mod linearized;
pub mod model;
pub mod modulation;
pub mod nonlinearity;
pub mod quadrature;
pub mod registry;
pub mod riesz;
pub mod special;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "HARTREE_THREADS";

/// Worker threads for parallel assembly: `HARTREE_THREADS`, else the number of cores.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

pub use error::{Error, Result};
pub use field::RadialField;
pub use grid::{GridSpec, RadialGrid};
pub use model::ModelParams;
