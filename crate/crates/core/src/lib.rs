//! Tube-confined stochastic path integrals.
//!
//! Propagators are computed as Monte Carlo expectations over fluctuation
//! paths that live in a tubular neighbourhood of a classical trajectory.
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: metric charts, the Hamiltonian trajectory solver,
//!   exponential/logarithm maps and parallel frames.
//! * [`tube`]: discrete paths, the action functional, H¹ distances and the
//!   admissibility probe.
//! * [`dynamics`]: Brownian bridges, the covariant fluctuation SDE,
//!   Girsanov log-weights and longitudinal gauge fixing.
//! * [`ensemble`]: reproducible per-sample random streams and the
//!   parallel (or sequential) map-reduce driver.
//! * [`integrator`]: path-integral, Riemann-product and Feynman-Kac
//!   estimators built on [`stats::McAccumulator`].
//! * [`oracles`]: closed-form kernels, a Crank-Nicolson backward solver and
//!   a brute-force lattice path sum.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod integrator;
pub mod oracles;
pub mod stats;
pub mod tube;

pub use error::{Error, Result};
pub use grid::TimeGrid;

pub use num_complex::Complex64;
