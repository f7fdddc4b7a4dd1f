//! Simulation and verification toolkit for Schramm-Loewner evolution
//! decompositions.
//!
//! The crate is organised bottom-up:
//!
//! - [`pathspace`]: sampled paths with finite or truncated lifetime, killing,
//!   continuation and the binary path archive.
//! - [`drivers`]: SDE integrators for SLE_κ and SLE_κ(ρ) driving processes,
//!   extended drivers and the radial-coordinate diffusion for swallowing times.
//! - [`loewner`]: chordal Loewner flow of tracked points, curve tracing and
//!   region functionals (occupation time, neighbourhood area).
//! - [`observables`]: closed-form Green's functions, the martingales
//!   `M_t^{κ,ρ}`, quadrature of `Ψ_t(U)` and Monte Carlo estimators.
//! - [`verify`]: seeded statistical experiments, one per decomposition
//!   identity, each emitting a [`verify::TestReport`].
//! - [`cli`]: flat key-value run configuration and the subcommand drivers
//!   used by the `sledecomp` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod drivers;
pub mod error;
pub mod loewner;
pub mod observables;
pub mod pathspace;
pub mod rng;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use num_complex::Complex64;
