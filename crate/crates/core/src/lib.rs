//! Space-time least-squares machinery for the 1-D wave equation with
//! exponential multiplier weights.
//!
//! The crate builds three things on a uniform space-time grid:
//!
//! * boundary controls for `∂t²y − Δy + py = 0` obtained by minimizing a
//!   weighted quadratic functional of the free trajectories ([`control`]),
//! * an iterative reconstruction of a space-dependent potential from a
//!   single boundary-flux measurement ([`inversion`]),
//! * empirical checks of the weighted energy inequalities that make both
//!   constructions work ([`verify`]).
//!
//! Everything is driven by the weight `exp(2sφ)` with `φ = exp(λψ)` and
//! `ψ(x,t) = |x − x0|² − βt² + C0` ([`weights`]), a leapfrog forward solver
//! with flux extraction ([`wave`]), and a matrix-free conjugate-gradient
//! minimizer for the weighted normal equations ([`quadmin`]).
//!
//! The crate is `no_std`-compatible (requires `alloc`; enable the `libm`
//! feature when building without `std`). All operations are pure functions
//! of their inputs and are safe to call concurrently.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("wavelab-core requires either the `std` or the `libm` feature");

pub(crate) mod fp;

pub mod control;
pub mod error;
pub mod grid;
pub mod inversion;
pub mod quadmin;
pub mod synth;
pub mod verify;
pub mod wave;
pub mod weights;

pub use error::Error;
pub use grid::{DomainConfig, Gamma0, Region, Side, SpaceTimeField};
pub use quadmin::{Constraint, MinimizeReport, QuadProblem};
pub use wave::{FluxTrace, Potential, WaveData};
pub use weights::{CarlemanParams, GeometryReport, WeightField};

/// Result alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;
