//! Error type shared by all modules.

use alloc::string::String;
use core::fmt;

/// Errors produced by grid construction, solvers and experiments.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A domain or parameter field violates a structural invariant.
    InvalidConfig(String),
    /// The geometric/time admissibility conditions do not hold.
    InvalidGeometry(String),
    /// A parameter combination leaves the representable floating range.
    ParameterRange(String),
    /// Two objects that must share a grid do not.
    GridMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    /// A region request falls outside the grid.
    RegionOutOfRange(String),
    /// Explicit time stepping would violate the stability bound.
    CflViolation { dt: f64, dx: f64, limit: f64 },
    /// A field exceeded the blow-up sentinel during time stepping.
    BlowUp { max_abs: f64, step: usize },
    /// A NaN or infinity appeared where finite values are required.
    NonFinite(&'static str),
    /// The initial state does not stay away from zero as required.
    PositivityViolated { min_abs: f64, required: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::InvalidGeometry(msg) => write!(f, "geometry conditions violated: {msg}"),
            Error::ParameterRange(msg) => write!(f, "parameter out of numeric range: {msg}"),
            Error::GridMismatch { expected, got } => write!(
                f,
                "grid mismatch: expected (nx, nt) = {expected:?}, got {got:?}"
            ),
            Error::RegionOutOfRange(msg) => write!(f, "region out of grid range: {msg}"),
            Error::CflViolation { dt, dx, limit } => write!(
                f,
                "time step dt = {dt} violates the stability bound {limit} (dx = {dx})"
            ),
            Error::BlowUp { max_abs, step } => write!(
                f,
                "solution blew up at step {step} (max |field| = {max_abs:e})"
            ),
            Error::NonFinite(what) => write!(f, "non-finite value encountered in {what}"),
            Error::PositivityViolated { min_abs, required } => write!(
                f,
                "initial state too close to zero: min |w0| = {min_abs} < {required}"
            ),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
