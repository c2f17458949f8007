//! Flux-form finite-volume tracer advection on icosahedral sphere grids,
//! with two discrete adjoints and a 4D-Var assimilation loop.
//!
//! The crate builds without `std` (it needs `alloc`). File formats and the
//! command line live in the companion `icoadj-cli` crate.
//!
//! ```
//! use icoadj::spheregrid::SphereGrid;
//! let g = SphereGrid::build(2, 0, 1.0).unwrap();
//! assert_eq!((g.n_cells(), g.n_edges()), (80, 120));
//! ```

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod adjoint;
pub mod assim;
pub mod cases;
pub mod fields;
pub mod math;
pub mod optim;
pub mod spheregrid;
pub mod transport;

use core::fmt;

/// Earth radius used by all test cases, in meters.
pub const EARTH_RADIUS: f64 = 6.371229e6;
/// Length of the test-case period, in seconds (12 days).
pub const PERIOD: f64 = 1_036_800.0;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A precondition on an argument was violated.
    InvalidArgument(&'static str),
    /// Three points do not span a spherical triangle.
    DegenerateTriangle,
    /// Two objects refer to different grids.
    GridMismatch,
    /// Relative norm requested against an identically zero reference.
    ZeroReference,
    /// Courant number above the configured cap.
    Cfl { edge: usize, courant: f64, cap: f64 },
    /// The transpose adjoint needs a linear forward scheme.
    LimitedScheme,
    /// `n * dt` does not reproduce the requested end time.
    TimeMismatch { t_end: f64, dt: f64 },
    /// No closed-form solution exists for the requested case or time.
    NoExactSolution,
    /// Operator or trajectory used at the wrong time level.
    LevelMismatch { expected: usize, got: usize },
    /// Objective returned a non-finite value.
    NonFinite,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(what) => write!(f, "invalid argument: {what}"),
            Error::DegenerateTriangle => f.write_str("degenerate spherical triangle"),
            Error::GridMismatch => f.write_str("fields belong to different grids"),
            Error::ZeroReference => f.write_str("reference field is identically zero"),
            Error::Cfl { edge, courant, cap } => {
                write!(f, "CFL violation at edge {edge}: courant {courant:.4} > {cap}")
            }
            Error::LimitedScheme => {
                f.write_str("standard adjoint undefined for limited scheme")
            }
            Error::TimeMismatch { t_end, dt } => {
                write!(f, "end time {t_end} is not a whole number of steps of {dt}")
            }
            Error::NoExactSolution => f.write_str("no exact solution for this case and time"),
            Error::LevelMismatch { expected, got } => {
                write!(f, "time level mismatch: expected {expected}, got {got}")
            }
            Error::NonFinite => f.write_str("non-finite value"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
