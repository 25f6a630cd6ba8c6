//! Lamination convex hulls of planar diagonal-matrix sets, and finite-element
//! laminate constructions that realize them.
//!
//! The library is organized in layers:
//!
//! * [`matgeom`] — diagonal 2x2 matrices as plane points, rank-one
//!   compatibility, convex combinations.
//! * [`lamhull`] — exact (rational) iterated lamination hulls of finite box
//!   unions, lamination level of the zero matrix, witness trees, and the
//!   staircase family of sets whose level grows with their cardinality.
//! * [`construct`] — closed-form piecewise-affine vector fields (simple and
//!   nested strip laminates) whose gradients realize a witness tree almost
//!   everywhere, plus the parameter selection rules for the strip counts.
//! * [`fem`] — structured triangulations, P1 interpolation, and the measure
//!   of the region where the interpolant's gradient leaves the target set.
//! * [`harness`] — the end-to-end pipeline (set -> witness -> field -> mesh
//!   -> measure), h-sweeps, rate fits, and CSV/JSON reporting.

pub mod construct;
pub mod fem;
pub mod harness;
pub mod lamhull;
pub mod matgeom;

/// Crate-wide error type.
///
/// The two broad classes matter to callers: parameter/input problems
/// (rejected before any work happens) and admissibility problems (the inputs
/// are well-formed but outside the regime the constructions are valid in,
/// e.g. a mesh size too coarse for the domain or a set whose lamination level
/// exceeds the iteration cap).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed or out-of-range input (bad JSON, λ outside [0,1], ...).
    #[error("parameter error: {0}")]
    Parameter(String),
    /// Inputs outside the validity regime: h ≥ 1, h^α larger than the domain
    /// diameter, or similar.
    #[error("admissibility error: {0}")]
    Admissibility(String),
    /// The lamination level of the set exceeds the iteration cap.
    #[error("lamination level exceeds cap {cap}")]
    LevelExceedsCap { cap: u32 },
    /// Internal hull bookkeeping was asked for provenance it does not have.
    #[error("provenance error: {0}")]
    Provenance(String),
    /// I/O error while reading or writing artifacts.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code convention: parameter errors exit 2, admissibility
    /// and level errors exit 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) | Error::Provenance(_) | Error::Io(_) => 2,
            Error::Admissibility(_) | Error::LevelExceedsCap { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
