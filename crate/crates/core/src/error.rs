use alloc::boxed::Box;
use alloc::string::String;
use core::fmt;

use crate::scheme::StepReport;

/// Everything that can go wrong in the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Periodic meshes need at least two subdivisions per side.
    InvalidSubdivision(usize),
    /// Two operands live on different meshes.
    MeshMismatch { expected: usize, found: usize },
    /// Meshes passed as a coarse/fine pair are not nested.
    NotNested { coarse: usize, fine: usize },
    /// A field or integrand produced a non-finite value.
    NonFinite { index: usize },
    /// Model or step parameters violate a structural assumption.
    InvalidParameter(String),
    /// A temperature argument was not strictly positive.
    NonPositiveTemperature(f64),
    /// Inverse temperature fell below the positivity safeguard.
    PositivityViolation {
        cell: usize,
        value: f64,
        theta_min: f64,
    },
    /// Matrix dimensions do not fit together.
    DimensionMismatch { expected: usize, found: usize },
    /// Malformed compressed sparse structure.
    InvalidSparsity(String),
    /// The LU factorisation met a (numerically) zero pivot.
    SingularMatrix {
        column: usize,
        pivot: f64,
        scale: f64,
    },
    /// A rank-deficient system has no solution to working precision.
    InconsistentSystem {
        relative_residual: f64,
        null_pivots: usize,
    },
    /// Newton hit its iteration cap.
    NewtonNotConverged { report: Box<StepReport> },
    /// Backtracking shrank the Newton update below 2^-20.
    DampingUnderflow { report: Box<StepReport> },
    /// The final time is not an integer multiple of the step size.
    IncommensurateFinalTime { final_time: f64, tau: f64 },
    /// A time step failed; `step` counts from 1.
    StepFailed { step: usize, source: Box<Error> },
    /// Unknown initial-data preset.
    UnknownPreset(String),
    /// A convergence study needs at least two consecutive levels.
    InvalidLevels(String),
    /// A convergence-study solve failed at the given level.
    LevelFailed { level: u32, source: Box<Error> },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidSubdivision(n) => {
                write!(f, "periodic mesh needs n >= 2 subdivisions, got {n}")
            }
            Error::MeshMismatch { expected, found } => {
                write!(f, "field lives on an n={found} mesh, expected n={expected}")
            }
            Error::NotNested { coarse, fine } => {
                write!(
                    f,
                    "n={coarse} and n={fine} meshes are not nested by a factor 2"
                )
            }
            Error::NonFinite { index } => write!(f, "non-finite value at index {index}"),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::NonPositiveTemperature(t) => {
                write!(f, "inverse temperature must be positive, got {t}")
            }
            Error::PositivityViolation {
                cell,
                value,
                theta_min,
            } => write!(
                f,
                "inverse temperature {value:e} below safeguard {theta_min:e} in cell {cell}"
            ),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::InvalidSparsity(msg) => write!(f, "invalid sparse structure: {msg}"),
            Error::SingularMatrix {
                column,
                pivot,
                scale,
            } => write!(
                f,
                "matrix is singular to working precision: pivot {pivot:e} in column {column} \
                 (matrix scale {scale:e})"
            ),
            Error::InconsistentSystem {
                relative_residual,
                null_pivots,
            } => write!(
                f,
                "rank-deficient system ({null_pivots} null pivots) is inconsistent: \
                 relative residual {relative_residual:e}"
            ),
            Error::NewtonNotConverged { report } => write!(
                f,
                "Newton did not converge in {} iterations (residual {:e})",
                report.iterations, report.residual
            ),
            Error::DampingUnderflow { report } => write!(
                f,
                "Newton damping underflow after {} iterations (residual {:e})",
                report.iterations, report.residual
            ),
            Error::IncommensurateFinalTime { final_time, tau } => {
                write!(
                    f,
                    "final time {final_time} is not a multiple of tau = {tau}"
                )
            }
            Error::StepFailed { step, source } => write!(f, "time step {step} failed: {source}"),
            Error::UnknownPreset(name) => write!(f, "unknown preset '{name}'"),
            Error::InvalidLevels(msg) => write!(f, "invalid level list: {msg}"),
            Error::LevelFailed { level, source } => {
                write!(f, "convergence run at level {level} failed: {source}")
            }
        }
    }
}

impl core::error::Error for Error {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Error::StepFailed { source, .. } | Error::LevelFailed { source, .. } => Some(&**source),
            _ => None,
        }
    }
}
