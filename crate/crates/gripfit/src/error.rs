//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by geometry processing, solvers, and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter violates a documented precondition.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The input mesh is not a closed, consistently oriented triangle surface.
    #[error("non-orientable or open surface: {0}")]
    OpenSurface(String),

    /// Isosurface extraction found no sign change in the grid.
    #[error("empty surface: signed distance grid has no zero crossing")]
    EmptySurface,

    /// SDF gradient vanished where a surface projection was requested.
    #[error("degenerate gradient at query point")]
    DegenerateGradient,

    /// The optimizer encountered NaN or infinite residuals.
    #[error("non-finite energy")]
    NonFiniteEnergy,

    /// A generated scenario cannot be statically balanced by any admissible forces.
    #[error("statically infeasible scenario: physics residual {residual:.4} exceeds {limit:.4}")]
    InfeasibleScenario { residual: f64, limit: f64 },

    /// Structured file could not be parsed.
    #[error("parse error in {path} (line {line}): {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
