use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("relative rotation angle {angle} rad is outside the principal branch (limit {limit} rad)")]
    AngleOutOfRange { angle: f64, limit: f64 },

    #[error("negative kinetic energy {0} J")]
    NegativeEnergy(f64),

    #[error("direction vector is not unit length (|n| = {0})")]
    NotUnit(f64),

    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),

    #[error("quadrature did not converge: {0}")]
    QuadratureNotConverged(String),

    #[error("source and field point coincide")]
    CoincidentPoints,

    #[error("amplitude norm vanishes for site {site}")]
    ZeroNorm { site: usize },

    #[error("invalid rotation: {0}")]
    InvalidRotation(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported flux model: {0}")]
    Unsupported(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
        Error::Parse {
            line,
            message: e.to_string(),
        }
    }
}
