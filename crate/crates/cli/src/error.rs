use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("convergence error: {0}")]
    Convergence(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Convergence(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl From<desorb_core::Error> for CliError {
    fn from(e: desorb_core::Error) -> Self {
        use desorb_core::Error as E;
        match e {
            E::QuadratureNotConverged(_) => CliError::Convergence(e.to_string()),
            E::Io(_) | E::ZeroNorm { .. } | E::CoincidentPoints => CliError::Internal(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}
