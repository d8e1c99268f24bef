//! Experiment runner behind the `scatrec` binary.

pub mod config;
pub mod pipeline;

pub use config::ExperimentConfig;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("numerical failure: {0}")]
    Numerical(scatrec::Error),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingInput(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<scatrec::Error> for CliError {
    fn from(e: scatrec::Error) -> Self {
        use scatrec::Error as E;
        match e {
            E::Divergence(_) | E::SingularCovariance { .. } | E::SolveFailure { .. } | E::ZeroVariance(_) => {
                CliError::Numerical(e)
            }
            E::NotPowerOfTwo(_) | E::ScaleTooLarge { .. } => CliError::Config(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}
