use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] cmjvax::Error),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },

    #[error("no policy in the family meets the bound {bound}")]
    Infeasible { bound: f64 },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> u8 {
        use cmjvax::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::InvalidLaw(_) | E::InvalidCaps(_) | E::InvalidAlpha(_) | E::UnknownFunctional(_)) => 2,
            CliError::Infeasible { .. } => 3,
            CliError::Core(E::ExplosionRate { .. }) => 4,
            _ => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
