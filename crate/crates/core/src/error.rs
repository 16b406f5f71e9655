use std::path::PathBuf;

use thiserror::Error;

use crate::integrator::IntegrationError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error(transparent)]
    Integration(#[from] IntegrationError),

    #[error("tangent vector {index} collapsed at t = {t} (norm {norm:e})")]
    TangentCollapse { index: usize, t: f64, norm: f64 },

    #[error("unknown scenario `{id}`; available: {}", available.join(", "))]
    UnknownPreset { id: String, available: Vec<String> },

    #[error("numerical failure: {0}")]
    AllFailed(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Process exit classes used by the command-line front end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numerical,
    Io,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Numerical => 3,
            ErrorClass::Io => 4,
        }
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidParam { .. } | Error::UnknownPreset { .. } | Error::Config(_) => {
                ErrorClass::Config
            }
            Error::Integration(_) | Error::TangentCollapse { .. } | Error::AllFailed(_) => {
                ErrorClass::Numerical
            }
            Error::Io { .. } => ErrorClass::Io,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
