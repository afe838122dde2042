use std::fmt;

use prior_lens_core::elicitation::ElicitError;
use prior_lens_core::{FitError, PriorError, StoreError};

/// A failed command, carrying its exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or flag values: exit 2.
    Usage(String),
    /// Unreadable, empty or insufficient data: exit 3.
    Data(String),
    /// Authentication or network failure that stops a run: exit 4.
    Fatal(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Fatal(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Fatal(m) => f.write_str(m),
        }
    }
}

impl From<PriorError> for CliError {
    fn from(e: PriorError) -> Self {
        match e {
            PriorError::DegeneratePosterior { .. } | PriorError::AtT { .. } => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::InvalidOptions(_) => CliError::Usage(e.to_string()),
            FitError::Prior(p) => p.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ElicitError> for CliError {
    fn from(e: ElicitError) -> Self {
        match e {
            ElicitError::MissingCredential(_)
            | ElicitError::Auth { .. }
            | ElicitError::Http(_)
            | ElicitError::Runtime(_) => CliError::Fatal(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
