use thiserror::Error;

/// Failures mapped onto the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// A suite ran and at least one claim failed.
    #[error("verification failed: {0}")]
    Verification(String),

    /// Malformed arguments, config or grid.
    #[error("{0}")]
    Usage(String),

    /// Integration produced non-finite values or the gain overflowed.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Usage(_) | CliError::Io { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub(crate) fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}

/// Core errors raised while validating inputs are usage errors; everything
/// raised by a running integration is numerical.
impl From<replicator_core::Error> for CliError {
    fn from(e: replicator_core::Error) -> Self {
        use replicator_core::Error as E;
        match e {
            E::InvalidInput(_) | E::OutsideDomain { .. } | E::Precondition(_) | E::RateScaleTooSmall { .. } => {
                CliError::Usage(e.to_string())
            }
            E::NonFinite { .. } | E::GainOverflow { .. } | E::TooStiff { .. } | E::NotDifferentiable { .. } => {
                CliError::Numerical(e.to_string())
            }
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
