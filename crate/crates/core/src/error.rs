use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied arguments that violate an operation's preconditions.
    #[error("invalid input: {0}")]
    Input(String),

    /// A structured document (table, fixture, trace, dataset) could not be parsed.
    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },

    #[error("calibration error: {0}")]
    Calibration(String),

    /// Transport failure talking to a generation backend. Retried before surfacing.
    #[error("backend error after {attempts} attempt(s): {message}")]
    Backend { attempts: u32, message: String },

    /// The backend answered, but not in the shape we need (e.g. no logprobs).
    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("mock fixture exhausted: {0}")]
    FixtureExhausted(String),

    #[error("sweep aborted: {failed} of {total} runs failed")]
    SweepAborted { failed: usize, total: usize },

    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn parse(line: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that originate in a generation backend rather than the caller's data.
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            Error::Backend { .. } | Error::Protocol(_) | Error::FixtureExhausted(_)
        )
    }
}
