//! Scenario files, sweeps and data emission for the `obpc` command.

pub mod commands;
pub mod output;
pub mod scenario;
pub mod sweep;

use std::fmt;

/// Process exit status of a failed command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Other = 1,
    Config = 2,
    Divergence = 3,
    Optimizer = 4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub kind: ExitKind,
    pub message: String,
}

impl Failure {
    pub fn new(kind: ExitKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(ExitKind::Config, message)
    }

    pub fn code(&self) -> i32 {
        self.kind as i32
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<obpc::Error> for Failure {
    fn from(e: obpc::Error) -> Self {
        use obpc::Error::*;
        let kind = match e {
            Divergence { .. } => ExitKind::Divergence,
            OptimizationFailure(_) => ExitKind::Optimizer,
            InvalidParameter { .. } | Precondition(_) => ExitKind::Config,
            _ => ExitKind::Other,
        };
        Failure::new(kind, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(ExitKind::Other, format!("i/o: {e}"))
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::new(ExitKind::Other, format!("csv: {e}"))
    }
}

pub type Outcome<T> = std::result::Result<T, Failure>;
