use std::fmt;

use pwl_core::{EvalError, IdentifyError, ModelError, RealizationError, SimError};
use serde::Serialize;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;
pub const EXIT_NOT_FOUND: i32 = 5;
pub const EXIT_RANK_DEFICIENT_SHIFT: i32 = 6;

/// Failure of a subcommand together with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    message: &'a str,
    exit_code: i32,
}

impl CliError {
    pub fn new(code: i32, kind: &'static str, message: impl Into<String>) -> Self {
        Self { code, kind, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(EXIT_CONFIG, "config", message)
    }

    /// One JSON object on a single line.
    pub fn json_line(&self) -> String {
        let line = ErrorLine { error: self.kind, message: &self.message, exit_code: self.code };
        serde_json::to_string(&line).expect("error line serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(EXIT_CONFIG, "io", e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new(EXIT_CONFIG, "json", e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::new(EXIT_CONFIG, "csv", e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        Self::new(EXIT_CONFIG, "model", e.to_string())
    }
}

impl From<IdentifyError> for CliError {
    fn from(e: IdentifyError) -> Self {
        Self::new(EXIT_CONFIG, "identify", e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        Self::new(EXIT_CONFIG, "eval", e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::NonFiniteState(_) => Self::new(EXIT_DIVERGED, "diverged", e.to_string()),
            _ => Self::new(EXIT_CONFIG, "simulate", e.to_string()),
        }
    }
}

impl From<RealizationError> for CliError {
    fn from(e: RealizationError) -> Self {
        match e {
            RealizationError::NotFound { .. } => Self::new(EXIT_NOT_FOUND, "not_found", e.to_string()),
            RealizationError::RankDeficientShift { .. } => {
                Self::new(EXIT_RANK_DEFICIENT_SHIFT, "rank_deficient_shift", e.to_string())
            }
            _ => Self::new(EXIT_CONFIG, "realize", e.to_string()),
        }
    }
}
