//! Error type of the std-side crate: wraps core numeric failures and adds
//! the file-format and configuration conditions.

use std::fmt;
use std::path::PathBuf;

use masr_core::CoreError;

#[derive(Debug)]
pub enum MasrError {
    /// Numeric error bubbled up from the core crate.
    Core(CoreError),
    /// OS-level IO with the path that failed.
    Io { path: PathBuf, source: std::io::Error },
    /// Structured-text parse failure with 1-based line number.
    Parse { path: PathBuf, line: usize, message: String },
    /// Configuration problems; each entry names one offending key.
    Config(Vec<String>),
    /// Binary format violations (bad magic, wrong version, truncation).
    Format { path: PathBuf, message: String },
    /// Checkpoint was produced under a different configuration.
    ConfigHashMismatch { expected: String, got: String },
    /// Audio decode problems, with the property that failed.
    Audio { path: PathBuf, message: String },
    /// Training aborted: non-finite loss with step and term attribution.
    NonFiniteLoss { step: u64, term: String },
    /// Anything referenced by id or name that is not there.
    Missing(String),
    /// A verification command ran to completion and the check failed.
    CheckFailed(String),
}

pub type Result<T> = std::result::Result<T, MasrError>;

impl fmt::Display for MasrError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MasrError::Core(e) => write!(f, "{e}"),
            MasrError::Io { path, source } => {
                write!(f, "io error on {}: {source}", path.display())
            }
            MasrError::Parse { path, line, message } => {
                write!(f, "{}:{line}: {message}", path.display())
            }
            MasrError::Config(keys) => {
                write!(f, "invalid config: {}", keys.join("; "))
            }
            MasrError::Format { path, message } => {
                write!(f, "bad file {}: {message}", path.display())
            }
            MasrError::ConfigHashMismatch { expected, got } => {
                write!(f, "checkpoint config hash {got} does not match current config {expected}")
            }
            MasrError::Audio { path, message } => {
                write!(f, "unsupported audio {}: {message}", path.display())
            }
            MasrError::NonFiniteLoss { step, term } => {
                write!(f, "non-finite loss at step {step} in term {term}")
            }
            MasrError::Missing(what) => write!(f, "missing: {what}"),
            MasrError::CheckFailed(what) => write!(f, "check failed: {what}"),
        }
    }
}

impl MasrError {
    /// Stable machine-readable discriminant for the CLI's error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            MasrError::Core(_) => "core",
            MasrError::Io { .. } => "io",
            MasrError::Parse { .. } => "parse",
            MasrError::Config(_) => "config",
            MasrError::Format { .. } => "format",
            MasrError::ConfigHashMismatch { .. } => "config_hash_mismatch",
            MasrError::Audio { .. } => "audio",
            MasrError::NonFiniteLoss { .. } => "non_finite_loss",
            MasrError::Missing(_) => "missing",
            MasrError::CheckFailed(_) => "check_failed",
        }
    }
}

impl std::error::Error for MasrError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            MasrError::Io { source, .. } => Some(source),
            MasrError::Core(e) => Some(e),
            _ => None,
        }
    }
}

impl From<CoreError> for MasrError {
    fn from(e: CoreError) -> Self {
        MasrError::Core(e)
    }
}

/// Attach a path to a raw IO error.
pub fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> MasrError {
    let path = path.into();
    move |source| MasrError::Io { path, source }
}
