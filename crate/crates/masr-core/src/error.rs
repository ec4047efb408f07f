use alloc::string::String;
use core::fmt;

/// Errors produced by the numeric core.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// A tensor or slice had a different shape than the operation requires.
    ShapeMismatch { context: &'static str, expected: usize, got: usize },
    /// An operation that needs at least one element got none.
    Empty(&'static str),
    /// A vector with zero L2 norm where a direction is required.
    ZeroNorm(&'static str),
    /// A scalar argument outside its documented range.
    OutOfRange { what: &'static str, value: f64 },
    /// Waveform sample rate not supported by the front end.
    UnsupportedSampleRate(u32),
    /// Waveform shorter than a single analysis frame.
    WaveformTooShort { samples: usize, frame_len: usize },
    /// Sequence shorter than the quantizer frame stack.
    TooFewFrames { frames: usize, stack: usize },
    /// Structured-text parse failure (1-based line number).
    Parse { line: usize, message: String },
    /// A non-finite value surfaced in a loss term.
    NonFinite { term: String },
    /// Batch size exceeds the number of available records.
    BatchTooLarge { batch: usize, records: usize },
    /// Label lookup failed in a fixed metadata table.
    UnknownLabel(String),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::ShapeMismatch { context, expected, got } => {
                write!(f, "shape mismatch in {context}: expected {expected}, got {got}")
            }
            CoreError::Empty(what) => write!(f, "empty input: {what}"),
            CoreError::ZeroNorm(what) => write!(f, "zero-norm vector: {what}"),
            CoreError::OutOfRange { what, value } => {
                write!(f, "{what} out of range: {value}")
            }
            CoreError::UnsupportedSampleRate(sr) => {
                write!(f, "unsupported sample rate {sr} Hz (expected 8000 or 16000)")
            }
            CoreError::WaveformTooShort { samples, frame_len } => {
                write!(f, "waveform of {samples} samples shorter than one frame ({frame_len})")
            }
            CoreError::TooFewFrames { frames, stack } => {
                write!(f, "{frames} frames is fewer than the frame stack {stack}")
            }
            CoreError::Parse { line, message } => write!(f, "line {line}: {message}"),
            CoreError::NonFinite { term } => write!(f, "non-finite value in term {term}"),
            CoreError::BatchTooLarge { batch, records } => {
                write!(f, "batch size {batch} larger than corpus of {records} records")
            }
            CoreError::UnknownLabel(label) => write!(f, "unknown label: {label}"),
        }
    }
}

impl core::error::Error for CoreError {}

pub type Result<T> = core::result::Result<T, CoreError>;
