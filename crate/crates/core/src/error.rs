use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value (bad threshold range, sp too large, ...).
    #[error("config error: {0}")]
    Config(String),

    /// Malformed input to an operation (dimension mismatch, non-monotone ids, ...).
    #[error("input error: {0}")]
    Input(String),

    /// Failure loading a dataset file.
    #[error("load error for {path}: {reason}")]
    Load { path: PathBuf, reason: String },

    /// Failure parsing a text file, with a 1-based line number.
    #[error("parse error in {path} at line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    /// Evaluation is undefined for the given inputs.
    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
