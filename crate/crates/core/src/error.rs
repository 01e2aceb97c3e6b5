use std::io;

use thiserror::Error;

/// Crate-wide error type. Variants are grouped by the module that raises
/// them; everything carries enough context to be printed as a one-line
/// diagnostic by the CLI.
#[derive(Debug, Error)]
pub enum Error {
    /// A file failed structural validation (bad magic, truncation, ...).
    #[error("malformed file at byte {offset}: {reason}")]
    MalformedFile { offset: usize, reason: String },

    /// The file is well-formed but uses a feature this tool does not read.
    #[error("unsupported format: {reason}")]
    UnsupportedFormat { reason: String },

    /// The image cannot hold even one pixel per grid cell.
    #[error("image {width}x{height} too small for a {cols}x{rows} patch grid")]
    ImageTooSmall {
        width: u32,
        height: u32,
        cols: u32,
        rows: u32,
    },

    /// A tensor or layer shape does not line up.
    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },

    /// Training loss went NaN/Inf; the context names the offending step.
    #[error("non-finite loss ({context})")]
    NonFiniteLoss { context: String },

    #[error("empty input")]
    EmptyInput,

    #[error("image '{image_id}' (model '{model_id}'): missing patch index {index}")]
    MissingPatch {
        image_id: String,
        model_id: String,
        index: u32,
    },

    #[error("image '{image_id}' (model '{model_id}'): duplicate patch index {index}")]
    DuplicatePatch {
        image_id: String,
        model_id: String,
        index: u32,
    },

    #[error(
        "image '{image_id}': model '{model_id}' contributed {actual} patch records, expected {expected}"
    )]
    InconsistentPatchCount {
        image_id: String,
        model_id: String,
        expected: usize,
        actual: usize,
    },

    #[error("test count {requested} too large for manifest of {available} images")]
    TestCountTooLarge { requested: usize, available: usize },

    #[error("length mismatch: {left} true labels vs {right} predicted")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty confusion matrix")]
    EmptyMatrix,

    /// Text-format parse failure (CSV, key=value config) with a line number.
    #[error("{source_name}:{line}: {reason}")]
    Parse {
        source_name: String,
        line: usize,
        reason: String,
    },

    /// Input data violated a documented contract.
    #[error("{reason}")]
    Validation { reason: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },

    /// A "can't happen" condition; maps to exit code 2 in the CLI.
    #[error("internal error: {reason}")]
    Internal { reason: String },
}

impl Error {
    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn parse(source_name: impl Into<String>, line: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            reason: reason.into(),
        }
    }

    pub fn validation(reason: impl Into<String>) -> Self {
        Error::Validation {
            reason: reason.into(),
        }
    }

    /// Process exit code per the CLI contract: 1 for data/validation
    /// problems, 2 for internal errors.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Internal { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
