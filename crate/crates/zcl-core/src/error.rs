use alloc::boxed::Box;
use alloc::string::String;
use core::fmt;

/// Errors raised by the codecs in this crate.
#[derive(Debug, Clone, PartialEq)]
pub enum CodecError {
    /// A value at `index` was NaN or infinite; fields must be finite.
    NonFinite { index: usize },
    /// Empty input where at least one value is required.
    EmptyField,
    /// A parameter violated its domain (message names the parameter).
    InvalidParam(String),
    /// Quantized magnitude at `index` does not fit a signed 32-bit integer.
    QuantizerOverflow { index: usize },
    /// Malformed frame bytes; `offset` is the byte position of the defect.
    Format { offset: usize, what: String },
    /// A chunked operation failed inside chunk `ordinal`.
    Chunk {
        ordinal: usize,
        source: Box<CodecError>,
    },
    /// A progress hook requested abort; no partial output escapes.
    HookAborted,
}

impl fmt::Display for CodecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodecError::NonFinite { index } => {
                write!(f, "non-finite value at index {index}")
            }
            CodecError::EmptyField => write!(f, "field must contain at least one value"),
            CodecError::InvalidParam(what) => write!(f, "invalid parameter: {what}"),
            CodecError::QuantizerOverflow { index } => write!(
                f,
                "quantized value at index {index} exceeds signed 32-bit range"
            ),
            CodecError::Format { offset, what } => {
                write!(f, "malformed frame at byte {offset}: {what}")
            }
            CodecError::Chunk { ordinal, source } => {
                write!(f, "chunk {ordinal}: {source}")
            }
            CodecError::HookAborted => write!(f, "aborted by progress hook"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CodecError {}
