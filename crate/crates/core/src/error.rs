use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("corrupt payload: {0}")]
    CorruptPayload(String),

    #[error("payload exhausted before all symbols were decoded")]
    TruncatedPayload,

    #[error("not a model file (bad magic)")]
    NotAModel,

    #[error("model file truncated")]
    TruncatedFile,

    #[error("malformed model: {0}")]
    MalformedModel(String),

    #[error("corrupt header: {0}")]
    CorruptHeader(String),

    #[error("not a stream (bad magic)")]
    NotAStream,

    #[error("stream truncated")]
    TruncatedStream,

    #[error("unsupported: {0}")]
    UnsupportedVersion(String),

    #[error("decode mode unavailable: {0}")]
    ModeUnavailable(String),

    #[error("external codec failed: {message}\n{diagnostics}")]
    ExternalCodec { message: String, diagnostics: String },

    #[error("degenerate verification protocol: {0}")]
    DegenerateProtocol(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Image(#[from] ::image::ImageError),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
