use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty region")]
    EmptyRegion,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate mask: {0}")]
    DegenerateMask(String),

    #[error("expected exactly one 8-connected component, found {0}")]
    ComponentCount(usize),

    #[error("bubble exceeds canvas: extent {extent:.2} px > {limit:.2} px")]
    BubbleExceedsCanvas { extent: f64, limit: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite gradient in layer `{layer}`")]
    NonFiniteGradient { layer: String },

    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Diverged {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error("off-manifold request: {0}")]
    OffManifold(String),

    #[error(
        "generator yields unusable patches: {accepted} usable out of {attempts} attempts \
         (cap {cap})"
    )]
    UnusablePatches {
        accepted: usize,
        attempts: usize,
        cap: usize,
    },

    #[error("empty database")]
    EmptyDatabase,

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: Vec<u8>, found: Vec<u8> },

    #[error("unsupported format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("truncated file: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("malformed data: {0}")]
    Format(String),

    #[error("unsatisfiable flow spec: {0}")]
    Unsatisfiable(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
