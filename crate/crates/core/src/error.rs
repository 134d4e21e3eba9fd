use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("incompatible frames: {0}")]
    IncompatibleFrames(String),

    #[error("value domain mismatch: expected {expected:?}, got {actual:?}")]
    DomainMismatch {
        expected: crate::raw::ValueDomain,
        actual: crate::raw::ValueDomain,
    },

    #[error("no complete exposure window: {n_frames} frames, exposure {exposure}")]
    NoCompleteWindow { n_frames: usize, exposure: usize },

    #[error("noise estimation needs at least 3 illumination levels, got {0}")]
    TooFewLevels(usize),

    #[error("noise estimation is rank deficient: {0}")]
    RankDeficient(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("{path}: malformed file: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: unsupported schema version {found} (expected {expected})")]
    Schema {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
