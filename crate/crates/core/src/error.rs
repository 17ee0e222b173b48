use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("instance {id}: channels have unequal lengths")]
    RaggedChannels { id: String },

    #[error("instance {id}: expected {expected} channels, found {found}")]
    ChannelCount {
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("dataset contains no instances")]
    EmptyDataset,

    #[error("unknown class label {0}")]
    UnknownLabel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shapelet of length {shapelet} is longer than series of length {series}")]
    ShapeletTooLong { shapelet: usize, series: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unsupported model version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("model schema violation: {0}")]
    Schema(String),

    #[error("non-finite objective at iteration {iteration}: {detail}")]
    NonFinite { iteration: usize, detail: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
