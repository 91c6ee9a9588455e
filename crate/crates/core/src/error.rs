use thiserror::Error;

/// Error type shared by every stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("rating {value} outside scale [{min}, {max}]")]
    Range { value: f64, min: f64, max: f64 },

    #[error("empty input: {0}")]
    EmptyData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("need both positive and negative examples: {0}")]
    ClassImbalance(String),

    #[error("candidate set is empty")]
    EmptyCandidates,

    #[error("evaluation mask is empty")]
    EmptyMask,

    #[error("missing key: user {user}, item {item}")]
    MissingKey { user: u32, item: u32 },

    #[error("invalid pipeline state: {0}")]
    State(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable process exit code per error category. Data problems map to 2,
    /// configuration to 3, pipeline-state to 4, numeric failures to 5 and
    /// I/O to 6.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) | Error::Range { .. } | Error::EmptyData(_) => 2,
            Error::Config(_) => 3,
            Error::State(_) => 4,
            Error::Divergence(_)
            | Error::Index(_)
            | Error::Shape(_)
            | Error::ClassImbalance(_)
            | Error::EmptyCandidates
            | Error::EmptyMask
            | Error::MissingKey { .. } => 5,
            Error::Io(_) => 6,
        }
    }
}
