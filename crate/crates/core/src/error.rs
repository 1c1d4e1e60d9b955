use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("channel `{channel}`: {source}")]
    Channel {
        channel: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("subject `{subject}`: detected {detected} cuff episodes but manifest lists {expected} readings")]
    ManifestMismatch {
        subject: String,
        detected: usize,
        expected: usize,
    },

    #[error("insufficient beats: found {found}, need at least {required}")]
    InsufficientBeats { found: usize, required: usize },

    #[error("interval {interval}: {found} valid PTT samples, need at least {required}")]
    SparseInterval {
        interval: usize,
        found: usize,
        required: usize,
    },

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("subject `{subject}`: {found} measurement points, need at least {required}")]
    InsufficientData {
        subject: String,
        found: usize,
        required: usize,
    },

    #[error("degenerate metrics: {0}")]
    DegenerateMetrics(String),

    #[error("invalid subject profile: {0}")]
    Profile(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn in_channel(self, channel: &'static str) -> Error {
        Error::Channel {
            channel,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Error {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit status: 1 usage/config, 2 data, 3 internal invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Internal(_) => 3,
            Error::Channel { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
