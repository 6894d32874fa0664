use std::path::PathBuf;
use std::time::Duration;

/// Errors surfaced by the IO layer and the command line.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] prmerge_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("rate limited; retry after {retry_after:?}")]
    RateLimited { retry_after: Duration },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("HTTP {status} from {url}")]
    Http { status: u16, url: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed document at index {index}: {reason}")]
    MalformedDocument { index: usize, reason: String },
    #[error("field `{field}` missing from {context}")]
    MissingField { field: &'static str, context: String },
    #[error("integrity violation: {0}")]
    Integrity(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("model/matrix schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("missing upstream artifact {0}")]
    MissingArtifact(PathBuf),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// Stable machine-readable kind for the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Core(_) => "core",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
            Error::Parse { .. } => "parse",
            Error::RateLimited { .. } => "rate_limited",
            Error::Auth(_) => "auth",
            Error::NotFound(_) => "not_found",
            Error::Http { .. } => "http",
            Error::Transport(_) => "transport",
            Error::MalformedDocument { .. } => "malformed_document",
            Error::MissingField { .. } => "missing_field",
            Error::Integrity(_) => "integrity",
            Error::Config(_) => "config",
            Error::SchemaMismatch(_) => "schema_mismatch",
            Error::MissingArtifact(_) => "missing_artifact",
        }
    }

    /// 2 for usage, configuration and credential problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Auth(_) | Error::Core(prmerge_core::Error::UnknownFeature(_)) => 2,
            _ => 1,
        }
    }
}
