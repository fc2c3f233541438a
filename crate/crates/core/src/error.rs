use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {cause}", path.display())]
    Io { path: PathBuf, cause: std::io::Error },
    #[error("read error: {0}")]
    Read(#[from] std::io::Error),
    #[error("invalid record schema: {0}")]
    Schema(String),
    #[error("invalid activity scheme: {0}")]
    Scheme(String),
    #[error("invalid GeoJSON: {0}")]
    GeoJson(String),
    #[error("no valid parcels loaded ({invalid} invalid features skipped)")]
    NoParcels { invalid: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("infeasible synthetic configuration: {0}")]
    InfeasibleSynth(String),
    #[error("statistic undefined: {0}")]
    Undefined(String),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause: source,
        }
    }
}
