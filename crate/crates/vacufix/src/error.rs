//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unreadable file {path}: {source}")]
    UnreadableFile {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("truncated binary STL: header declares {declared} triangles, payload holds {actual}")]
    TruncatedBinary { declared: u32, actual: u32 },

    #[error("mesh contains no valid triangles")]
    EmptyMesh,

    #[error("mesh is not watertight ({boundary_edges} unmatched directed edges)")]
    NotWatertight { boundary_edges: usize },

    #[error("point set is empty")]
    EmptyPointSet,

    #[error("too few points for normal estimation: {found} (need at least 3)")]
    TooFewPoints { found: usize },

    #[error("no sample ray hit the mesh")]
    EmptyResult,

    #[error("too few candidates: need {needed}, have {found}")]
    TooFewCandidates { needed: usize, found: usize },

    #[error("degenerate contact geometry: {0}")]
    DegenerateGeometry(String),

    #[error("unknown id: {0}")]
    UnknownId(String),

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
