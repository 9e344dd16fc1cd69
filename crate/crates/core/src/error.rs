use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("lane graph error: {0}")]
    Graph(String),

    #[error("lane geometry error: {0}")]
    Geometry(String),

    #[error("no route from {start} to {goal}")]
    Routing { start: String, goal: String },

    #[error("invalid control input: {0}")]
    InvalidControl(String),

    #[error("episode is closed")]
    EpisodeClosed,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("snapshot error: {0}")]
    Snapshot(#[from] SnapshotError),

    #[error("config error: {0}")]
    Config(String),

    #[error("non-finite value during training: {0}")]
    NonFinite(String),

    #[error("environment {index}: {source}")]
    Env {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SnapshotError {
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),

    #[error("unsupported snapshot format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("observation layout version {found} does not match current layout {expected}")]
    LayoutVersion { found: u32, expected: u32 },

    #[error("shape table does not match the network architecture: {0}")]
    ShapeTable(String),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }
}
