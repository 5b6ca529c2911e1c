use std::path::PathBuf;

use thiserror::Error;

use crate::roadnet::{NodeId, SegmentId};

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Format { path: PathBuf, line: u64, msg: String },

    #[error("duplicate segment id {0}")]
    DuplicateSegment(SegmentId),

    #[error("node {node} referenced with inconsistent coordinates ({delta_m:.2} m apart)")]
    InconsistentNode { node: NodeId, delta_m: f64 },

    #[error("network has no segments")]
    EmptyNetwork,

    #[error("unknown segment id {0}")]
    UnknownSegment(SegmentId),

    #[error("unknown node id {0}")]
    UnknownNode(NodeId),

    #[error("trajectory {0}: {1}")]
    Trajectory(String, String),

    #[error("cannot derive heading: {0}")]
    Heading(String),

    #[error("speed model missing segment {0}")]
    ModelMissingSegment(SegmentId),

    #[error("invalid pair query: {0}")]
    InvalidQuery(String),

    #[error("timecost requires linespeed > 0 (got {0})")]
    NonPositiveLinespeed(f64),

    #[error("timecost requires travel_time > 0 on segment {0}")]
    ZeroTravelTime(SegmentId),

    #[error("ground truth for trajectory {0} is empty")]
    EmptyTruth(String),

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, line: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
