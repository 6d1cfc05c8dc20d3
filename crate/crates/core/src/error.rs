use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("node index {index} out of range (node count {count})")]
    NodeOutOfRange { index: usize, count: usize },

    #[error("community index {index} out of range (community count {count})")]
    CommunityOutOfRange { index: usize, count: usize },

    #[error("graph has no edges")]
    NoEdges,

    #[error("node {0} has no neighbors")]
    IsolatedNode(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("community set is overlapping; a partition is required")]
    Overlapping,

    #[error("community set contains no non-empty community")]
    EmptyCommunities,

    #[error("non-finite loss at iteration {iteration}: {detail}")]
    NonFinite { iteration: usize, detail: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
