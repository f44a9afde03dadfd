//! Error types shared across the crate.

use thiserror::Error;

/// Everything that can go wrong while building networks, ingesting data,
/// learning tables, or scoring scenes.
#[derive(Error, Debug)]
pub enum Error {
    /// The proposed edge set contains a directed cycle.
    #[error("graph contains a directed cycle involving node '{node}'")]
    CyclicGraph { node: String },

    /// A node name was referenced but never declared.
    #[error("unknown node '{name}'")]
    UnknownNode { name: String },

    /// Two nodes were declared with the same name.
    #[error("duplicate node '{name}'")]
    DuplicateNode { name: String },

    /// The same directed edge was added twice.
    #[error("duplicate edge {from} -> {to}")]
    DuplicateEdge { from: String, to: String },

    /// An edge removal referenced an edge that does not exist.
    #[error("no edge {from} -> {to} to remove")]
    NoSuchEdge { from: String, to: String },

    /// A state label is not among the declared states of the node.
    #[error("node '{node}' has no state '{state}'")]
    UnknownState { node: String, state: String },

    /// A node must expose at least two distinct state labels.
    #[error("node '{node}' needs at least two distinct states, got {got}")]
    InvalidStates { node: String, got: usize },

    /// A parent configuration names the wrong variable set for a node.
    #[error("parent configuration for '{node}' expected variables {expected:?}, got {got:?}")]
    ParentConfigMismatch {
        node: String,
        expected: Vec<String>,
        got: Vec<String>,
    },

    /// Strict zero-count policy: the queried parent configuration never
    /// occurred in training data.
    #[error("no training observations for node '{node}' under parent configuration {config}")]
    UnseenConfig { node: String, config: String },

    /// A joint-probability query left some network variable unassigned.
    #[error("assignment is missing a value for node '{node}'")]
    IncompleteAssignment { node: String },

    /// A CSV row could not be parsed into an object record.
    #[error("malformed row at record index {index}: {reason}")]
    MalformedRow { index: usize, reason: String },

    /// An operation that needs data received none.
    #[error("dataset contains no scenes")]
    EmptyDataset,

    /// A record lacks a value for an attribute the network requires.
    #[error("instance in scene '{scene_id}' is missing attribute '{attribute}'")]
    MissingAttribute { scene_id: String, attribute: String },

    /// An observed attribute value is not a declared state of its node.
    #[error("scene '{scene_id}': value '{value}' is not a state of node '{node}'")]
    UnknownStateLabel {
        scene_id: String,
        node: String,
        value: String,
    },

    /// An annotation file references a scene absent from the dataset.
    #[error("annotation references unknown scene '{scene_id}'")]
    UnknownScene { scene_id: String },

    /// An annotation import left some scene without a value.
    #[error("annotation for node '{node}' missing scene '{scene_id}'")]
    IncompleteAnnotation { node: String, scene_id: String },

    /// Scoring requires at least one training likelihood for the node.
    #[error("empty training corpus for node '{node}'")]
    EmptyTrainCorpus { node: String },

    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {reason}")]
    InvalidConfig { reason: String },

    /// A report file does not hold a recognizable report.
    #[error("malformed report: {reason}")]
    MalformedReport { reason: String },

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed serialized artifact (model file, report, annotation, ...).
    #[error("parse error: {reason}")]
    Parse { reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            reason: e.to_string(),
        }
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse {
            reason: e.to_string(),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse {
            reason: e.to_string(),
        }
    }
}
