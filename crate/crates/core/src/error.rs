use thiserror::Error;

use crate::model::{CorrespondenceSet, EntityKey, PartitionId, TaskId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("entity {0} cannot be paired with itself")]
    SelfPair(EntityKey),

    #[error("conflicting similarity for pair ({a}, {b}): {first} vs {second}")]
    ConflictingSimilarity {
        a: EntityKey,
        b: EntityKey,
        first: f64,
        second: f64,
    },

    #[error("invalid configuration `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("line {line}: {message}")]
    Load { line: u64, message: String },

    #[error("partition not found: {0}")]
    PartitionNotFound(PartitionId),

    #[error("unknown task: {0}")]
    UnknownTask(TaskId),

    #[error("conflicting duplicate result for task {0}")]
    ConflictingResult(TaskId),

    #[error("duplicate worker id: {0}")]
    DuplicateWorker(String),

    #[error("unknown worker: {0}")]
    UnknownWorker(String),

    #[error("run aborted with {completed} of {total} tasks completed: {reason}")]
    Aborted {
        completed: usize,
        total: usize,
        reason: String,
        partial: Box<CorrespondenceSet>,
    },

    #[error("transport: {0}")]
    Transport(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
