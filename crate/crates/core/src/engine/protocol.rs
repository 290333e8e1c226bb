//! Messages exchanged between the coordinator and match workers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MatchResult, MatchTask, PartitionId, TaskId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerDescriptor {
    pub worker_id: String,
    pub thread_count: usize,
    /// Cached partitions; 0 disables caching.
    pub cache_capacity: usize,
}

impl WorkerDescriptor {
    pub fn new(worker_id: impl Into<String>, thread_count: usize, cache_capacity: usize) -> Result<Self> {
        let worker_id = worker_id.into();
        if worker_id.is_empty() {
            return Err(Error::config("worker_id", "must not be empty"));
        }
        if thread_count == 0 {
            return Err(Error::config("threads", "must be at least 1"));
        }
        Ok(Self {
            worker_id,
            thread_count,
            cache_capacity,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Liveness {
    Alive,
    /// Heartbeats overdue; no new tasks until the worker is heard from again.
    Suspected,
    Removed,
}

/// Sent when a task finishes, carrying the worker's resident partition ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionMessage {
    pub worker_id: String,
    pub task_id: TaskId,
    pub result: MatchResult,
    pub cached_partitions: Vec<PartitionId>,
    pub cache_hits: u64,
    pub fetches: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ToWorker {
    Assign(MatchTask),
    Shutdown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FromWorker {
    Completion(CompletionMessage),
    TaskFailed {
        worker_id: String,
        task_id: TaskId,
        reason: String,
    },
    Heartbeat {
        worker_id: String,
    },
    Leave {
        worker_id: String,
    },
}

impl FromWorker {
    pub fn worker_id(&self) -> &str {
        match self {
            FromWorker::Completion(c) => &c.worker_id,
            FromWorker::TaskFailed { worker_id, .. }
            | FromWorker::Heartbeat { worker_id }
            | FromWorker::Leave { worker_id } => worker_id,
        }
    }
}

/// Coordinator side of a connection to one worker.
pub trait WorkerLink: Send {
    fn send(&self, msg: ToWorker) -> Result<()>;
}

/// Worker side of the connection to the coordinator.
pub trait CoordinatorLink: Send + Sync {
    fn send(&self, msg: FromWorker) -> Result<()>;
}

impl WorkerLink for crossbeam_channel::Sender<ToWorker> {
    fn send(&self, msg: ToWorker) -> Result<()> {
        crossbeam_channel::Sender::send(self, msg)
            .map_err(|_| Error::Transport("worker channel closed".into()))
    }
}
