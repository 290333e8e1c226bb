//! Scheduling trace: one record per coordinator decision, in decision order.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::TaskId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Join,
    Assign,
    Complete,
    /// A completion for a task that was already completed elsewhere.
    Duplicate,
    Requeue,
    Suspect,
    Fail,
    Leave,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub kind: TraceKind,
    pub worker: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskId>,
    /// Affinity of an assignment (cached input partitions, 0 to 2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affinity: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_hits: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fetches: Option<u64>,
}

#[derive(Debug, Default)]
pub struct Trace {
    events: Vec<TraceEvent>,
}

impl Trace {
    pub fn record(&mut self, kind: TraceKind, worker: &str, task: Option<&TaskId>) -> &mut TraceEvent {
        let seq = self.events.len() as u64;
        self.events.push(TraceEvent {
            seq,
            kind,
            worker: worker.to_owned(),
            task: task.cloned(),
            affinity: None,
            cache_hits: None,
            fetches: None,
        });
        self.events.last_mut().expect("just pushed")
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<TraceEvent> {
        self.events
    }
}

/// Writes one JSON object per line.
pub fn write_trace<W: Write>(events: &[TraceEvent], mut out: W) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
