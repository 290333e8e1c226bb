//! Thread-count speedup measurement on a fixed plan.

use std::sync::Arc;

use serde::Serialize;

use crate::data_service::DataStore;
use crate::engine::{run_local, EngineConfig, WorkerDescriptor};
use crate::error::{Error, Result};
use crate::model::CorrespondenceSet;
use crate::partitioning::PartitionPlan;
use crate::strategy::MatchStrategy;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SpeedupRow {
    pub threads: usize,
    pub elapsed: f64,
    /// Elapsed time of the first row divided by this row's.
    pub speedup: f64,
    pub correspondence_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SpeedupReport {
    pub rows: Vec<SpeedupRow>,
    /// All thread counts produced the same correspondence set.
    pub results_identical: bool,
}

impl SpeedupReport {
    pub fn speedup_at(&self, threads: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.threads == threads).map(|r| r.speedup)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::from("threads  elapsed_s  speedup  correspondences\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{:>7}  {:>9.3}  {:>7.2}  {:>15}\n",
                r.threads, r.elapsed, r.speedup, r.correspondence_count
            ));
        }
        s
    }
}

/// Runs the plan once per thread count on one in-process worker with the
/// given cache capacity. The baseline is the first thread count.
pub fn speedup_experiment(
    store: &DataStore,
    plan: &PartitionPlan,
    strategy: &MatchStrategy,
    thread_counts: &[usize],
    cache_capacity: usize,
    engine: &EngineConfig,
) -> Result<SpeedupReport> {
    if thread_counts.is_empty() {
        return Err(Error::config("threads", "need at least one thread count"));
    }
    let mut rows = Vec::new();
    let mut first: Option<CorrespondenceSet> = None;
    let mut identical = true;
    for &t in thread_counts {
        let run_store = Arc::new(store.with_same_entities());
        let worker = WorkerDescriptor::new("w0", t, cache_capacity)?;
        let outcome = run_local(run_store, plan.clone(), strategy, &[worker], engine.clone())?;
        match &first {
            None => first = Some(outcome.correspondences.clone()),
            Some(f) => identical &= *f == outcome.correspondences,
        }
        rows.push(SpeedupRow {
            threads: t,
            elapsed: outcome.metrics.total_elapsed,
            speedup: 1.0,
            correspondence_count: outcome.correspondences.len(),
        });
    }
    let base = rows[0].elapsed;
    for r in &mut rows {
        r.speedup = if r.elapsed > 0.0 { base / r.elapsed } else { 1.0 };
    }
    Ok(SpeedupReport {
        rows,
        results_identical: identical,
    })
}
