//! Match worker: a pool of executor threads sharing one partition cache,
//! plus a heartbeat thread.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crossbeam_channel::{Receiver, RecvTimeoutError};
use parking_lot::Mutex;

use crate::data_service::{DataStore, PartitionPayload};
use crate::error::{Error, Result};
use crate::model::{MatchTask, PartitionId};
use crate::strategy::MatchStrategy;

use super::cache::PartitionCache;
use super::protocol::{CompletionMessage, CoordinatorLink, FromWorker, ToWorker, WorkerDescriptor};

/// Where workers obtain partition payloads on a cache miss.
pub trait PartitionSource: Send + Sync {
    fn fetch_partition(&self, id: &PartitionId) -> Result<PartitionPayload>;
}

impl PartitionSource for DataStore {
    fn fetch_partition(&self, id: &PartitionId) -> Result<PartitionPayload> {
        DataStore::fetch_partition(self, id)
    }
}

/// Fault injection: a killed worker goes silent, dropping results and
/// heartbeats, as if its process had died.
#[derive(Clone, Debug, Default)]
pub struct KillSwitch(Arc<AtomicBool>);

impl KillSwitch {
    pub fn kill(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_killed(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

pub type SharedCache = Arc<Mutex<PartitionCache<PartitionPayload>>>;

/// Everything a worker needs besides its inbox.
pub struct WorkerContext {
    pub descriptor: WorkerDescriptor,
    pub strategy: Arc<MatchStrategy>,
    pub source: Arc<dyn PartitionSource>,
    pub link: Arc<dyn CoordinatorLink>,
    pub heartbeat_interval: Duration,
    pub kill: KillSwitch,
}

/// Runs the worker until `Shutdown` arrives or the inbox closes. In-flight
/// tasks are finished before returning.
pub fn run_worker(ctx: WorkerContext, inbox: Receiver<ToWorker>) {
    let ctx = Arc::new(ctx);
    let cache: SharedCache = Arc::new(Mutex::new(PartitionCache::new(
        ctx.descriptor.cache_capacity,
    )));
    let (task_tx, task_rx) = crossbeam_channel::unbounded::<MatchTask>();
    let executors: Vec<JoinHandle<()>> = (0..ctx.descriptor.thread_count)
        .map(|_| {
            let ctx = ctx.clone();
            let cache = cache.clone();
            let rx = task_rx.clone();
            thread::spawn(move || {
                for task in rx {
                    if ctx.kill.is_killed() {
                        continue;
                    }
                    let msg = match execute_task(&task, &ctx.strategy, &cache, ctx.source.as_ref(), &ctx.descriptor.worker_id) {
                        Ok(c) => FromWorker::Completion(c),
                        Err(e) => FromWorker::TaskFailed {
                            worker_id: ctx.descriptor.worker_id.clone(),
                            task_id: task.id.clone(),
                            reason: e.to_string(),
                        },
                    };
                    if ctx.kill.is_killed() {
                        continue;
                    }
                    if let Err(e) = ctx.link.send(msg) {
                        log::warn!("worker {}: {e}", ctx.descriptor.worker_id);
                    }
                }
            })
        })
        .collect();

    let (stop_tx, stop_rx) = crossbeam_channel::bounded::<()>(0);
    let heartbeat = {
        let ctx = ctx.clone();
        thread::spawn(move || loop {
            match stop_rx.recv_timeout(ctx.heartbeat_interval) {
                Err(RecvTimeoutError::Timeout) => {
                    if ctx.kill.is_killed() {
                        continue;
                    }
                    let hb = FromWorker::Heartbeat {
                        worker_id: ctx.descriptor.worker_id.clone(),
                    };
                    if ctx.link.send(hb).is_err() {
                        break;
                    }
                }
                _ => break,
            }
        })
    };

    for msg in inbox {
        match msg {
            ToWorker::Assign(task) => {
                if task_tx.send(task).is_err() {
                    break;
                }
            }
            ToWorker::Shutdown => break,
        }
    }
    drop(task_tx);
    for e in executors {
        let _ = e.join();
    }
    drop(stop_tx);
    let _ = heartbeat.join();
}

/// Runs one task: each input partition is taken from the cache or fetched
/// and inserted (evicting the least recently used one when full).
pub fn execute_task(
    task: &MatchTask,
    strategy: &MatchStrategy,
    cache: &SharedCache,
    source: &dyn PartitionSource,
    worker_id: &str,
) -> Result<CompletionMessage> {
    if task.strategy_id != strategy.id {
        return Err(Error::config(
            "strategy",
            format!("task {} wants strategy `{}`, worker runs `{}`", task.id, task.strategy_id, strategy.id),
        ));
    }
    let mut hits = 0;
    let mut fetches = 0;
    let mut payloads = Vec::with_capacity(2);
    for pid in task.accessed_partitions() {
        let cached = cache.lock().get(pid);
        let payload = match cached {
            Some(p) => {
                hits += 1;
                p
            }
            None => {
                let p = source.fetch_partition(pid)?;
                fetches += 1;
                cache.lock().insert(pid.clone(), p.clone());
                p
            }
        };
        payloads.push(payload);
    }
    let a = &payloads[0];
    let b = payloads.get(1).unwrap_or(a);
    let result = strategy.evaluate_partition_pair(&task.id, a, b, task.is_self_task());
    let cached_partitions = cache.lock().resident_ids();
    Ok(CompletionMessage {
        worker_id: worker_id.to_owned(),
        task_id: task.id.clone(),
        result,
        cached_partitions,
        cache_hits: hits,
        fetches,
    })
}
