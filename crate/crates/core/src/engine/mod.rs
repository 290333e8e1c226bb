//! Coordinator/worker execution of a partition plan.
//!
//! The coordinator owns the task list, an approximate view of every
//! worker's cache and the membership. Workers pull work implicitly: each
//! completion frees a thread slot, and the coordinator answers it with the
//! open task that has the most input partitions in that worker's cache.

pub mod cache;
pub mod protocol;
pub mod scheduler;
pub mod tcp;
pub mod trace;
pub mod worker;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, RecvTimeoutError, Sender};

use crate::data_service::DataStore;
use crate::error::{Error, Result};
use crate::metrics::{hit_ratio, RunMetrics};
use crate::model::CorrespondenceSet;
use crate::partitioning::PartitionPlan;
use crate::strategy::MatchStrategy;

pub use cache::{Access, PartitionCache};
pub use protocol::{
    CompletionMessage, CoordinatorLink, FromWorker, Liveness, ToWorker, WorkerDescriptor,
    WorkerLink,
};
pub use scheduler::{Scheduler, SchedulerConfig, Step};
pub use trace::{write_trace, TraceEvent, TraceKind};
pub use worker::{execute_task, run_worker, KillSwitch, PartitionSource, WorkerContext};

#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig {
    pub affinity: bool,
    pub heartbeat_interval: Duration,
    /// Silence after which a worker is declared failed.
    pub heartbeat_timeout: Duration,
    /// How long the run waits with open tasks and no live worker before
    /// aborting.
    pub membership_timeout: Duration,
    pub max_task_failures: u32,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            affinity: true,
            heartbeat_interval: Duration::from_secs(1),
            heartbeat_timeout: Duration::from_secs(5),
            membership_timeout: Duration::from_secs(30),
            max_task_failures: 3,
        }
    }
}

impl EngineConfig {
    fn scheduler_config(&self) -> SchedulerConfig {
        SchedulerConfig {
            affinity: self.affinity,
            max_task_failures: self.max_task_failures,
            suspect_after: (self.heartbeat_interval * 2).min(self.heartbeat_timeout),
            fail_after: self.heartbeat_timeout,
        }
    }
}

/// Messages arriving at the coordinator.
pub enum Inbound {
    Join {
        descriptor: WorkerDescriptor,
        link: Box<dyn WorkerLink>,
    },
    Worker(FromWorker),
    /// The transport lost the worker.
    Disconnected { worker_id: String },
    /// Operator request for a graceful removal.
    Remove { worker_id: String },
}

/// Cloneable entry point into a running coordinator.
#[derive(Clone)]
pub struct CoordinatorHandle {
    tx: Sender<Inbound>,
}

impl CoordinatorHandle {
    pub fn send(&self, msg: Inbound) -> Result<()> {
        self.tx
            .send(msg)
            .map_err(|_| Error::Transport("coordinator has stopped".into()))
    }

    pub fn join(&self, descriptor: WorkerDescriptor, link: Box<dyn WorkerLink>) -> Result<()> {
        self.send(Inbound::Join { descriptor, link })
    }

    pub fn remove(&self, worker_id: impl Into<String>) -> Result<()> {
        self.send(Inbound::Remove {
            worker_id: worker_id.into(),
        })
    }
}

impl CoordinatorLink for CoordinatorHandle {
    fn send(&self, msg: FromWorker) -> Result<()> {
        CoordinatorHandle::send(self, Inbound::Worker(msg))
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub correspondences: CorrespondenceSet,
    pub metrics: RunMetrics,
    pub trace: Vec<TraceEvent>,
}

pub struct Coordinator {
    store: Arc<DataStore>,
    plan: PartitionPlan,
    config: EngineConfig,
    tx: Sender<Inbound>,
    rx: Receiver<Inbound>,
}

impl Coordinator {
    /// Registers the plan's partitions and tasks with the store.
    pub fn new(store: Arc<DataStore>, plan: PartitionPlan, config: EngineConfig) -> Result<Self> {
        store.register_plan(&plan)?;
        let (tx, rx) = crossbeam_channel::unbounded();
        Ok(Self {
            store,
            plan,
            config,
            tx,
            rx,
        })
    }

    pub fn handle(&self) -> CoordinatorHandle {
        CoordinatorHandle {
            tx: self.tx.clone(),
        }
    }

    /// Drives the plan to completion and shuts the workers down.
    pub fn run(self) -> Result<RunOutcome> {
        let Coordinator {
            store,
            plan,
            config,
            tx,
            rx,
        } = self;
        drop(tx);
        let mut state = RunState {
            scheduler: Scheduler::new(plan.tasks.clone(), config.scheduler_config()),
            links: HashMap::new(),
            busy: BTreeMap::new(),
            cache_hits: 0,
        };
        let fetches_before = store.total_fetches();
        let started = Instant::now();
        let tick = (config.heartbeat_interval / 2).clamp(Duration::from_millis(5), Duration::from_millis(100));
        let mut unstaffed_since: Option<Instant> = None;

        let result = loop {
            if state.scheduler.is_finished() {
                break Ok(());
            }
            let now = Instant::now();
            let step = match rx.recv_timeout(tick) {
                Ok(msg) => state.handle(msg, &store, now),
                Err(RecvTimeoutError::Timeout) => Ok(Step::default()),
                Err(RecvTimeoutError::Disconnected) => Ok(Step::default()),
            };
            let step = match step {
                Ok(step) => step,
                Err(e) => break Err(e),
            };
            let mut step = step;
            step.merge(state.scheduler.check_liveness(Instant::now()));
            if let Some(task) = &step.exhausted {
                break Err(abort(&state, &store, format!("task {task} failed repeatedly")));
            }
            state.dispatch(step);

            if state.scheduler.live_worker_count() == 0 && !state.scheduler.is_finished() {
                let since = *unstaffed_since.get_or_insert_with(Instant::now);
                if since.elapsed() >= config.membership_timeout {
                    break Err(abort(&state, &store, "no live workers".into()));
                }
            } else {
                unstaffed_since = None;
            }
        };
        let elapsed = started.elapsed();
        state.shutdown(&rx);
        result?;

        let correspondences = store.correspondences()?;
        let results = store.results();
        let fetches = store.total_fetches() - fetches_before;
        let metrics = RunMetrics {
            task_count: plan.tasks.len(),
            partition_count: plan.partitions.len(),
            total_elapsed: elapsed.as_secs_f64(),
            per_worker_busy_time: state
                .busy
                .iter()
                .map(|(w, d)| (w.clone(), d.as_secs_f64()))
                .collect(),
            pairs_compared: results.iter().map(|r| r.stats.pairs_compared).sum(),
            fetches,
            cache_hits: state.cache_hits,
            hit_ratio: hit_ratio(state.cache_hits, fetches),
            correspondence_count: correspondences.len(),
            speedup_baseline: None,
        };
        Ok(RunOutcome {
            correspondences,
            metrics,
            trace: state.scheduler.into_trace(),
        })
    }
}

fn abort(state: &RunState, store: &DataStore, reason: String) -> Error {
    Error::Aborted {
        completed: state.scheduler.completed_count(),
        total: state.scheduler.task_count(),
        reason,
        partial: Box::new(store.correspondences().unwrap_or_default()),
    }
}

struct RunState {
    scheduler: Scheduler,
    links: HashMap<String, Box<dyn WorkerLink>>,
    busy: BTreeMap<String, Duration>,
    cache_hits: u64,
}

impl RunState {
    fn handle(&mut self, msg: Inbound, store: &DataStore, now: Instant) -> Result<Step> {
        match msg {
            Inbound::Join { descriptor, link } => {
                let id = descriptor.worker_id.clone();
                match self.scheduler.add_worker(descriptor, now) {
                    Ok(step) => {
                        self.links.insert(id.clone(), link);
                        self.busy.entry(id).or_default();
                        Ok(step)
                    }
                    Err(e) => {
                        log::warn!("rejecting worker: {e}");
                        let _ = link.send(ToWorker::Shutdown);
                        Ok(Step::default())
                    }
                }
            }
            Inbound::Worker(FromWorker::Completion(msg)) => {
                if self.scheduler.liveness(&msg.worker_id).is_none() {
                    log::warn!("completion from unknown worker {}", msg.worker_id);
                    return Ok(Step::default());
                }
                self.cache_hits += msg.cache_hits;
                *self.busy.entry(msg.worker_id.clone()).or_default() += msg.result.stats.elapsed;
                store.store_result(msg.result.clone())?;
                self.scheduler.on_completion(&msg, now)
            }
            Inbound::Worker(FromWorker::TaskFailed {
                worker_id,
                task_id,
                reason,
            }) => {
                log::warn!("worker {worker_id} failed task {task_id}: {reason}");
                if self.scheduler.liveness(&worker_id).is_none() {
                    return Ok(Step::default());
                }
                self.scheduler.on_task_failed(&worker_id, &task_id, now)
            }
            Inbound::Worker(FromWorker::Heartbeat { worker_id }) => {
                Ok(self.scheduler.heartbeat(&worker_id, now))
            }
            Inbound::Worker(FromWorker::Leave { worker_id }) | Inbound::Remove { worker_id } => {
                match self.scheduler.remove_worker(&worker_id) {
                    Ok(step) => Ok(step),
                    Err(e) => {
                        log::warn!("{e}");
                        Ok(Step::default())
                    }
                }
            }
            Inbound::Disconnected { worker_id } => {
                Ok(self.scheduler.handle_worker_failure(&worker_id))
            }
        }
    }

    fn dispatch(&mut self, step: Step) {
        let mut pending = step;
        loop {
            for w in &pending.failed_workers {
                log::warn!("worker {w} failed; requeued its tasks");
                self.links.remove(w);
            }
            for w in &pending.retired {
                if let Some(link) = self.links.remove(w) {
                    let _ = link.send(ToWorker::Shutdown);
                }
            }
            let mut lost = Vec::new();
            for (w, task) in pending.assignments.drain(..) {
                let sent = self
                    .links
                    .get(&w)
                    .map(|l| l.send(ToWorker::Assign(task)));
                if !matches!(sent, Some(Ok(()))) && !lost.contains(&w) {
                    lost.push(w);
                }
            }
            if lost.is_empty() {
                return;
            }
            pending = Step::default();
            for w in lost {
                pending.merge(self.scheduler.handle_worker_failure(&w));
            }
        }
    }

    fn shutdown(&mut self, rx: &Receiver<Inbound>) {
        for (_, link) in self.links.drain() {
            let _ = link.send(ToWorker::Shutdown);
        }
        while let Ok(msg) = rx.try_recv() {
            if let Inbound::Join { link, .. } = msg {
                let _ = link.send(ToWorker::Shutdown);
            }
        }
    }
}

/// An in-process worker thread.
pub struct LocalWorker {
    pub worker_id: String,
    pub kill: KillSwitch,
    handle: JoinHandle<()>,
}

impl LocalWorker {
    pub fn join(self) {
        let _ = self.handle.join();
    }
}

/// Starts a worker thread connected to `coordinator` over channels.
pub fn spawn_local_worker(
    descriptor: WorkerDescriptor,
    strategy: Arc<MatchStrategy>,
    source: Arc<dyn PartitionSource>,
    coordinator: &CoordinatorHandle,
    heartbeat_interval: Duration,
) -> Result<LocalWorker> {
    let (tx, rx) = crossbeam_channel::unbounded::<ToWorker>();
    let kill = KillSwitch::default();
    let worker_id = descriptor.worker_id.clone();
    let ctx = WorkerContext {
        descriptor: descriptor.clone(),
        strategy,
        source,
        link: Arc::new(coordinator.clone()),
        heartbeat_interval,
        kill: kill.clone(),
    };
    coordinator.join(descriptor, Box::new(tx))?;
    let handle = thread::Builder::new()
        .name(format!("worker-{worker_id}"))
        .spawn(move || run_worker(ctx, rx))?;
    Ok(LocalWorker {
        worker_id,
        kill,
        handle,
    })
}

/// Runs a plan on in-process workers and waits for them to exit.
pub fn run_local(
    store: Arc<DataStore>,
    plan: PartitionPlan,
    strategy: &MatchStrategy,
    workers: &[WorkerDescriptor],
    config: EngineConfig,
) -> Result<RunOutcome> {
    strategy.validate()?;
    let strategy = Arc::new(strategy.clone());
    let heartbeat = config.heartbeat_interval;
    let coordinator = Coordinator::new(store.clone(), plan, config)?;
    let handle = coordinator.handle();
    let spawned = workers
        .iter()
        .map(|d| spawn_local_worker(d.clone(), strategy.clone(), store.clone(), &handle, heartbeat))
        .collect::<Result<Vec<_>>>()?;
    drop(handle);
    let outcome = coordinator.run();
    for w in spawned {
        w.join();
    }
    outcome
}
