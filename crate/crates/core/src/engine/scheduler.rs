//! Coordinator state: task list, approximate cache status per worker, and
//! membership. Pure and single-threaded; the runtime feeds it events and
//! carries out the returned assignments.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::model::{MatchTask, PartitionId, TaskId};

use super::protocol::{CompletionMessage, Liveness, WorkerDescriptor};
use super::trace::{Trace, TraceEvent, TraceKind};

#[derive(Clone, Debug, PartialEq)]
pub struct SchedulerConfig {
    /// Prefer tasks whose partitions the worker reported as cached.
    pub affinity: bool,
    /// Failed executions tolerated per task before the run gives up.
    pub max_task_failures: u32,
    pub suspect_after: Duration,
    pub fail_after: Duration,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            affinity: true,
            max_task_failures: 3,
            suspect_after: Duration::from_secs(2),
            fail_after: Duration::from_secs(5),
        }
    }
}

/// What the runtime has to do after an event.
#[derive(Debug, Default, PartialEq)]
pub struct Step {
    pub assignments: Vec<(String, MatchTask)>,
    /// Workers that left and should be shut down.
    pub retired: Vec<String>,
    pub failed_workers: Vec<String>,
    pub requeued: Vec<TaskId>,
    /// The event completed a task for the first time.
    pub newly_completed: bool,
    /// A task exceeded its failure budget.
    pub exhausted: Option<TaskId>,
}

impl Step {
    pub fn merge(&mut self, other: Step) {
        self.assignments.extend(other.assignments);
        self.retired.extend(other.retired);
        self.failed_workers.extend(other.failed_workers);
        self.requeued.extend(other.requeued);
        self.newly_completed |= other.newly_completed;
        if self.exhausted.is_none() {
            self.exhausted = other.exhausted;
        }
    }
}

#[derive(Debug)]
struct WorkerState {
    descriptor: WorkerDescriptor,
    liveness: Liveness,
    leaving: bool,
    /// Task ordinals occupying this worker's threads, including tasks that
    /// were meanwhile completed elsewhere.
    busy: BTreeSet<usize>,
    last_seen: Instant,
}

impl WorkerState {
    fn accepts_tasks(&self) -> bool {
        self.liveness == Liveness::Alive
            && !self.leaving
            && self.busy.len() < self.descriptor.thread_count
    }
}

#[derive(Debug)]
pub struct Scheduler {
    config: SchedulerConfig,
    tasks: Vec<MatchTask>,
    index: HashMap<TaskId, usize>,
    open: BTreeSet<usize>,
    in_flight: HashMap<usize, String>,
    completed: Vec<bool>,
    completed_count: usize,
    failures: HashMap<usize, u32>,
    workers: BTreeMap<String, WorkerState>,
    cache_status: HashMap<String, HashSet<PartitionId>>,
    trace: Trace,
}

impl Scheduler {
    /// Tasks keep their given order as creation order.
    pub fn new(tasks: Vec<MatchTask>, config: SchedulerConfig) -> Self {
        let index = tasks
            .iter()
            .enumerate()
            .map(|(i, t)| (t.id.clone(), i))
            .collect();
        Self {
            config,
            open: (0..tasks.len()).collect(),
            completed: vec![false; tasks.len()],
            tasks,
            index,
            in_flight: HashMap::new(),
            completed_count: 0,
            failures: HashMap::new(),
            workers: BTreeMap::new(),
            cache_status: HashMap::new(),
            trace: Trace::default(),
        }
    }

    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    pub fn open_count(&self) -> usize {
        self.open.len()
    }

    pub fn in_flight_count(&self) -> usize {
        self.in_flight.len()
    }

    pub fn completed_count(&self) -> usize {
        self.completed_count
    }

    pub fn is_finished(&self) -> bool {
        self.completed_count == self.tasks.len()
    }

    pub fn is_open(&self, task: &TaskId) -> bool {
        self.index.get(task).is_some_and(|i| self.open.contains(i))
    }

    pub fn is_completed(&self, task: &TaskId) -> bool {
        self.index.get(task).is_some_and(|i| self.completed[*i])
    }

    /// Worker currently holding the task in flight.
    pub fn in_flight_at(&self, task: &TaskId) -> Option<&str> {
        self.index
            .get(task)
            .and_then(|i| self.in_flight.get(i))
            .map(String::as_str)
    }

    pub fn liveness(&self, worker: &str) -> Option<Liveness> {
        self.workers.get(worker).map(|w| w.liveness)
    }

    /// Workers not yet removed, including suspected and leaving ones.
    pub fn live_worker_count(&self) -> usize {
        self.workers
            .values()
            .filter(|w| w.liveness != Liveness::Removed)
            .count()
    }

    pub fn live_workers(&self) -> Vec<String> {
        self.workers
            .iter()
            .filter(|(_, w)| w.liveness != Liveness::Removed)
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn cache_status(&self, worker: &str) -> Option<&HashSet<PartitionId>> {
        self.cache_status.get(worker)
    }

    pub fn trace(&self) -> &[TraceEvent] {
        self.trace.events()
    }

    pub fn into_trace(self) -> Vec<TraceEvent> {
        self.trace.into_events()
    }

    /// Registers a worker and fills its threads. A removed worker's id may
    /// be reused.
    pub fn add_worker(&mut self, descriptor: WorkerDescriptor, now: Instant) -> Result<Step> {
        let id = descriptor.worker_id.clone();
        if self
            .workers
            .get(&id)
            .is_some_and(|w| w.liveness != Liveness::Removed)
        {
            return Err(Error::DuplicateWorker(id));
        }
        self.workers.insert(
            id.clone(),
            WorkerState {
                descriptor,
                liveness: Liveness::Alive,
                leaving: false,
                busy: BTreeSet::new(),
                last_seen: now,
            },
        );
        self.trace.record(TraceKind::Join, &id, None);
        let mut step = Step::default();
        self.fill(&id, &mut step);
        Ok(step)
    }

    /// Picks the open task with the most input partitions in the worker's
    /// reported cache (a self task on a cached partition counts twice), the
    /// earliest created one on ties, and marks it in flight.
    pub fn select_task(&mut self, worker: &str) -> Option<MatchTask> {
        let status = self
            .cache_status
            .get(worker)
            .filter(|s| self.config.affinity && !s.is_empty());
        let (ordinal, affinity) = match status {
            None => (*self.open.first()?, 0),
            Some(status) => {
                let mut best: Option<(usize, u8)> = None;
                for &i in &self.open {
                    let score = affinity(&self.tasks[i], status);
                    if best.is_none_or(|(_, s)| score > s) {
                        best = Some((i, score));
                        if score == 2 {
                            break;
                        }
                    }
                }
                best?
            }
        };
        let w = self.workers.get_mut(worker)?;
        self.open.remove(&ordinal);
        self.in_flight.insert(ordinal, worker.to_owned());
        w.busy.insert(ordinal);
        let task = self.tasks[ordinal].clone();
        self.trace
            .record(TraceKind::Assign, worker, Some(&task.id))
            .affinity = Some(affinity);
        Some(task)
    }

    /// Records a completion, replaces the worker's cache status with the
    /// reported snapshot and assigns follow-up tasks. Completions of tasks
    /// already completed elsewhere are accepted without effect.
    pub fn on_completion(&mut self, msg: &CompletionMessage, now: Instant) -> Result<Step> {
        let ordinal = *self
            .index
            .get(&msg.task_id)
            .ok_or_else(|| Error::UnknownTask(msg.task_id.clone()))?;
        let w = self
            .workers
            .get_mut(&msg.worker_id)
            .ok_or_else(|| Error::UnknownWorker(msg.worker_id.clone()))?;
        w.busy.remove(&ordinal);
        w.last_seen = now;
        if w.liveness == Liveness::Suspected {
            w.liveness = Liveness::Alive;
        }
        let removed = w.liveness == Liveness::Removed;

        let mut step = Step::default();
        let kind = if self.completed[ordinal] {
            TraceKind::Duplicate
        } else {
            self.completed[ordinal] = true;
            self.completed_count += 1;
            self.open.remove(&ordinal);
            self.in_flight.remove(&ordinal);
            step.newly_completed = true;
            TraceKind::Complete
        };
        let ev = self.trace.record(kind, &msg.worker_id, Some(&msg.task_id));
        ev.cache_hits = Some(msg.cache_hits);
        ev.fetches = Some(msg.fetches);

        if !removed {
            self.cache_status.insert(
                msg.worker_id.clone(),
                msg.cached_partitions.iter().cloned().collect(),
            );
            self.after_slot_freed(&msg.worker_id, &mut step);
        }
        Ok(step)
    }

    /// Returns a task whose execution failed to the open list.
    pub fn on_task_failed(&mut self, worker: &str, task: &TaskId, now: Instant) -> Result<Step> {
        let ordinal = *self
            .index
            .get(task)
            .ok_or_else(|| Error::UnknownTask(task.clone()))?;
        let w = self
            .workers
            .get_mut(worker)
            .ok_or_else(|| Error::UnknownWorker(worker.to_owned()))?;
        w.busy.remove(&ordinal);
        w.last_seen = now;
        let removed = w.liveness == Liveness::Removed;

        let mut step = Step::default();
        if !self.completed[ordinal] && self.in_flight.get(&ordinal).map(String::as_str) == Some(worker) {
            self.in_flight.remove(&ordinal);
            self.open.insert(ordinal);
            self.trace.record(TraceKind::Requeue, worker, Some(task));
            step.requeued.push(task.clone());
            let n = self.failures.entry(ordinal).or_default();
            *n += 1;
            if *n > self.config.max_task_failures {
                step.exhausted = Some(task.clone());
            }
        }
        if !removed {
            self.after_slot_freed(worker, &mut step);
        }
        self.fill_all(&mut step);
        Ok(step)
    }

    pub fn heartbeat(&mut self, worker: &str, now: Instant) -> Step {
        let mut step = Step::default();
        if let Some(w) = self.workers.get_mut(worker) {
            w.last_seen = now;
            if w.liveness == Liveness::Suspected {
                w.liveness = Liveness::Alive;
                self.fill(worker, &mut step);
            }
        }
        step
    }

    /// Suspects workers with overdue heartbeats and fails those past the
    /// failure deadline.
    pub fn check_liveness(&mut self, now: Instant) -> Step {
        let mut step = Step::default();
        let mut failed = Vec::new();
        for (id, w) in &mut self.workers {
            if w.liveness == Liveness::Removed {
                continue;
            }
            let silent = now.saturating_duration_since(w.last_seen);
            if silent >= self.config.fail_after {
                failed.push(id.clone());
            } else if silent >= self.config.suspect_after && w.liveness == Liveness::Alive {
                w.liveness = Liveness::Suspected;
                self.trace.record(TraceKind::Suspect, id, None);
            }
        }
        for id in failed {
            step.merge(self.handle_worker_failure(&id));
        }
        step
    }

    /// Drops a failed worker: its in-flight tasks return to the open list
    /// in creation order and the other workers are refilled.
    pub fn handle_worker_failure(&mut self, worker: &str) -> Step {
        let mut step = Step::default();
        let Some(w) = self.workers.get_mut(worker) else {
            return step;
        };
        if w.liveness == Liveness::Removed {
            return step;
        }
        w.liveness = Liveness::Removed;
        let busy = std::mem::take(&mut w.busy);
        self.cache_status.remove(worker);
        self.trace.record(TraceKind::Fail, worker, None);
        for ordinal in busy {
            if self.in_flight.get(&ordinal).map(String::as_str) == Some(worker) {
                self.in_flight.remove(&ordinal);
                self.open.insert(ordinal);
                let id = self.tasks[ordinal].id.clone();
                self.trace.record(TraceKind::Requeue, worker, Some(&id));
                step.requeued.push(id);
            }
        }
        step.failed_workers.push(worker.to_owned());
        self.fill_all(&mut step);
        step
    }

    /// Graceful removal: no new tasks; the worker retires once its
    /// in-flight tasks are done (immediately when idle).
    pub fn remove_worker(&mut self, worker: &str) -> Result<Step> {
        let w = self
            .workers
            .get_mut(worker)
            .filter(|w| w.liveness != Liveness::Removed)
            .ok_or_else(|| Error::UnknownWorker(worker.to_owned()))?;
        w.leaving = true;
        let mut step = Step::default();
        if w.busy.is_empty() {
            self.retire(worker, &mut step);
        }
        Ok(step)
    }

    fn after_slot_freed(&mut self, worker: &str, step: &mut Step) {
        let Some(w) = self.workers.get(worker) else {
            return;
        };
        if w.leaving {
            if w.busy.is_empty() {
                self.retire(worker, step);
            }
        } else {
            self.fill(worker, step);
        }
    }

    fn retire(&mut self, worker: &str, step: &mut Step) {
        if let Some(w) = self.workers.get_mut(worker) {
            w.liveness = Liveness::Removed;
        }
        self.cache_status.remove(worker);
        self.trace.record(TraceKind::Leave, worker, None);
        step.retired.push(worker.to_owned());
    }

    fn fill(&mut self, worker: &str, step: &mut Step) {
        while self.workers.get(worker).is_some_and(WorkerState::accepts_tasks) {
            match self.select_task(worker) {
                Some(task) => step.assignments.push((worker.to_owned(), task)),
                None => break,
            }
        }
    }

    fn fill_all(&mut self, step: &mut Step) {
        let ids: Vec<String> = self.workers.keys().cloned().collect();
        for id in ids {
            if self.open.is_empty() {
                break;
            }
            self.fill(&id, step);
        }
    }
}

fn affinity(task: &MatchTask, cached: &HashSet<PartitionId>) -> u8 {
    let a = cached.contains(&task.partition_a) as u8;
    if task.is_self_task() {
        2 * a
    } else {
        a + cached.contains(&task.partition_b) as u8
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MatchResult, MatchStats};

    fn task(a: &str, b: &str) -> MatchTask {
        MatchTask::new(&PartitionId::from(a), &PartitionId::from(b), "s")
    }

    fn worker(id: &str, threads: usize) -> WorkerDescriptor {
        WorkerDescriptor::new(id, threads, 4).unwrap()
    }

    fn completion(worker: &str, task: &MatchTask, cached: &[&str]) -> CompletionMessage {
        CompletionMessage {
            worker_id: worker.into(),
            task_id: task.id.clone(),
            result: MatchResult {
                task_id: task.id.clone(),
                correspondences: vec![],
                stats: MatchStats::default(),
            },
            cached_partitions: cached.iter().map(|c| PartitionId::from(*c)).collect(),
            cache_hits: 0,
            fetches: 0,
        }
    }

    fn ids(step: &Step) -> Vec<&str> {
        step.assignments.iter().map(|(_, t)| t.id.as_str()).collect()
    }

    #[test]
    fn affinity_prefers_fully_cached_task() {
        let tasks = vec![task("P3", "P4"), task("P1", "P2"), task("P1", "P5")];
        let mut s = Scheduler::new(tasks, SchedulerConfig::default());
        s.cache_status.insert("w".into(), ["P1", "P2"].map(PartitionId::from).into());
        s.workers.insert(
            "w".into(),
            WorkerState {
                descriptor: worker("w", 1),
                liveness: Liveness::Alive,
                leaving: false,
                busy: BTreeSet::new(),
                last_seen: Instant::now(),
            },
        );
        assert_eq!(s.select_task("w").unwrap().id.as_str(), "P1|P2");
        // remaining: (P3,P4) affinity 0, (P1,P5) affinity 1
        assert_eq!(s.select_task("w").unwrap().id.as_str(), "P1|P5");
    }

    #[test]
    fn fifo_without_cache_information_and_on_ties() {
        let tasks = vec![task("P3", "P4"), task("P1", "P2"), task("P1", "P5")];
        let now = Instant::now();
        let mut s = Scheduler::new(tasks.clone(), SchedulerConfig::default());
        let step = s.add_worker(worker("w", 1), now).unwrap();
        assert_eq!(ids(&step), vec!["P3|P4"]);

        let mut s = Scheduler::new(tasks, SchedulerConfig::default());
        s.add_worker(worker("w", 1), now).unwrap();
        // cached P1 gives both remaining tasks affinity 1
        let step = s.on_completion(&completion("w", &task("P3", "P4"), &["P1"]), now).unwrap();
        assert_eq!(ids(&step), vec!["P1|P2"]);
    }

    #[test]
    fn affinity_disabled_is_fifo() {
        let tasks = vec![task("P3", "P4"), task("P1", "P2")];
        let config = SchedulerConfig {
            affinity: false,
            ..SchedulerConfig::default()
        };
        let mut s = Scheduler::new(tasks, config);
        s.cache_status.insert("w".into(), ["P1", "P2"].map(PartitionId::from).into());
        let now = Instant::now();
        assert_eq!(ids(&s.add_worker(worker("w", 1), now).unwrap()), vec!["P3|P4"]);
    }

    #[test]
    fn self_task_on_cached_partition_counts_twice() {
        let cached: HashSet<PartitionId> = [PartitionId::from("P1")].into();
        assert_eq!(affinity(&task("P1", "P1"), &cached), 2);
        assert_eq!(affinity(&task("P1", "P2"), &cached), 1);
        assert_eq!(affinity(&task("P2", "P2"), &cached), 0);
    }

    #[test]
    fn task_list_sets_stay_disjoint() {
        let tasks: Vec<_> = (0..5).map(|i| task(&format!("P{i}"), "Q")).collect();
        let mut s = Scheduler::new(tasks, SchedulerConfig::default());
        let now = Instant::now();
        let step = s.add_worker(worker("w", 2), now).unwrap();
        assert_eq!(step.assignments.len(), 2);
        assert_eq!((s.open_count(), s.in_flight_count(), s.completed_count()), (3, 2, 0));
        let (_, t) = &step.assignments[0];
        let step = s.on_completion(&completion("w", t, &[]), now).unwrap();
        assert!(step.newly_completed);
        assert_eq!(step.assignments.len(), 1);
        assert_eq!((s.open_count(), s.in_flight_count(), s.completed_count()), (2, 2, 1));
    }

    #[test]
    fn duplicate_worker_rejected() {
        let mut s = Scheduler::new(vec![], SchedulerConfig::default());
        let now = Instant::now();
        s.add_worker(worker("w", 1), now).unwrap();
        assert!(matches!(s.add_worker(worker("w", 1), now), Err(Error::DuplicateWorker(_))));
    }

    #[test]
    fn unknown_task_completion_rejected() {
        let mut s = Scheduler::new(vec![task("A", "B")], SchedulerConfig::default());
        let now = Instant::now();
        s.add_worker(worker("w", 1), now).unwrap();
        assert!(matches!(
            s.on_completion(&completion("w", &task("X", "Y"), &[]), now),
            Err(Error::UnknownTask(_))
        ));
    }

    #[test]
    fn failure_requeues_in_creation_order_and_late_completion_is_duplicate() {
        let tasks: Vec<_> = (0..4).map(|i| task(&format!("P{i}"), &format!("P{i}"))).collect();
        let mut s = Scheduler::new(tasks.clone(), SchedulerConfig::default());
        let now = Instant::now();
        let a = s.add_worker(worker("a", 2), now).unwrap();
        assert_eq!(ids(&a), vec!["P0|P0", "P1|P1"]);
        let b = s.add_worker(worker("b", 1), now).unwrap();
        assert_eq!(ids(&b), vec!["P2|P2"]);

        let step = s.handle_worker_failure("a");
        assert_eq!(step.requeued.len(), 2);
        assert_eq!(s.liveness("a"), Some(Liveness::Removed));
        assert!(s.cache_status("a").is_none());
        assert_eq!((s.open_count(), s.in_flight_count()), (3, 1));

        // b picks the requeued tasks first, in their original order
        let step = s.on_completion(&completion("b", &tasks[2], &[]), now).unwrap();
        assert_eq!(ids(&step), vec!["P0|P0"]);
        let step = s.on_completion(&completion("b", &tasks[0], &[]), now).unwrap();
        assert_eq!(ids(&step), vec!["P1|P1"]);

        // a was only slow: its late completion of P0 is a no-op
        let step = s.on_completion(&completion("a", &tasks[0], &["P0"]), now).unwrap();
        assert!(!step.newly_completed);
        assert!(step.assignments.is_empty());
        assert_eq!(s.completed_count(), 2);
        assert_eq!(s.trace().last().unwrap().kind, TraceKind::Duplicate);

        // a's late completion of P1 beats b; b's later one is the duplicate
        let step = s.on_completion(&completion("a", &tasks[1], &[]), now).unwrap();
        assert!(step.newly_completed);
        assert_eq!(s.in_flight_at(&tasks[1].id), None);
        let step = s.on_completion(&completion("b", &tasks[1], &[]), now).unwrap();
        assert!(!step.newly_completed);
        assert_eq!(ids(&step), vec!["P3|P3"]);
    }

    #[test]
    fn failing_idle_worker_requeues_nothing() {
        let mut s = Scheduler::new(vec![], SchedulerConfig::default());
        s.add_worker(worker("a", 1), Instant::now()).unwrap();
        let step = s.handle_worker_failure("a");
        assert!(step.requeued.is_empty());
        assert_eq!(step.failed_workers, vec!["a".to_string()]);
    }

    #[test]
    fn heartbeat_deadlines() {
        let config = SchedulerConfig {
            suspect_after: Duration::from_secs(2),
            fail_after: Duration::from_secs(5),
            ..SchedulerConfig::default()
        };
        let mut s = Scheduler::new(vec![task("A", "A"), task("B", "B")], config);
        let t0 = Instant::now();
        s.add_worker(worker("a", 1), t0).unwrap();
        s.add_worker(worker("b", 1), t0).unwrap();
        s.heartbeat("b", t0 + Duration::from_secs(4));

        let step = s.check_liveness(t0 + Duration::from_secs(3));
        assert_eq!(step, Step::default());
        assert_eq!(s.liveness("a"), Some(Liveness::Suspected));
        assert_eq!(s.liveness("b"), Some(Liveness::Alive));

        let step = s.check_liveness(t0 + Duration::from_secs(5));
        assert_eq!(step.failed_workers, vec!["a".to_string()]);
        assert_eq!(step.requeued.len(), 1);
        assert_eq!(s.live_worker_count(), 1);
    }

    #[test]
    fn suspected_worker_recovers_on_heartbeat() {
        let config = SchedulerConfig {
            suspect_after: Duration::from_secs(1),
            fail_after: Duration::from_secs(10),
            ..SchedulerConfig::default()
        };
        let tasks = vec![task("A", "A"), task("B", "B")];
        let mut s = Scheduler::new(tasks.clone(), config);
        let t0 = Instant::now();
        s.add_worker(worker("a", 1), t0).unwrap();
        s.check_liveness(t0 + Duration::from_secs(2));
        assert_eq!(s.liveness("a"), Some(Liveness::Suspected));
        s.heartbeat("a", t0 + Duration::from_secs(3));
        assert_eq!(s.liveness("a"), Some(Liveness::Alive));
    }

    #[test]
    fn graceful_removal() {
        let tasks: Vec<_> = (0..3).map(|i| task(&format!("P{i}"), "Q")).collect();
        let mut s = Scheduler::new(tasks.clone(), SchedulerConfig::default());
        let now = Instant::now();
        s.add_worker(worker("a", 1), now).unwrap();
        s.add_worker(worker("b", 1), now).unwrap();

        let step = s.remove_worker("a").unwrap();
        assert!(step.retired.is_empty());
        let step = s.on_completion(&completion("a", &tasks[0], &[]), now).unwrap();
        assert_eq!(step.retired, vec!["a".to_string()]);
        assert!(step.assignments.is_empty());

        let idle = WorkerDescriptor::new("c", 1, 0).unwrap();
        let mut s = Scheduler::new(vec![], SchedulerConfig::default());
        s.add_worker(idle, now).unwrap();
        assert_eq!(s.remove_worker("c").unwrap().retired, vec!["c".to_string()]);
        assert!(matches!(s.remove_worker("c"), Err(Error::UnknownWorker(_))));
    }

    #[test]
    fn added_worker_receives_tasks() {
        let tasks: Vec<_> = (0..3).map(|i| task(&format!("P{i}"), "Q")).collect();
        let mut s = Scheduler::new(tasks, SchedulerConfig::default());
        let now = Instant::now();
        s.add_worker(worker("a", 1), now).unwrap();
        let step = s.add_worker(worker("b", 2), now).unwrap();
        assert_eq!(step.assignments.len(), 2);
        assert!(step.assignments.iter().all(|(w, _)| w == "b"));
    }

    #[test]
    fn task_failures_are_retried_then_exhausted() {
        let t = task("A", "B");
        let config = SchedulerConfig {
            max_task_failures: 1,
            ..SchedulerConfig::default()
        };
        let mut s = Scheduler::new(vec![t.clone()], config);
        let now = Instant::now();
        s.add_worker(worker("a", 1), now).unwrap();
        let step = s.on_task_failed("a", &t.id, now).unwrap();
        assert_eq!(step.requeued, vec![t.id.clone()]);
        assert_eq!(ids(&step), vec!["A|B"]);
        assert!(step.exhausted.is_none());
        let step = s.on_task_failed("a", &t.id, now).unwrap();
        assert_eq!(step.exhausted, Some(t.id.clone()));
    }
}
