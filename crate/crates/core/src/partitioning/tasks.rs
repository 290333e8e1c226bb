//! Match-task generation for size-based and blocking-based partitionings,
//! for one source and for two sources.

use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};
use crate::model::{MatchTask, Partition, PartitionId, PartitionKind};

use super::PartitioningMode;

/// Every pair `(Pᵢ, Pⱼ)` with `i ≤ j`: `p + p(p−1)/2` tasks.
pub fn generate_size_based_tasks(partitions: &[Partition], strategy_id: &str) -> Vec<MatchTask> {
    let mut tasks = Vec::with_capacity(partitions.len() * (partitions.len() + 1) / 2);
    for (i, a) in partitions.iter().enumerate() {
        for b in &partitions[i..] {
            tasks.push(MatchTask::new(a.id(), b.id(), strategy_id));
        }
    }
    tasks
}

/// Tasks for a tuned blocking partitioning.
///
/// Whole and aggregate partitions are matched with themselves; the `k`
/// sub-partitions of a split block are matched pairwise including
/// themselves; every misc partition is matched against every partition,
/// itself and the other misc partitions included. Each partition pair
/// appears once.
pub fn generate_blocking_tasks(partitions: &[Partition], strategy_id: &str) -> Vec<MatchTask> {
    let mut gen = TaskSet::new(strategy_id);
    let mut families: BTreeMap<&str, Vec<&Partition>> = BTreeMap::new();
    let mut family_order: Vec<&str> = Vec::new();

    for p in partitions {
        match p.kind() {
            PartitionKind::Plain | PartitionKind::BlockWhole | PartitionKind::Aggregate { .. } => {
                gen.add(p.id(), p.id());
            }
            PartitionKind::BlockSplit { .. } => {
                let key = p.origin_block_key().unwrap_or_default();
                let family = families.entry(key).or_default();
                if family.is_empty() {
                    family_order.push(key);
                }
                family.push(p);
            }
            PartitionKind::Misc { .. } => {}
        }
    }
    for key in family_order {
        let family = &families[key];
        for (i, a) in family.iter().enumerate() {
            for b in &family[i..] {
                gen.add(a.id(), b.id());
            }
        }
    }
    for misc in partitions.iter().filter(|p| p.kind().is_misc()) {
        for other in partitions {
            gen.add(misc.id(), other.id());
        }
    }
    gen.tasks
}

/// One source's partitions together with the mode that produced them.
#[derive(Clone, Copy, Debug)]
pub struct SourcePartitions<'a> {
    pub mode: PartitioningMode,
    pub partitions: &'a [Partition],
}

/// Tasks for matching two separately partitioned sources.
///
/// With `duplicate_free` only cross-source tasks are produced: the full
/// `|A|·|B|` grid for size-based partitions; for blocking-based partitions,
/// the pairs sharing a blocking key plus every pair involving a misc
/// partition of either side. Otherwise the sources are treated as one:
/// size-based partitions get the triangle over `A ++ B`, blocking-based
/// partitions get each source's own blocking tasks plus the cross tasks.
pub fn generate_two_source_tasks(
    a: SourcePartitions<'_>,
    b: SourcePartitions<'_>,
    duplicate_free: bool,
    strategy_id: &str,
) -> Result<Vec<MatchTask>> {
    if a.mode != b.mode {
        return Err(Error::config(
            "partitioning.mode",
            format!("sources partitioned differently ({:?} vs {:?})", a.mode, b.mode),
        ));
    }
    let mut gen = TaskSet::new(strategy_id);
    match (a.mode, duplicate_free) {
        (PartitioningMode::SizeBased, true) => {
            for pa in a.partitions {
                for pb in b.partitions {
                    gen.add(pa.id(), pb.id());
                }
            }
        }
        (PartitioningMode::SizeBased, false) => {
            let all: Vec<Partition> = a.partitions.iter().chain(b.partitions).cloned().collect();
            gen.extend(generate_size_based_tasks(&all, strategy_id));
        }
        (PartitioningMode::BlockingBased, dup_free) => {
            if !dup_free {
                gen.extend(generate_blocking_tasks(a.partitions, strategy_id));
                gen.extend(generate_blocking_tasks(b.partitions, strategy_id));
            }
            for pa in a.partitions {
                let keys_a = pa.block_keys();
                for pb in b.partitions {
                    let related = pa.kind().is_misc()
                        || pb.kind().is_misc()
                        || pb.block_keys().iter().any(|k| keys_a.contains(k));
                    if related {
                        gen.add(pa.id(), pb.id());
                    }
                }
            }
        }
    }
    Ok(gen.tasks)
}

/// Ordered task list without duplicate partition pairs.
struct TaskSet<'s> {
    strategy_id: &'s str,
    seen: HashSet<(PartitionId, PartitionId)>,
    tasks: Vec<MatchTask>,
}

impl<'s> TaskSet<'s> {
    fn new(strategy_id: &'s str) -> Self {
        Self {
            strategy_id,
            seen: HashSet::new(),
            tasks: Vec::new(),
        }
    }

    fn add(&mut self, a: &PartitionId, b: &PartitionId) {
        let task = MatchTask::new(a, b, self.strategy_id);
        if self
            .seen
            .insert((task.partition_a.clone(), task.partition_b.clone()))
        {
            self.tasks.push(task);
        }
    }

    fn extend(&mut self, tasks: Vec<MatchTask>) {
        for t in tasks {
            self.add(&t.partition_a, &t.partition_b);
        }
    }
}
