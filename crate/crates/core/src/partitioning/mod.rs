//! Turning an entity set into partitions and independent match tasks.
//!
//! Size-based partitioning cuts the input into equal slices and matches
//! every slice pair, which evaluates the full Cartesian product.
//! Blocking-based partitioning groups entities by a key, splits and packs the
//! blocks to respect the memory-bounded size, and matches only within blocks
//! (plus everything against the misc block).

mod blocking;
mod sizing;
mod tasks;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

pub use blocking::{
    block_by_key, tune_partitions, tune_partitions_with, Block, BlockKey, PartitionNamer,
};
pub use sizing::{max_partition_size, SizingInput};
pub use tasks::{
    generate_blocking_tasks, generate_size_based_tasks, generate_two_source_tasks,
    SourcePartitions,
};

use crate::error::{Error, Result};
use crate::model::{Entity, EntityKey, MatchTask, Partition, PartitionId, PartitionKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitioningMode {
    SizeBased,
    BlockingBased,
}

/// Partitions plus the tasks over them.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionPlan {
    pub mode: PartitioningMode,
    pub max_partition_size: usize,
    pub min_partition_size: usize,
    pub partitions: Vec<Partition>,
    pub tasks: Vec<MatchTask>,
}

impl PartitionPlan {
    pub fn empty(mode: PartitioningMode, max_partition_size: usize) -> Self {
        Self {
            mode,
            max_partition_size,
            min_partition_size: 0,
            partitions: Vec::new(),
            tasks: Vec::new(),
        }
    }

    pub fn partition(&self, id: &PartitionId) -> Option<&Partition> {
        self.partitions.iter().find(|p| p.id() == id)
    }

    /// Checks the structural invariants: unique partition ids, no entity in
    /// two partitions, sizes within the maximum, tasks referencing known
    /// partitions, and no duplicate task pairs.
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        let mut seen_entities: HashSet<&EntityKey> = HashSet::new();
        for p in &self.partitions {
            if !ids.insert(p.id()) {
                return Err(Error::config("plan", format!("duplicate partition id {}", p.id())));
            }
            if p.size() > self.max_partition_size {
                return Err(Error::config(
                    "plan",
                    format!(
                        "partition {} holds {} entities, above the maximum {}",
                        p.id(),
                        p.size(),
                        self.max_partition_size
                    ),
                ));
            }
            for e in p.members() {
                if !seen_entities.insert(e) {
                    return Err(Error::config("plan", format!("entity {e} appears twice")));
                }
            }
        }
        let mut pairs = HashSet::new();
        for t in &self.tasks {
            for pid in [&t.partition_a, &t.partition_b] {
                if !ids.contains(pid) {
                    return Err(Error::config(
                        "plan",
                        format!("task {} references unknown partition {pid}", t.id),
                    ));
                }
            }
            if !pairs.insert((&t.partition_a, &t.partition_b)) {
                return Err(Error::config("plan", format!("duplicate task {}", t.id)));
            }
        }
        Ok(())
    }

    /// Entity pairs the tasks will compare: `s(s−1)/2` per self task and
    /// `|A|·|B|` per cross task.
    pub fn predicted_pairs(&self) -> u64 {
        let sizes: HashMap<&PartitionId, u64> = self
            .partitions
            .iter()
            .map(|p| (p.id(), p.size() as u64))
            .collect();
        self.tasks
            .iter()
            .map(|t| {
                let a = sizes.get(&t.partition_a).copied().unwrap_or(0);
                if t.is_self_task() {
                    a * a.saturating_sub(1) / 2
                } else {
                    a * sizes.get(&t.partition_b).copied().unwrap_or(0)
                }
            })
            .sum()
    }
}

/// Cuts `keys` into `⌈n/m⌉` partitions in input order whose sizes differ by
/// at most one.
pub fn partition_by_size(
    keys: &[EntityKey],
    m: usize,
    namer: &PartitionNamer,
) -> Result<Vec<Partition>> {
    if m == 0 {
        return Err(Error::config("max_partition_size", "must be at least 1"));
    }
    if keys.is_empty() {
        return Ok(Vec::new());
    }
    let p = keys.len().div_ceil(m);
    blocking::split_balanced(keys, p)
        .into_iter()
        .enumerate()
        .map(|(i, chunk)| Partition::new(namer.sized(i), chunk.to_vec(), None, PartitionKind::Plain))
        .collect()
}

/// Size-based partitioning of a single source.
pub fn size_based_partition<'a, I>(entities: I, m: usize, strategy_id: &str) -> Result<PartitionPlan>
where
    I: IntoIterator<Item = &'a Entity>,
{
    let keys: Vec<EntityKey> = entities.into_iter().map(|e| e.key().clone()).collect();
    let partitions = partition_by_size(&keys, m, &PartitionNamer::default())?;
    let tasks = generate_size_based_tasks(&partitions, strategy_id);
    Ok(PartitionPlan {
        mode: PartitioningMode::SizeBased,
        max_partition_size: m,
        min_partition_size: 0,
        partitions,
        tasks,
    })
}

/// Planning parameters shared by the single- and two-source planners.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanOptions {
    pub mode: PartitioningMode,
    pub max_partition_size: usize,
    pub min_partition_size: usize,
    pub blocking_attribute: Option<String>,
    pub strategy_id: String,
}

impl PlanOptions {
    pub fn size_based(m: usize, strategy_id: impl Into<String>) -> Self {
        Self {
            mode: PartitioningMode::SizeBased,
            max_partition_size: m,
            min_partition_size: 0,
            blocking_attribute: None,
            strategy_id: strategy_id.into(),
        }
    }

    pub fn blocking(
        attribute: impl Into<String>,
        m: usize,
        min_size: usize,
        strategy_id: impl Into<String>,
    ) -> Self {
        Self {
            mode: PartitioningMode::BlockingBased,
            max_partition_size: m,
            min_partition_size: min_size,
            blocking_attribute: Some(attribute.into()),
            strategy_id: strategy_id.into(),
        }
    }

    fn attribute(&self) -> Result<&str> {
        self.blocking_attribute.as_deref().ok_or_else(|| {
            Error::config(
                "partitioning.blocking_attribute",
                "blocking mode requires a blocking attribute",
            )
        })
    }

    fn partition<'a, I>(&self, entities: I, namer: &PartitionNamer) -> Result<Vec<Partition>>
    where
        I: IntoIterator<Item = &'a Entity>,
    {
        match self.mode {
            PartitioningMode::SizeBased => {
                let keys: Vec<EntityKey> = entities.into_iter().map(|e| e.key().clone()).collect();
                partition_by_size(&keys, self.max_partition_size, namer)
            }
            PartitioningMode::BlockingBased => {
                let blocks = block_by_key(entities, self.attribute()?);
                tune_partitions_with(
                    &blocks,
                    self.max_partition_size,
                    self.min_partition_size,
                    namer,
                )
            }
        }
    }

    fn plan(&self, partitions: Vec<Partition>, tasks: Vec<MatchTask>) -> PartitionPlan {
        PartitionPlan {
            mode: self.mode,
            max_partition_size: self.max_partition_size,
            min_partition_size: self.min_partition_size,
            partitions,
            tasks,
        }
    }
}

/// Minimum partition size as a rounded fraction of the maximum.
pub fn min_size_from_fraction(m: usize, fraction: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::config(
            "partitioning.min_size_fraction",
            format!("{fraction} is outside [0, 1]"),
        ));
    }
    Ok((fraction * m as f64).round() as usize)
}

/// Partitions one source and generates its tasks.
pub fn plan_single_source<'a, I>(entities: I, opts: &PlanOptions) -> Result<PartitionPlan>
where
    I: IntoIterator<Item = &'a Entity>,
{
    let partitions = opts.partition(entities, &PartitionNamer::default())?;
    let tasks = match opts.mode {
        PartitioningMode::SizeBased => generate_size_based_tasks(&partitions, &opts.strategy_id),
        PartitioningMode::BlockingBased => generate_blocking_tasks(&partitions, &opts.strategy_id),
    };
    Ok(opts.plan(partitions, tasks))
}

/// Plans a two-source run. Unless both sources are known duplicate-free,
/// they are unioned and planned as one source; otherwise each is
/// partitioned on its own (ids prefixed `a/` and `b/`) and only
/// cross-source tasks are generated.
pub fn plan_two_sources<'a, I, J>(
    a: I,
    b: J,
    opts: &PlanOptions,
    duplicate_free: bool,
) -> Result<PartitionPlan>
where
    I: IntoIterator<Item = &'a Entity>,
    J: IntoIterator<Item = &'a Entity>,
{
    if !duplicate_free {
        return plan_single_source(a.into_iter().chain(b), opts);
    }
    let pa = opts.partition(a, &PartitionNamer::new("a/"))?;
    let pb = opts.partition(b, &PartitionNamer::new("b/"))?;
    let tasks = generate_two_source_tasks(
        SourcePartitions {
            mode: opts.mode,
            partitions: &pa,
        },
        SourcePartitions {
            mode: opts.mode,
            partitions: &pb,
        },
        true,
        &opts.strategy_id,
    )?;
    Ok(opts.plan(pa.into_iter().chain(pb).collect(), tasks))
}
