//! Domain vocabulary shared by every stage of a run: entities, partitions,
//! match tasks, correspondences and the computing-environment descriptor.

use std::collections::btree_map::{self, BTreeMap};
use std::collections::BTreeSet;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Globally unique entity identity: the source label plus the id within it.
///
/// Ordering is by source first, then id, both as raw byte strings. This is
/// the canonical orientation for correspondences.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityKey {
    pub source: String,
    pub id: String,
}

impl EntityKey {
    pub fn new(source: impl Into<String>, id: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            id: id.into(),
        }
    }
}

impl fmt::Display for EntityKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.source, self.id)
    }
}

/// A record with named string attributes.
///
/// An attribute that was never set is absent, which is different from an
/// attribute set to the empty string.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    key: EntityKey,
    attributes: BTreeMap<String, String>,
}

impl Entity {
    pub fn new(source: impl Into<String>, id: impl Into<String>) -> Result<Self> {
        let key = EntityKey::new(source, id);
        if key.id.is_empty() {
            return Err(Error::config("id", "entity id must not be empty"));
        }
        Ok(Self {
            key,
            attributes: BTreeMap::new(),
        })
    }

    pub fn with_attribute(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.set_attribute(name, value);
        self
    }

    pub fn set_attribute(&mut self, name: impl Into<String>, value: impl Into<String>) {
        self.attributes.insert(name.into(), value.into());
    }

    pub fn key(&self) -> &EntityKey {
        &self.key
    }

    pub fn id(&self) -> &str {
        &self.key.id
    }

    pub fn source(&self) -> &str {
        &self.key.source
    }

    /// `None` when the attribute is absent; `Some("")` when present but empty.
    pub fn attribute(&self, name: &str) -> Option<&str> {
        self.attributes.get(name).map(String::as_str)
    }

    pub fn attributes(&self) -> impl Iterator<Item = (&str, &str)> {
        self.attributes
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Orders two entity keys canonically, rejecting a self-pair.
pub fn canonical_pair<'a>(
    e1: &'a EntityKey,
    e2: &'a EntityKey,
) -> Result<(&'a EntityKey, &'a EntityKey)> {
    match e1.cmp(e2) {
        std::cmp::Ordering::Less => Ok((e1, e2)),
        std::cmp::Ordering::Greater => Ok((e2, e1)),
        std::cmp::Ordering::Equal => Err(Error::SelfPair(e1.clone())),
    }
}

/// An asserted match between two entities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    a: EntityKey,
    b: EntityKey,
    sim: f64,
}

impl Correspondence {
    pub fn new(e1: &EntityKey, e2: &EntityKey, sim: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&sim) {
            return Err(Error::config(
                "sim",
                format!("similarity {sim} outside [0, 1]"),
            ));
        }
        let (a, b) = canonical_pair(e1, e2)?;
        Ok(Self {
            a: a.clone(),
            b: b.clone(),
            sim,
        })
    }

    pub fn a(&self) -> &EntityKey {
        &self.a
    }

    pub fn b(&self) -> &EntityKey {
        &self.b
    }

    pub fn sim(&self) -> f64 {
        self.sim
    }
}

/// A set of correspondences keyed by canonical pair, iterated in
/// `(a, b)` order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorrespondenceSet {
    pairs: BTreeMap<(EntityKey, EntityKey), f64>,
}

impl CorrespondenceSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a correspondence. Re-adding an identical one is a no-op; adding
    /// the same pair with a different similarity is an integrity error.
    pub fn insert(&mut self, c: Correspondence) -> Result<()> {
        match self.pairs.entry((c.a, c.b)) {
            btree_map::Entry::Vacant(slot) => {
                slot.insert(c.sim);
                Ok(())
            }
            btree_map::Entry::Occupied(slot) => {
                let first = *slot.get();
                if first.to_bits() == c.sim.to_bits() {
                    Ok(())
                } else {
                    let (a, b) = slot.key().clone();
                    Err(Error::ConflictingSimilarity {
                        a,
                        b,
                        first,
                        second: c.sim,
                    })
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, a: &EntityKey, b: &EntityKey) -> Option<f64> {
        let (a, b) = canonical_pair(a, b).ok()?;
        self.pairs.get(&(a.clone(), b.clone())).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EntityKey, &EntityKey, f64)> {
        self.pairs.iter().map(|((a, b), sim)| (a, b, *sim))
    }

    /// Distinct source labels appearing in the set.
    pub fn sources(&self) -> BTreeSet<&str> {
        self.pairs
            .keys()
            .flat_map(|(a, b)| [a.source.as_str(), b.source.as_str()])
            .collect()
    }
}

/// Unions per-task results into the final correspondence set.
pub fn merge_results<'a, I>(results: I) -> Result<CorrespondenceSet>
where
    I: IntoIterator<Item = &'a MatchResult>,
{
    let mut set = CorrespondenceSet::new();
    for result in results {
        for c in &result.correspondences {
            set.insert(c.clone())?;
        }
    }
    Ok(set)
}

/// Hardware available to a run: `#nodes`, `#cores` per node and the memory
/// each node can devote to matching.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComputingEnvironment {
    pub num_nodes: usize,
    pub cores_per_node: usize,
    pub max_mem_per_node: u64,
    pub threads_per_node: usize,
}

impl ComputingEnvironment {
    /// Threads per node default to the core count.
    pub fn new(num_nodes: usize, cores_per_node: usize, max_mem_per_node: u64) -> Result<Self> {
        Self::with_threads(num_nodes, cores_per_node, max_mem_per_node, cores_per_node)
    }

    pub fn with_threads(
        num_nodes: usize,
        cores_per_node: usize,
        max_mem_per_node: u64,
        threads_per_node: usize,
    ) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::config("num_nodes", "must be at least 1"));
        }
        if cores_per_node == 0 {
            return Err(Error::config("cores_per_node", "must be at least 1"));
        }
        if threads_per_node == 0 {
            return Err(Error::config("threads_per_node", "must be at least 1"));
        }
        if max_mem_per_node == 0 {
            return Err(Error::config("max_mem_per_node", "must be positive"));
        }
        Ok(Self {
            num_nodes,
            cores_per_node,
            max_mem_per_node,
            threads_per_node,
        })
    }
}

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

string_id!(PartitionId);
string_id!(TaskId);

/// How a partition came to be.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionKind {
    /// A slice of the input from size-based partitioning.
    Plain,
    /// A block small enough to be matched on its own.
    BlockWhole,
    /// One of `count` sub-partitions of an oversized block.
    BlockSplit { index: usize, count: usize },
    /// Several small blocks packed together.
    Aggregate { members: Vec<String> },
    /// Entities without a blocking key; `count > 1` when the misc block was split.
    Misc { index: usize, count: usize },
}

impl PartitionKind {
    pub fn is_misc(&self) -> bool {
        matches!(self, PartitionKind::Misc { .. })
    }
}

/// An immutable, ordered group of entities: the unit of caching and task input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    id: PartitionId,
    members: Vec<EntityKey>,
    origin_block_key: Option<String>,
    kind: PartitionKind,
}

impl Partition {
    pub fn new(
        id: PartitionId,
        members: Vec<EntityKey>,
        origin_block_key: Option<String>,
        kind: PartitionKind,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::config(
                "partition",
                format!("partition {id} has no entities"),
            ));
        }
        match &kind {
            PartitionKind::BlockSplit { index, count } if *count < 2 || index >= count => {
                return Err(Error::config(
                    "partition",
                    format!("partition {id}: invalid split {index}/{count}"),
                ));
            }
            PartitionKind::Misc { index, count } if index >= count => {
                return Err(Error::config(
                    "partition",
                    format!("partition {id}: invalid misc split {index}/{count}"),
                ));
            }
            _ => {}
        }
        Ok(Self {
            id,
            members,
            origin_block_key,
            kind,
        })
    }

    pub fn id(&self) -> &PartitionId {
        &self.id
    }

    pub fn members(&self) -> &[EntityKey] {
        &self.members
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn origin_block_key(&self) -> Option<&str> {
        self.origin_block_key.as_deref()
    }

    pub fn kind(&self) -> &PartitionKind {
        &self.kind
    }

    /// Blocking keys whose entities live here; empty for plain and misc partitions.
    pub fn block_keys(&self) -> Vec<&str> {
        match &self.kind {
            PartitionKind::Aggregate { members } => members.iter().map(String::as_str).collect(),
            PartitionKind::BlockWhole | PartitionKind::BlockSplit { .. } => {
                self.origin_block_key.as_deref().into_iter().collect()
            }
            PartitionKind::Plain | PartitionKind::Misc { .. } => Vec::new(),
        }
    }
}

/// Matches the entities of two partitions (or of one partition with itself).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatchTask {
    pub id: TaskId,
    pub partition_a: PartitionId,
    pub partition_b: PartitionId,
    pub strategy_id: String,
}

impl MatchTask {
    /// Stores the partition pair in canonical order and derives the task id
    /// from it.
    pub fn new(p1: &PartitionId, p2: &PartitionId, strategy_id: impl Into<String>) -> Self {
        let (a, b) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
        Self {
            id: TaskId(format!("{a}|{b}")),
            partition_a: a.clone(),
            partition_b: b.clone(),
            strategy_id: strategy_id.into(),
        }
    }

    pub fn is_self_task(&self) -> bool {
        self.partition_a == self.partition_b
    }

    /// Partitions the task reads: one for a self task, two otherwise.
    pub fn accessed_partitions(&self) -> Vec<&PartitionId> {
        if self.is_self_task() {
            vec![&self.partition_a]
        } else {
            vec![&self.partition_a, &self.partition_b]
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchStats {
    pub pairs_compared: u64,
    pub elapsed: Duration,
}

/// Output of one match task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub task_id: TaskId,
    pub correspondences: Vec<Correspondence>,
    pub stats: MatchStats,
}

impl MatchResult {
    /// True when both results carry the same correspondences and pair count.
    /// Timings are ignored.
    pub fn same_outcome(&self, other: &MatchResult) -> bool {
        self.task_id == other.task_id
            && self.stats.pairs_compared == other.stats.pairs_compared
            && self.correspondences.len() == other.correspondences.len()
            && self
                .correspondences
                .iter()
                .zip(&other.correspondences)
                .all(|(x, y)| x.a == y.a && x.b == y.b && x.sim.to_bits() == y.sim.to_bits())
    }
}
