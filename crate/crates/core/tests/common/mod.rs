//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::Arc;
use std::time::Duration;

use parmatch::data_service::DataStore;
use parmatch::engine::EngineConfig;
use parmatch::harness::synthetic::{generate, SyntheticSpec};
use parmatch::model::{Correspondence, CorrespondenceSet, Entity, PartitionKind};
use parmatch::partitioning::PartitionPlan;
use parmatch::strategy::{Combiner, MatchStrategy};

pub fn synthetic(n: usize, miss_rate: f64, seed: u64) -> Vec<Entity> {
    generate(&SyntheticSpec {
        n,
        blocks: (n / 40).clamp(3, 30),
        miss_rate,
        seed,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

pub fn store_of(entities: &[Entity]) -> Arc<DataStore> {
    let store = DataStore::new();
    for e in entities {
        store.insert_entity(e.clone()).unwrap();
    }
    Arc::new(store)
}

/// Engine settings for tests that inject failures: fast heartbeats.
pub fn fast_failover() -> EngineConfig {
    EngineConfig {
        heartbeat_interval: Duration::from_millis(20),
        heartbeat_timeout: Duration::from_millis(300),
        membership_timeout: Duration::from_secs(20),
        ..EngineConfig::default()
    }
}

/// Combined score of one pair without any pruning.
pub fn oracle_score(strategy: &MatchStrategy, a: &Entity, b: &Entity) -> Option<f64> {
    let sims: Vec<f64> = strategy
        .matchers
        .iter()
        .map(|m| match (m.prepare(a), m.prepare(b)) {
            (Some(x), Some(y)) => m.kind.compare(&x, &y),
            _ => 0.0,
        })
        .collect();
    oracle_combine(&strategy.combiner, &sims)
}

pub fn oracle_combine(combiner: &Combiner, sims: &[f64]) -> Option<f64> {
    match combiner {
        Combiner::WeightedAverage {
            weights, threshold, ..
        } => {
            let s = weights.iter().zip(sims).fold(0.0, |acc, (w, s)| acc + w * s);
            (s >= *threshold).then(|| s.clamp(0.0, 1.0))
        }
        Combiner::LogisticRegression {
            intercept,
            coefficients,
            decision_threshold,
        } => {
            let z = coefficients
                .iter()
                .zip(sims)
                .fold(*intercept, |acc, (b, s)| acc + b * s);
            let p = 1.0 / (1.0 + (-z).exp());
            (p >= *decision_threshold).then_some(p)
        }
    }
}

/// Sequential evaluation of every unordered pair accepted by `include`.
pub fn oracle<F>(strategy: &MatchStrategy, entities: &[Entity], include: F) -> CorrespondenceSet
where
    F: Fn(&Entity, &Entity) -> bool,
{
    let prepared: Vec<Vec<_>> = entities
        .iter()
        .map(|e| strategy.matchers.iter().map(|m| m.prepare(e)).collect())
        .collect();
    let mut out = CorrespondenceSet::new();
    let mut sims = vec![0.0; strategy.matchers.len()];
    for i in 0..entities.len() {
        for j in (i + 1)..entities.len() {
            if !include(&entities[i], &entities[j]) {
                continue;
            }
            for (k, m) in strategy.matchers.iter().enumerate() {
                sims[k] = match (&prepared[i][k], &prepared[j][k]) {
                    (Some(x), Some(y)) => m.kind.compare(x, y),
                    _ => 0.0,
                };
            }
            if let Some(s) = oracle_combine(&strategy.combiner, &sims) {
                out.insert(Correspondence::new(entities[i].key(), entities[j].key(), s).unwrap())
                    .unwrap();
            }
        }
    }
    out
}

pub fn all_pairs_oracle(strategy: &MatchStrategy, entities: &[Entity]) -> CorrespondenceSet {
    oracle(strategy, entities, |_, _| true)
}

/// Which pairs a blocking plan is expected to compare: same key, either
/// side without key, or both keys packed into the same aggregate. The
/// aggregates are read from the plan but checked to be valid packings.
pub fn blocking_oracle(
    strategy: &MatchStrategy,
    entities: &[Entity],
    attribute: &str,
    plan: &PartitionPlan,
) -> CorrespondenceSet {
    let key_of = |e: &'_ Entity| -> Option<String> {
        e.attribute(attribute)
            .map(str::trim)
            .filter(|k| !k.is_empty())
            .map(str::to_owned)
    };
    let mut block_sizes: HashMap<String, usize> = HashMap::new();
    for e in entities {
        if let Some(k) = key_of(e) {
            *block_sizes.entry(k).or_default() += 1;
        }
    }
    let mut group: HashMap<String, usize> = HashMap::new();
    for (g, p) in plan.partitions.iter().enumerate() {
        if let PartitionKind::Aggregate { members } = p.kind() {
            let total: usize = members.iter().map(|k| block_sizes[k]).sum();
            assert!(total <= plan.max_partition_size, "aggregate over m");
            for k in members {
                assert!(block_sizes[k] < plan.min_partition_size.max(1));
                assert!(group.insert(k.clone(), g).is_none(), "{k} packed twice");
            }
        }
    }
    let same_group = |a: &str, b: &str| a == b || matches!((group.get(a), group.get(b)), (Some(x), Some(y)) if x == y);
    oracle(strategy, entities, |a, b| match (key_of(a), key_of(b)) {
        (Some(ka), Some(kb)) => same_group(&ka, &kb),
        _ => true,
    })
}

/// Straightforward LRU model: a queue ordered from least to most recent.
pub struct ReferenceLru {
    capacity: usize,
    order: VecDeque<String>,
}

#[derive(Debug, PartialEq, Eq)]
pub enum RefAccess {
    Hit,
    Miss(Option<String>),
}

impl ReferenceLru {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            order: VecDeque::new(),
        }
    }

    pub fn access(&mut self, id: &str) -> RefAccess {
        if let Some(pos) = self.order.iter().position(|x| x == id) {
            let x = self.order.remove(pos).unwrap();
            self.order.push_back(x);
            return RefAccess::Hit;
        }
        if self.capacity == 0 {
            return RefAccess::Miss(None);
        }
        let victim = if self.order.len() == self.capacity {
            self.order.pop_front()
        } else {
            None
        };
        self.order.push_back(id.to_owned());
        RefAccess::Miss(victim)
    }
}

/// Correspondences keyed by plain ids, for readable assertion diffs.
pub fn by_ids(set: &CorrespondenceSet) -> BTreeMap<(String, String), f64> {
    set.iter()
        .map(|(a, b, s)| ((a.id.clone(), b.id.clone()), s))
        .collect()
}
