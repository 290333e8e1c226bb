//! Per-worker LRU cache of partition payloads.

use std::num::NonZeroUsize;

use lru::LruCache;

use crate::model::PartitionId;

/// Outcome of one cache access.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Access {
    Hit,
    /// The payload had to be fetched; `evicted` is the victim displaced to
    /// make room, if any.
    Miss { evicted: Option<PartitionId> },
}

/// Holds at most `capacity` partitions and evicts the least recently used
/// one. A capacity of zero disables caching: every access is a miss and
/// nothing is retained.
pub struct PartitionCache<V> {
    inner: Option<LruCache<PartitionId, V>>,
}

impl<V: Clone> PartitionCache<V> {
    pub fn new(capacity: usize) -> Self {
        Self {
            inner: NonZeroUsize::new(capacity).map(LruCache::new),
        }
    }

    pub fn capacity(&self) -> usize {
        self.inner.as_ref().map_or(0, |c| c.cap().get())
    }

    pub fn len(&self) -> usize {
        self.inner.as_ref().map_or(0, LruCache::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, id: &PartitionId) -> bool {
        self.inner.as_ref().is_some_and(|c| c.contains(id))
    }

    /// Looks up `id`, marking it most recently used on a hit.
    pub fn get(&mut self, id: &PartitionId) -> Option<V> {
        self.inner.as_mut()?.get(id).cloned()
    }

    /// Inserts a fetched payload and returns the evicted victim. If another
    /// thread inserted the same id meanwhile, the entry is only refreshed.
    pub fn insert(&mut self, id: PartitionId, value: V) -> Option<PartitionId> {
        let cache = self.inner.as_mut()?;
        if cache.contains(&id) {
            cache.put(id, value);
            return None;
        }
        cache.push(id, value).map(|(victim, _)| victim)
    }

    /// Hit-or-fetch in one step.
    pub fn access<E>(
        &mut self,
        id: &PartitionId,
        fetch: impl FnOnce() -> Result<V, E>,
    ) -> Result<(V, Access), E> {
        if let Some(v) = self.get(id) {
            return Ok((v, Access::Hit));
        }
        let v = fetch()?;
        let evicted = self.insert(id.clone(), v.clone());
        Ok((v, Access::Miss { evicted }))
    }

    /// Resident ids, most recently used first.
    pub fn resident_ids(&self) -> Vec<PartitionId> {
        self.inner
            .as_ref()
            .map(|c| c.iter().map(|(k, _)| k.clone()).collect())
            .unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use std::convert::Infallible;

    use super::*;

    fn pid(s: &str) -> PartitionId {
        PartitionId::from(s)
    }

    fn run(cache: &mut PartitionCache<u32>, ids: &[&str]) -> Vec<Access> {
        ids.iter()
            .map(|id| cache.access(&pid(id), || Ok::<_, Infallible>(0)).unwrap().1)
            .collect()
    }

    #[test]
    fn disabled_cache_always_misses() {
        let mut c = PartitionCache::new(0);
        let trace = run(&mut c, &["a", "a", "a"]);
        assert!(trace.iter().all(|a| *a == Access::Miss { evicted: None }));
        assert!(c.is_empty());
        assert!(c.resident_ids().is_empty());
    }

    #[test]
    fn single_slot_trace() {
        // task (P1,P2) then (P2,P3)
        let mut c = PartitionCache::new(1);
        let trace = run(&mut c, &["P1", "P2", "P2", "P3"]);
        assert_eq!(
            trace,
            vec![
                Access::Miss { evicted: None },
                Access::Miss { evicted: Some(pid("P1")) },
                Access::Hit,
                Access::Miss { evicted: Some(pid("P2")) },
            ]
        );
    }

    #[test]
    fn evicts_least_recently_used() {
        let mut c = PartitionCache::new(2);
        let trace = run(&mut c, &["a", "b", "a", "c"]);
        assert_eq!(trace[3], Access::Miss { evicted: Some(pid("b")) });
        assert_eq!(c.resident_ids(), vec![pid("c"), pid("a")]);
        assert!(c.len() <= c.capacity());
    }

    #[test]
    fn reinserting_resident_id_evicts_nothing() {
        let mut c = PartitionCache::new(1);
        assert_eq!(c.insert(pid("a"), 1), None);
        assert_eq!(c.insert(pid("a"), 2), None);
        assert_eq!(c.get(&pid("a")), Some(2));
    }
}
