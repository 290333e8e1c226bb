//! Central store for entities, partition payloads and match results.
//!
//! Every served partition fetch is counted so cache effectiveness can be
//! measured against the number of partition accesses tasks performed.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};

use crate::error::{Error, Result};
use crate::model::{
    merge_results, CorrespondenceSet, Entity, EntityKey, MatchResult, Partition, PartitionId,
    TaskId,
};
use crate::partitioning::PartitionPlan;

/// Materialized entity list of one partition, shared read-only.
pub type PartitionPayload = Arc<[Arc<Entity>]>;

/// How to read a delimited input file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoadOptions {
    /// Source label given to every loaded entity.
    pub source: String,
    pub id_column: String,
    pub delimiter: u8,
    /// Attribute columns to keep; all non-id columns when `None`.
    pub columns: Option<Vec<String>>,
}

impl LoadOptions {
    pub fn new(source: impl Into<String>, id_column: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            id_column: id_column.into(),
            delimiter: b',',
            columns: None,
        }
    }

    pub fn with_delimiter(mut self, delimiter: u8) -> Self {
        self.delimiter = delimiter;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StoreOutcome {
    Stored,
    /// A byte-identical repeat of an already stored result.
    Duplicate,
}

struct StoredPartition {
    payload: PartitionPayload,
    fetches: AtomicU64,
}

#[derive(Default)]
struct Entities {
    by_key: HashMap<EntityKey, Arc<Entity>>,
    order: Vec<Arc<Entity>>,
}

#[derive(Default)]
pub struct DataStore {
    entities: RwLock<Entities>,
    partitions: RwLock<HashMap<PartitionId, StoredPartition>>,
    results: Mutex<HashMap<TaskId, Option<MatchResult>>>,
}

impl DataStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// A store holding the same entities (shared, not copied) and nothing
    /// else: no partitions, results or fetch counts.
    pub fn with_same_entities(&self) -> DataStore {
        let entities = self.entities.read();
        DataStore {
            entities: RwLock::new(Entities {
                by_key: entities.by_key.clone(),
                order: entities.order.clone(),
            }),
            ..DataStore::default()
        }
    }

    pub fn insert_entity(&self, entity: Entity) -> Result<()> {
        let mut entities = self.entities.write();
        if entities.by_key.contains_key(entity.key()) {
            return Err(Error::Load {
                line: 0,
                message: format!("duplicate id {}", entity.key()),
            });
        }
        let entity = Arc::new(entity);
        entities.by_key.insert(entity.key().clone(), entity.clone());
        entities.order.push(entity);
        Ok(())
    }

    /// Reads delimited records with a header row and registers them as
    /// entities. Empty cells leave the attribute absent. Errors carry the
    /// 1-based line number of the offending record.
    pub fn load_entities<R: Read>(&self, reader: R, opts: &LoadOptions) -> Result<usize> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(opts.delimiter)
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr.headers().map_err(load_error)?.clone();
        let id_idx = headers
            .iter()
            .position(|h| h == opts.id_column)
            .ok_or_else(|| Error::Load {
                line: 1,
                message: format!("missing id column `{}`", opts.id_column),
            })?;
        let keep: Vec<(usize, String)> = match &opts.columns {
            Some(cols) => cols
                .iter()
                .map(|c| {
                    headers
                        .iter()
                        .position(|h| h == c)
                        .map(|i| (i, c.clone()))
                        .ok_or_else(|| Error::Load {
                            line: 1,
                            message: format!("missing column `{c}`"),
                        })
                })
                .collect::<Result<_>>()?,
            None => headers
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != id_idx)
                .map(|(i, h)| (i, h.to_owned()))
                .collect(),
        };

        let mut loaded = Vec::new();
        let mut seen: HashMap<String, u64> = HashMap::new();
        for record in rdr.records() {
            let record = record.map_err(load_error)?;
            let line = record.position().map_or(0, |p| p.line());
            let id = record.get(id_idx).unwrap_or_default().trim();
            if id.is_empty() {
                return Err(Error::Load {
                    line,
                    message: "empty id".into(),
                });
            }
            if let Some(first) = seen.insert(id.to_owned(), line) {
                return Err(Error::Load {
                    line,
                    message: format!("duplicate id `{id}` (first seen on line {first})"),
                });
            }
            let mut entity = Entity::new(opts.source.as_str(), id)?;
            for (i, name) in &keep {
                match record.get(*i) {
                    Some(v) if !v.is_empty() => entity.set_attribute(name.as_str(), v),
                    _ => {}
                }
            }
            loaded.push((line, entity));
        }

        let mut entities = self.entities.write();
        if let Some((line, e)) = loaded.iter().find(|(_, e)| entities.by_key.contains_key(e.key())) {
            return Err(Error::Load {
                line: *line,
                message: format!("id {} is already loaded", e.key()),
            });
        }
        let count = loaded.len();
        for (_, e) in loaded {
            let e = Arc::new(e);
            entities.by_key.insert(e.key().clone(), e.clone());
            entities.order.push(e);
        }
        Ok(count)
    }

    pub fn load_file(&self, path: &Path, opts: &LoadOptions) -> Result<usize> {
        let file = File::open(path)
            .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        self.load_entities(file, opts)
    }

    pub fn entity_count(&self) -> usize {
        self.entities.read().order.len()
    }

    /// All entities in load order.
    pub fn entities(&self) -> Vec<Arc<Entity>> {
        self.entities.read().order.clone()
    }

    /// Entities of one source in load order.
    pub fn source_entities(&self, source: &str) -> Vec<Arc<Entity>> {
        self.entities
            .read()
            .order
            .iter()
            .filter(|e| e.source() == source)
            .cloned()
            .collect()
    }

    pub fn entity(&self, key: &EntityKey) -> Option<Arc<Entity>> {
        self.entities.read().by_key.get(key).cloned()
    }

    /// Materializes a partition's payload. Registering the same id twice is
    /// allowed only with identical members.
    pub fn register_partition(&self, partition: &Partition) -> Result<()> {
        let payload: PartitionPayload = {
            let entities = self.entities.read();
            partition
                .members()
                .iter()
                .map(|k| {
                    entities.by_key.get(k).cloned().ok_or_else(|| {
                        Error::config(
                            "plan",
                            format!("partition {} references unknown entity {k}", partition.id()),
                        )
                    })
                })
                .collect::<Result<Vec<_>>>()?
                .into()
        };
        let mut partitions = self.partitions.write();
        if let Some(existing) = partitions.get(partition.id()) {
            let same = existing.payload.len() == payload.len()
                && existing
                    .payload
                    .iter()
                    .zip(payload.iter())
                    .all(|(x, y)| x.key() == y.key());
            if !same {
                return Err(Error::config(
                    "plan",
                    format!("partition {} registered with different members", partition.id()),
                ));
            }
            return Ok(());
        }
        partitions.insert(
            partition.id().clone(),
            StoredPartition {
                payload,
                fetches: AtomicU64::new(0),
            },
        );
        Ok(())
    }

    pub fn register_tasks<'a, I>(&self, tasks: I)
    where
        I: IntoIterator<Item = &'a TaskId>,
    {
        let mut results = self.results.lock();
        for t in tasks {
            results.entry(t.clone()).or_insert(None);
        }
    }

    pub fn register_plan(&self, plan: &PartitionPlan) -> Result<()> {
        for p in &plan.partitions {
            self.register_partition(p)?;
        }
        self.register_tasks(plan.tasks.iter().map(|t| &t.id));
        Ok(())
    }

    /// Returns the payload and counts the fetch.
    pub fn fetch_partition(&self, id: &PartitionId) -> Result<PartitionPayload> {
        let partitions = self.partitions.read();
        let stored = partitions
            .get(id)
            .ok_or_else(|| Error::PartitionNotFound(id.clone()))?;
        stored.fetches.fetch_add(1, Ordering::Relaxed);
        Ok(stored.payload.clone())
    }

    pub fn fetch_count(&self, id: &PartitionId) -> u64 {
        self.partitions
            .read()
            .get(id)
            .map_or(0, |p| p.fetches.load(Ordering::Relaxed))
    }

    pub fn total_fetches(&self) -> u64 {
        self.partitions
            .read()
            .values()
            .map(|p| p.fetches.load(Ordering::Relaxed))
            .sum()
    }

    pub fn reset_fetch_counts(&self) {
        for p in self.partitions.read().values() {
            p.fetches.store(0, Ordering::Relaxed);
        }
    }

    /// Keeps the first result per task. Identical repeats are acknowledged
    /// as duplicates; differing repeats are an integrity error.
    pub fn store_result(&self, result: MatchResult) -> Result<StoreOutcome> {
        let mut results = self.results.lock();
        let slot = results
            .get_mut(&result.task_id)
            .ok_or_else(|| Error::UnknownTask(result.task_id.clone()))?;
        match slot {
            None => {
                *slot = Some(result);
                Ok(StoreOutcome::Stored)
            }
            Some(first) if first.same_outcome(&result) => Ok(StoreOutcome::Duplicate),
            Some(_) => Err(Error::ConflictingResult(result.task_id)),
        }
    }

    pub fn has_result(&self, task: &TaskId) -> bool {
        matches!(self.results.lock().get(task), Some(Some(_)))
    }

    pub fn result_count(&self) -> usize {
        self.results.lock().values().filter(|r| r.is_some()).count()
    }

    /// Stored results ordered by task id.
    pub fn results(&self) -> Vec<MatchResult> {
        let results = self.results.lock();
        let mut out: Vec<MatchResult> = results.values().flatten().cloned().collect();
        out.sort_by(|a, b| a.task_id.cmp(&b.task_id));
        out
    }

    pub fn correspondences(&self) -> Result<CorrespondenceSet> {
        merge_results(&self.results())
    }
}

fn load_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Load {
        line,
        message: e.to_string(),
    }
}

/// Writes `idA,idB,sim` rows sorted by `(idA, idB)` with six decimals.
/// With `qualify_ids` ids are written as `source:id`.
pub fn write_correspondences<W: Write>(
    set: &CorrespondenceSet,
    out: W,
    qualify_ids: bool,
) -> Result<()> {
    let name = |k: &EntityKey| {
        if qualify_ids {
            k.to_string()
        } else {
            k.id.clone()
        }
    };
    let mut rows: Vec<(String, String, f64)> =
        set.iter().map(|(a, b, s)| (name(a), name(b), s)).collect();
    rows.sort_by(|x, y| (&x.0, &x.1).cmp(&(&y.0, &y.1)));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["idA", "idB", "sim"]).map_err(csv_io)?;
    for (a, b, s) in rows {
        w.write_record([a, b, format!("{s:.6}")]).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::*;
    use crate::model::{Correspondence, MatchStats, PartitionKind};
    use crate::partitioning::{block_by_key, BlockKey};

    const CSV: &str = "id,title,type\n1,alpha,A\n2,beta,\n3,gamma,B\n";

    fn store() -> DataStore {
        let s = DataStore::new();
        assert_eq!(s.load_entities(CSV.as_bytes(), &LoadOptions::new("s", "id")).unwrap(), 3);
        s
    }

    fn partition(id: &str, members: &[&str]) -> Partition {
        Partition::new(
            PartitionId::from(id),
            members.iter().map(|m| EntityKey::new("s", *m)).collect(),
            None,
            PartitionKind::Plain,
        )
        .unwrap()
    }

    fn result(task: &str, sim: f64) -> MatchResult {
        MatchResult {
            task_id: TaskId::from(task),
            correspondences: vec![Correspondence::new(
                &EntityKey::new("s", "1"),
                &EntityKey::new("s", "2"),
                sim,
            )
            .unwrap()],
            stats: MatchStats {
                pairs_compared: 1,
                elapsed: Duration::from_millis(3),
            },
        }
    }

    #[test]
    fn loads_records_and_leaves_empty_cells_absent() {
        let s = store();
        let e = s.entity(&EntityKey::new("s", "2")).unwrap();
        assert_eq!(e.attribute("title"), Some("beta"));
        assert_eq!(e.attribute("type"), None);
        let blocks = block_by_key(s.entities().iter().map(|e| e.as_ref()), "type");
        let misc = blocks.iter().find(|b| b.key == BlockKey::Misc).unwrap();
        assert_eq!(misc.members, vec![EntityKey::new("s", "2")]);
    }

    #[test]
    fn duplicate_id_names_its_line() {
        let data = "id,title\n1,a\n2,b\n3,c\n4,d\n5,e\n3,f\n";
        let err = DataStore::new()
            .load_entities(data.as_bytes(), &LoadOptions::new("s", "id"))
            .unwrap_err();
        match err {
            Error::Load { line, .. } => assert_eq!(line, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_and_missing_id_column() {
        let err = DataStore::new()
            .load_entities("id,title\n1,a\n2,b,extra\n".as_bytes(), &LoadOptions::new("s", "id"))
            .unwrap_err();
        assert!(matches!(err, Error::Load { line: 3, .. }), "{err:?}");

        let err = DataStore::new()
            .load_entities("key,title\n1,a\n".as_bytes(), &LoadOptions::new("s", "id"))
            .unwrap_err();
        assert!(err.to_string().contains("missing id column"));
    }

    #[test]
    fn tab_delimited_and_quoted() {
        let s = DataStore::new();
        let n = s
            .load_entities(
                "id\ttitle\n1\t\"a\tb\"\n".as_bytes(),
                &LoadOptions::new("s", "id").with_delimiter(b'\t'),
            )
            .unwrap();
        assert_eq!(n, 1);
        assert_eq!(s.entity(&EntityKey::new("s", "1")).unwrap().attribute("title"), Some("a\tb"));
    }

    #[test]
    fn fetches_are_counted() {
        let s = store();
        s.register_partition(&partition("p1", &["1", "3"])).unwrap();
        let payload = s.fetch_partition(&PartitionId::from("p1")).unwrap();
        assert_eq!(payload.len(), 2);
        s.fetch_partition(&PartitionId::from("p1")).unwrap();
        assert_eq!(s.fetch_count(&PartitionId::from("p1")), 2);
        assert_eq!(s.total_fetches(), 2);
        assert!(matches!(
            s.fetch_partition(&PartitionId::from("nope")),
            Err(Error::PartitionNotFound(_))
        ));
    }

    #[test]
    fn partitions_are_immutable() {
        let s = store();
        s.register_partition(&partition("p1", &["1"])).unwrap();
        s.register_partition(&partition("p1", &["1"])).unwrap();
        assert!(s.register_partition(&partition("p1", &["2"])).is_err());
        assert!(s.register_partition(&partition("p2", &["9"])).is_err());
    }

    #[test]
    fn store_result_is_idempotent() {
        let s = store();
        s.register_tasks([&TaskId::from("t")]);
        assert_eq!(s.store_result(result("t", 0.9)).unwrap(), StoreOutcome::Stored);
        let mut again = result("t", 0.9);
        again.stats.elapsed = Duration::from_secs(1);
        assert_eq!(s.store_result(again).unwrap(), StoreOutcome::Duplicate);
        assert_eq!(s.results().len(), 1);
        assert!(matches!(
            s.store_result(result("t", 0.8)),
            Err(Error::ConflictingResult(_))
        ));
        assert!(matches!(
            s.store_result(result("other", 0.9)),
            Err(Error::UnknownTask(_))
        ));
    }

    #[test]
    fn correspondence_file_format() {
        let mut set = CorrespondenceSet::new();
        for (a, b, sim) in [("b", "c", 0.5), ("a", "b", 1.0 / 3.0)] {
            set.insert(Correspondence::new(&EntityKey::new("s", a), &EntityKey::new("s", b), sim).unwrap())
                .unwrap();
        }
        let mut out = Vec::new();
        write_correspondences(&set, &mut out, false).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "idA,idB,sim\na,b,0.333333\nb,c,0.500000\n"
        );
        let mut out = Vec::new();
        write_correspondences(&set, &mut out, true).unwrap();
        assert!(String::from_utf8(out).unwrap().contains("s:a,s:b,0.333333"));
    }
}
