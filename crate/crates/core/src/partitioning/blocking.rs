//! Key-based blocking and partition tuning.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::model::{Entity, EntityKey, Partition, PartitionId, PartitionKind};

/// Blocking key of a block; `Misc` collects entities without a usable key.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BlockKey {
    Key(String),
    Misc,
}

impl fmt::Display for BlockKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockKey::Key(k) => f.write_str(k),
            BlockKey::Misc => f.write_str("<misc>"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub key: BlockKey,
    pub members: Vec<EntityKey>,
}

impl Block {
    pub fn new(key: BlockKey, members: Vec<EntityKey>) -> Self {
        Self { key, members }
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// Groups entities by the trimmed value of `attribute`. Entities whose value
/// is absent or blank land in the misc block, which is always returned last
/// (possibly empty). Keyed blocks come in key order; members keep input order.
pub fn block_by_key<'a, I>(entities: I, attribute: &str) -> Vec<Block>
where
    I: IntoIterator<Item = &'a Entity>,
{
    let mut keyed: BTreeMap<String, Vec<EntityKey>> = BTreeMap::new();
    let mut misc = Vec::new();
    for e in entities {
        match e.attribute(attribute).map(str::trim) {
            Some(k) if !k.is_empty() => keyed.entry(k.to_owned()).or_default().push(e.key().clone()),
            _ => misc.push(e.key().clone()),
        }
    }
    keyed
        .into_iter()
        .map(|(k, members)| Block::new(BlockKey::Key(k), members))
        .chain(std::iter::once(Block::new(BlockKey::Misc, misc)))
        .collect()
}

/// Deterministic partition ids, optionally namespaced per source.
#[derive(Clone, Debug, Default)]
pub struct PartitionNamer {
    prefix: String,
}

impl PartitionNamer {
    pub fn new(prefix: impl Into<String>) -> Self {
        Self {
            prefix: prefix.into(),
        }
    }

    pub fn sized(&self, ordinal: usize) -> PartitionId {
        PartitionId::new(format!("{}size-{ordinal:06}", self.prefix))
    }

    pub fn block(&self, key: &str) -> PartitionId {
        PartitionId::new(format!("{}block:{key}", self.prefix))
    }

    pub fn block_split(&self, key: &str, index: usize) -> PartitionId {
        PartitionId::new(format!("{}block:{key}#{index}", self.prefix))
    }

    pub fn aggregate(&self, ordinal: usize) -> PartitionId {
        PartitionId::new(format!("{}agg-{ordinal:04}", self.prefix))
    }

    pub fn misc(&self, index: usize, count: usize) -> PartitionId {
        if count == 1 {
            PartitionId::new(format!("{}misc", self.prefix))
        } else {
            PartitionId::new(format!("{}misc#{index}", self.prefix))
        }
    }
}

/// Splits `members` into `k` contiguous chunks whose sizes differ by at most one.
pub(crate) fn split_balanced<T>(members: &[T], k: usize) -> Vec<&[T]> {
    let (base, extra) = (members.len() / k, members.len() % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        out.push(&members[start..start + len]);
        start += len;
    }
    out
}

/// Splits oversized blocks and packs undersized ones.
///
/// * blocks larger than `m` become `⌈size/m⌉` near-equal split partitions;
/// * keyed blocks smaller than `min_size` are packed first-fit-decreasing
///   (size desc, key asc) into aggregates of capacity `m`; a block left alone
///   in its bin stays a whole block;
/// * everything else becomes a whole-block partition;
/// * the misc block becomes one or more misc partitions.
///
/// Output order: keyed blocks in key order, then aggregates, then misc.
pub fn tune_partitions(blocks: &[Block], m: usize, min_size: usize) -> Result<Vec<Partition>> {
    tune_partitions_with(blocks, m, min_size, &PartitionNamer::default())
}

pub fn tune_partitions_with(
    blocks: &[Block],
    m: usize,
    min_size: usize,
    namer: &PartitionNamer,
) -> Result<Vec<Partition>> {
    if m == 0 {
        return Err(Error::config("max_partition_size", "must be at least 1"));
    }
    if min_size > m {
        return Err(Error::config(
            "min_partition_size",
            format!("{min_size} exceeds the maximum partition size {m}"),
        ));
    }

    let mut out = Vec::new();
    let mut small: Vec<(&str, &Block)> = Vec::new();
    let mut misc_members: Vec<EntityKey> = Vec::new();

    for block in blocks {
        let key = match &block.key {
            BlockKey::Misc => {
                misc_members.extend(block.members.iter().cloned());
                continue;
            }
            BlockKey::Key(k) => k.as_str(),
        };
        let size = block.size();
        if size == 0 {
            continue;
        }
        if size > m {
            let k = size.div_ceil(m);
            for (i, chunk) in split_balanced(&block.members, k).into_iter().enumerate() {
                out.push(Partition::new(
                    namer.block_split(key, i),
                    chunk.to_vec(),
                    Some(key.to_owned()),
                    PartitionKind::BlockSplit { index: i, count: k },
                )?);
            }
        } else if size < min_size {
            small.push((key, block));
        } else {
            out.push(whole(namer, key, block)?);
        }
    }

    small.sort_by(|(ka, a), (kb, b)| b.size().cmp(&a.size()).then_with(|| ka.cmp(kb)));
    let mut bins: Vec<(usize, Vec<(&str, &Block)>)> = Vec::new();
    for (key, block) in small {
        match bins.iter_mut().find(|(load, _)| load + block.size() <= m) {
            Some((load, members)) => {
                *load += block.size();
                members.push((key, block));
            }
            None => bins.push((block.size(), vec![(key, block)])),
        }
    }
    let mut aggregates = 0;
    for (_, members) in bins {
        if let [(key, block)] = members.as_slice() {
            out.push(whole(namer, key, block)?);
            continue;
        }
        let keys = members.iter().map(|(k, _)| (*k).to_owned()).collect();
        let entities = members
            .iter()
            .flat_map(|(_, b)| b.members.iter().cloned())
            .collect();
        out.push(Partition::new(
            namer.aggregate(aggregates),
            entities,
            None,
            PartitionKind::Aggregate { members: keys },
        )?);
        aggregates += 1;
    }

    if !misc_members.is_empty() {
        let k = misc_members.len().div_ceil(m);
        for (i, chunk) in split_balanced(&misc_members, k).into_iter().enumerate() {
            out.push(Partition::new(
                namer.misc(i, k),
                chunk.to_vec(),
                None,
                PartitionKind::Misc { index: i, count: k },
            )?);
        }
    }
    Ok(out)
}

fn whole(namer: &PartitionNamer, key: &str, block: &Block) -> Result<Partition> {
    Partition::new(
        namer.block(key),
        block.members.clone(),
        Some(key.to_owned()),
        PartitionKind::BlockWhole,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keys(prefix: &str, n: usize) -> Vec<EntityKey> {
        (0..n).map(|i| EntityKey::new("s", format!("{prefix}{i:05}"))).collect()
    }

    fn block(key: &str, n: usize) -> Block {
        Block::new(BlockKey::Key(key.into()), keys(key, n))
    }

    fn figure3_blocks() -> Vec<Block> {
        vec![
            block("2.5", 650),
            block("3.5", 1300),
            block("DVD-RW", 450),
            block("Blu-ray", 200),
            block("CD-RW", 200),
            block("HD-DVD", 200),
            Block::new(BlockKey::Misc, keys("misc", 600)),
        ]
    }

    #[test]
    fn blocks_by_type_with_misc() {
        let es = [
            Entity::new("s", "1").unwrap().with_attribute("type", "A"),
            Entity::new("s", "2").unwrap().with_attribute("type", " A "),
            Entity::new("s", "3").unwrap().with_attribute("type", "B"),
        ];
        let blocks = block_by_key(&es, "type");
        let sizes: Vec<_> = blocks.iter().map(|b| (b.key.clone(), b.size())).collect();
        assert_eq!(
            sizes,
            vec![
                (BlockKey::Key("A".into()), 2),
                (BlockKey::Key("B".into()), 1),
                (BlockKey::Misc, 0)
            ]
        );
    }

    #[test]
    fn missing_and_blank_values_go_to_misc() {
        let es: Vec<Entity> = (0..3600)
            .map(|i| {
                let e = Entity::new("s", i.to_string()).unwrap();
                match i % 6 {
                    0 => e,
                    1 if i % 12 == 1 => e.with_attribute("type", "   "),
                    _ => e.with_attribute("type", format!("t{}", i % 6)),
                }
            })
            .collect();
        let blocks = block_by_key(&es, "type");
        let misc = blocks.last().unwrap();
        assert_eq!(misc.key, BlockKey::Misc);
        assert_eq!(misc.size(), 600 + 300);
        assert_eq!(blocks.iter().map(Block::size).sum::<usize>(), 3600);

        let none: Vec<Entity> = (0..5).map(|i| Entity::new("s", i.to_string()).unwrap()).collect();
        let blocks = block_by_key(&none, "type");
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].size(), 5);
    }

    #[test]
    fn figure3_tuning() {
        let parts = tune_partitions(&figure3_blocks(), 700, 210).unwrap();
        let summary: Vec<_> = parts
            .iter()
            .map(|p| (p.id().to_string(), p.size()))
            .collect();
        assert_eq!(
            summary,
            vec![
                ("block:2.5".to_string(), 650),
                ("block:3.5#0".to_string(), 650),
                ("block:3.5#1".to_string(), 650),
                ("block:DVD-RW".to_string(), 450),
                ("agg-0000".to_string(), 600),
                ("misc".to_string(), 600),
            ]
        );
        match parts[4].kind() {
            PartitionKind::Aggregate { members } => {
                assert_eq!(members, &["Blu-ray", "CD-RW", "HD-DVD"]);
            }
            other => panic!("expected aggregate, got {other:?}"),
        }
    }

    #[test]
    fn well_sized_blocks_pass_through() {
        let blocks = vec![block("a", 300), block("b", 700), block("c", 210)];
        let parts = tune_partitions(&blocks, 700, 210).unwrap();
        assert_eq!(parts.len(), 3);
        assert!(parts.iter().all(|p| p.kind() == &PartitionKind::BlockWhole));
    }

    #[test]
    fn oversized_block_split_evenly() {
        let m = 10;
        let parts = tune_partitions(&[block("x", 3 * m + 1)], m, 0).unwrap();
        assert_eq!(parts.len(), 4);
        let sizes: Vec<_> = parts.iter().map(Partition::size).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 31);
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert!(sizes.iter().all(|s| *s <= m));
    }

    #[test]
    fn oversized_misc_is_split() {
        let parts = tune_partitions(&[Block::new(BlockKey::Misc, keys("m", 25))], 10, 3).unwrap();
        let kinds: Vec<_> = parts.iter().map(|p| p.kind().clone()).collect();
        assert_eq!(
            kinds,
            (0..3)
                .map(|index| PartitionKind::Misc { index, count: 3 })
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn lone_small_block_stays_whole() {
        let parts = tune_partitions(&[block("big", 9), block("tiny", 2)], 10, 3).unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[1].kind(), &PartitionKind::BlockWhole);
    }

    #[test]
    fn min_size_above_max_rejected() {
        assert!(tune_partitions(&[block("a", 1)], 10, 11).is_err());
    }
}
