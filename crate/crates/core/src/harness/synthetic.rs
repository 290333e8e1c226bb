//! Seeded product-offer generator with skewed block sizes, a controllable
//! share of entities without blocking key, and perturbed near-duplicates.

use std::io::Write;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Entity;

pub const COLUMNS: [&str; 5] = ["id", "title", "description", "manufacturer", "type"];

const MANUFACTURERS: &[&str] = &[
    "Acme", "Borealis", "Cortex", "Dynatek", "Everlight", "Fujimo", "Gravion", "Helix",
    "Ionis", "Jovian", "Kestrel", "Lumina",
];
const ADJECTIVES: &[&str] = &[
    "portable", "external", "internal", "slim", "rugged", "wireless", "compact", "pro",
    "ultra", "silent", "rapid", "dual",
];
const NOUNS: &[&str] = &[
    "drive", "burner", "adapter", "enclosure", "reader", "writer", "player", "recorder",
    "dock", "module",
];
const WORDS: &[&str] = &[
    "fast", "storage", "capacity", "usb", "sata", "cache", "speed", "warranty", "black",
    "silver", "retail", "bulk", "kit", "cable", "power", "energy", "quiet", "series", "edition",
    "support", "interface", "transfer", "rate", "buffer", "firmware", "mount", "tray", "slot",
];

/// How entities spread over blocking keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    /// Number of distinct keys for Zipf-distributed block sizes.
    pub blocks: usize,
    pub zipf_exponent: f64,
    /// Exact block sizes; the remaining `n − Σ` entities get no key. Takes
    /// precedence over `blocks`, `zipf_exponent` and `miss_rate`.
    pub block_sizes: Option<Vec<usize>>,
    /// Share of entities without key; `round(n · miss_rate)` exactly.
    pub miss_rate: f64,
    /// Probability that an entity is a perturbed copy of an earlier one
    /// with the same key.
    pub duplicate_rate: f64,
    pub seed: u64,
    pub source: String,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 1000,
            blocks: 20,
            zipf_exponent: 1.0,
            block_sizes: None,
            miss_rate: 0.1,
            duplicate_rate: 0.2,
            seed: 42,
            source: "synthetic".into(),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("synthetic.n", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.miss_rate) {
            return Err(Error::config("synthetic.miss_rate", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.duplicate_rate) {
            return Err(Error::config("synthetic.duplicate_rate", "must lie in [0, 1)"));
        }
        match &self.block_sizes {
            Some(sizes) => {
                if sizes.iter().sum::<usize>() > self.n {
                    return Err(Error::config(
                        "synthetic.block_sizes",
                        format!("sizes add up to more than n = {}", self.n),
                    ));
                }
            }
            None => {
                if self.blocks == 0 {
                    return Err(Error::config("synthetic.blocks", "must be at least 1"));
                }
                if !(self.zipf_exponent >= 0.0) {
                    return Err(Error::config("synthetic.zipf_exponent", "must be non-negative"));
                }
            }
        }
        Ok(())
    }
}

pub fn block_key(index: usize) -> String {
    format!("type-{index:02}")
}

/// Generates `spec.n` entities in shuffled order with ids `e000000…`.
pub fn generate(spec: &SyntheticSpec) -> Result<Vec<Entity>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut keys: Vec<Option<usize>> = match &spec.block_sizes {
        Some(sizes) => sizes
            .iter()
            .enumerate()
            .flat_map(|(i, s)| std::iter::repeat_n(Some(i), *s))
            .collect(),
        None => {
            let misc = (spec.n as f64 * spec.miss_rate).round() as usize;
            let zipf = Zipf::new(spec.blocks as f64, spec.zipf_exponent)
                .map_err(|e| Error::config("synthetic.zipf_exponent", e.to_string()))?;
            (0..spec.n - misc)
                .map(|_| Some(zipf.sample(&mut rng) as usize - 1))
                .collect()
        }
    };
    keys.resize(spec.n, None);

    // records grouped by key so duplicates stay within their block
    let mut records: Vec<Record> = Vec::with_capacity(spec.n);
    let mut by_key: std::collections::HashMap<Option<usize>, Vec<usize>> = Default::default();
    for key in keys {
        let group = by_key.entry(key).or_default();
        let record = match group.choose(&mut rng) {
            Some(&orig) if rng.random_bool(spec.duplicate_rate) => perturb(&records[orig], &mut rng),
            _ => fresh(&mut rng),
        };
        group.push(records.len());
        records.push(Record { key, ..record });
    }
    records.shuffle(&mut rng);

    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let mut e = Entity::new(spec.source.as_str(), format!("e{i:06}"))?
                .with_attribute("title", r.title)
                .with_attribute("description", r.description)
                .with_attribute("manufacturer", r.manufacturer);
            if let Some(k) = r.key {
                e.set_attribute("type", block_key(k));
            }
            Ok(e)
        })
        .collect()
}

/// Writes entities as CSV with the synthetic column layout; absent
/// attributes become empty cells.
pub fn write_csv<W: Write>(entities: &[Entity], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(COLUMNS).map_err(io)?;
    for e in entities {
        let row = COLUMNS.map(|c| {
            if c == "id" {
                e.id()
            } else {
                e.attribute(c).unwrap_or("")
            }
        });
        w.write_record(row).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

struct Record {
    key: Option<usize>,
    title: String,
    description: String,
    manufacturer: String,
}

fn fresh(rng: &mut ChaCha8Rng) -> Record {
    let manufacturer = *MANUFACTURERS.choose(rng).expect("non-empty");
    let model = format!(
        "{}{}-{}",
        (b'A' + rng.random_range(0..26)) as char,
        (b'A' + rng.random_range(0..26)) as char,
        rng.random_range(100..10000)
    );
    let title = format!(
        "{manufacturer} {} {} {model}",
        ADJECTIVES.choose(rng).expect("non-empty"),
        NOUNS.choose(rng).expect("non-empty"),
    );
    let len = rng.random_range(6..12);
    let mut words: Vec<&str> = (0..len).map(|_| *WORDS.choose(rng).expect("non-empty")).collect();
    words.push(&model);
    Record {
        key: None,
        title,
        description: words.join(" "),
        manufacturer: manufacturer.to_owned(),
    }
}

/// A near-duplicate: one or two character edits in the title and one word
/// dropped or swapped in the description.
fn perturb(orig: &Record, rng: &mut ChaCha8Rng) -> Record {
    let mut title: Vec<char> = orig.title.chars().collect();
    for _ in 0..rng.random_range(1..=2) {
        let pos = rng.random_range(0..title.len());
        let c = (b'a' + rng.random_range(0..26)) as char;
        match rng.random_range(0..3) {
            0 => title[pos] = c,
            1 if title.len() > 1 => {
                title.remove(pos);
            }
            _ => title.insert(pos, c),
        }
    }
    let mut words: Vec<&str> = orig.description.split(' ').collect();
    let i = rng.random_range(0..words.len() - 1);
    if rng.random_bool(0.5) {
        words.swap(i, i + 1);
    } else {
        words.remove(i);
    }
    Record {
        key: orig.key,
        title: title.into_iter().collect(),
        description: words.join(" "),
        manufacturer: orig.manufacturer.clone(),
    }
}
