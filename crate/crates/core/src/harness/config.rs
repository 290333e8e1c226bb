//! Run configuration: a TOML file whose keys can be overridden by flags.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::engine::{EngineConfig, WorkerDescriptor};
use crate::error::{Error, Result};
use crate::partitioning::{
    max_partition_size, min_size_from_fraction, PartitioningMode, PlanOptions, SizingInput,
};
use crate::strategy::MatchStrategy;

use super::synthetic::SyntheticSpec;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: InputConfig,
    pub partitioning: PartitioningConfig,
    pub strategy: StrategyConfig,
    pub environment: EnvironmentConfig,
    pub engine: EngineSettings,
    pub output: OutputConfig,
    pub synthetic: SyntheticSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub path: Option<PathBuf>,
    /// Second source; both sources are then matched against each other.
    pub second_path: Option<PathBuf>,
    pub id_column: String,
    pub delimiter: char,
    pub source: String,
    pub second_source: String,
    /// Attribute columns to load; all when empty.
    pub columns: Vec<String>,
    /// Both sources are free of internal duplicates.
    pub duplicate_free: bool,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            path: None,
            second_path: None,
            id_column: "id".into(),
            delimiter: ',',
            source: "a".into(),
            second_source: "b".into(),
            columns: Vec::new(),
            duplicate_free: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitioningConfig {
    pub mode: PartitioningMode,
    pub blocking_attribute: Option<String>,
    /// Explicit maximum partition size; derived from memory when absent.
    pub max_partition_size: Option<usize>,
    /// Memory per node in bytes.
    pub max_mem: u64,
    pub min_size_fraction: f64,
}

impl Default for PartitioningConfig {
    fn default() -> Self {
        Self {
            mode: PartitioningMode::SizeBased,
            blocking_attribute: None,
            max_partition_size: None,
            max_mem: 2_000_000_000,
            min_size_fraction: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    /// `wam` or `lrm`; ignored when `definition` is given.
    pub preset: String,
    pub lrm_intercept: f64,
    pub lrm_coefficients: [f64; 3],
    pub definition: Option<MatchStrategy>,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            preset: "wam".into(),
            lrm_intercept: -12.0,
            lrm_coefficients: [6.0, 6.0, 6.0],
            definition: None,
        }
    }
}

impl StrategyConfig {
    pub fn build(&self) -> Result<MatchStrategy> {
        let s = match (&self.definition, self.preset.as_str()) {
            (Some(def), _) => def.clone(),
            (None, "wam") => MatchStrategy::wam(),
            (None, "lrm") => MatchStrategy::lrm(self.lrm_intercept, self.lrm_coefficients),
            (None, other) => {
                return Err(Error::config(
                    "strategy.preset",
                    format!("unknown preset `{other}` (expected wam or lrm)"),
                ))
            }
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub workers: usize,
    /// Threads per worker; the number of logical cores when absent.
    pub threads: Option<usize>,
    /// Cached partitions per worker; 0 disables caching.
    pub cache: usize,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        Self {
            workers: 1,
            threads: None,
            cache: 16,
        }
    }
}

impl EnvironmentConfig {
    pub fn threads(&self) -> usize {
        self.threads.unwrap_or_else(|| {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSettings {
    pub affinity: bool,
    pub heartbeat_interval_ms: u64,
    pub heartbeat_timeout_ms: u64,
    pub membership_timeout_ms: u64,
    pub max_task_failures: u32,
}

impl Default for EngineSettings {
    fn default() -> Self {
        let d = EngineConfig::default();
        Self {
            affinity: d.affinity,
            heartbeat_interval_ms: d.heartbeat_interval.as_millis() as u64,
            heartbeat_timeout_ms: d.heartbeat_timeout.as_millis() as u64,
            membership_timeout_ms: d.membership_timeout.as_millis() as u64,
            max_task_failures: d.max_task_failures,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let field = e
                .message()
                .split('`')
                .nth(1)
                .unwrap_or("config")
                .to_owned();
            Error::config(field, e.to_string())
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Consistency checks that do not need the input data.
    pub fn validate(&self) -> Result<()> {
        if self.partitioning.mode == PartitioningMode::BlockingBased
            && self
                .partitioning
                .blocking_attribute
                .as_deref()
                .is_none_or(|a| a.trim().is_empty())
        {
            return Err(Error::config(
                "partitioning.blocking_attribute",
                "blocking mode requires a blocking column",
            ));
        }
        if !self.input.delimiter.is_ascii() {
            return Err(Error::config("input.delimiter", "must be a single ASCII character"));
        }
        if self.input.second_path.is_some() && self.input.source == self.input.second_source {
            return Err(Error::config(
                "input.second_source",
                "the two sources need distinct labels",
            ));
        }
        if self.environment.workers == 0 {
            return Err(Error::config("environment.workers", "must be at least 1"));
        }
        if self.environment.threads == Some(0) {
            return Err(Error::config("environment.threads", "must be at least 1"));
        }
        if self.partitioning.max_partition_size == Some(0) {
            return Err(Error::config("partitioning.max_partition_size", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.partitioning.min_size_fraction) {
            return Err(Error::config(
                "partitioning.min_size_fraction",
                "must lie in [0, 1]",
            ));
        }
        if self.engine.heartbeat_interval_ms == 0
            || self.engine.heartbeat_timeout_ms <= self.engine.heartbeat_interval_ms
        {
            return Err(Error::config(
                "engine.heartbeat_timeout_ms",
                "must exceed a non-zero heartbeat interval",
            ));
        }
        self.strategy.build()?;
        Ok(())
    }

    /// Maximum partition size: the explicit value, or the memory-derived
    /// one for the configured strategy and thread count.
    pub fn max_partition_size(&self, strategy: &MatchStrategy) -> Result<usize> {
        match self.partitioning.max_partition_size {
            Some(m) => Ok(m),
            None => max_partition_size(SizingInput {
                max_mem_per_node: self.partitioning.max_mem,
                threads_per_node: self.environment.threads() as u64,
                pair_memory_cost: strategy.pair_memory_cost,
            }),
        }
    }

    pub fn plan_options(&self, strategy: &MatchStrategy) -> Result<PlanOptions> {
        let m = self.max_partition_size(strategy)?;
        Ok(match self.partitioning.mode {
            PartitioningMode::SizeBased => PlanOptions::size_based(m, strategy.id.as_str()),
            PartitioningMode::BlockingBased => PlanOptions::blocking(
                self.partitioning
                    .blocking_attribute
                    .clone()
                    .unwrap_or_default(),
                m,
                min_size_from_fraction(m, self.partitioning.min_size_fraction)?,
                strategy.id.as_str(),
            ),
        })
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            affinity: self.engine.affinity,
            heartbeat_interval: Duration::from_millis(self.engine.heartbeat_interval_ms),
            heartbeat_timeout: Duration::from_millis(self.engine.heartbeat_timeout_ms),
            membership_timeout: Duration::from_millis(self.engine.membership_timeout_ms),
            max_task_failures: self.engine.max_task_failures,
        }
    }

    /// In-process workers `w0`, `w1`, …
    pub fn worker_descriptors(&self) -> Result<Vec<WorkerDescriptor>> {
        (0..self.environment.workers)
            .map(|i| {
                WorkerDescriptor::new(
                    format!("w{i}"),
                    self.environment.threads(),
                    self.environment.cache,
                )
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_keys_and_defaults() {
        let c = RunConfig::from_toml(
            r#"
            input.path = "data.csv"
            partitioning.mode = "blocking_based"
            partitioning.blocking_attribute = "type"
            environment.threads = 4
            environment.cache = 0
            "#,
        )
        .unwrap();
        c.validate().unwrap();
        assert_eq!(c.input.path.as_deref(), Some(Path::new("data.csv")));
        assert_eq!(c.environment.workers, 1);
        let strategy = c.strategy.build().unwrap();
        assert_eq!(c.max_partition_size(&strategy).unwrap(), 5000);
        let opts = c.plan_options(&strategy).unwrap();
        assert_eq!(opts.min_partition_size, 1500);
    }

    #[test]
    fn lrm_preset_sizes_smaller_partitions() {
        let c = RunConfig::from_toml("strategy.preset = \"lrm\"\nenvironment.threads = 4").unwrap();
        let s = c.strategy.build().unwrap();
        assert_eq!(c.max_partition_size(&s).unwrap(), 707);
    }

    #[test]
    fn blocking_without_column_names_the_field() {
        let c = RunConfig::from_toml("partitioning.mode = \"blocking_based\"").unwrap();
        match c.validate().unwrap_err() {
            Error::Config { field, .. } => assert_eq!(field, "partitioning.blocking_attribute"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_toml("environment.cores = 3").unwrap_err();
        assert!(err.to_string().contains("cores"), "{err}");
    }

    #[test]
    fn custom_strategy_definition() {
        let c = RunConfig::from_toml(
            r#"
            [strategy.definition]
            id = "title-only"
            pair_memory_cost = 20
            matchers = [{ kind = "edit_distance", attribute = "title" }]
            combiner = { type = "weighted_average", weights = [1.0], threshold = 0.9 }
            "#,
        )
        .unwrap();
        let s = c.strategy.build().unwrap();
        assert_eq!(s.id, "title-only");
    }
}
