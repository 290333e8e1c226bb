//! End-to-end runs driven by a [`RunConfig`]: load, plan, match, report.

pub mod config;
pub mod experiment;
pub mod report;
pub mod synthetic;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::data_service::{write_correspondences, DataStore, LoadOptions};
use crate::engine::{run_local, write_trace, RunOutcome};
use crate::error::{Error, Result};
use crate::partitioning::{plan_single_source, plan_two_sources, PartitionPlan, PartitioningMode};
use crate::strategy::MatchStrategy;

pub use config::RunConfig;

pub const CORRESPONDENCES_FILE: &str = "correspondences.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const PLAN_FILE: &str = "plan.json";
pub const TRACE_FILE: &str = "trace.jsonl";

/// Loaded data and the plan to execute.
pub struct PreparedRun {
    pub store: Arc<DataStore>,
    pub plan: PartitionPlan,
    pub strategy: MatchStrategy,
    /// Output ids carry their source label (two-source runs).
    pub qualify_ids: bool,
}

/// Validates the configuration and checks the input headers. Failures here
/// are configuration errors.
pub fn check_config(config: &RunConfig) -> Result<MatchStrategy> {
    config.validate()?;
    let strategy = config.strategy.build()?;
    let Some(first) = config.input.path.as_deref() else {
        if config.input.second_path.is_some() {
            return Err(Error::config("input.path", "a second source needs a first one"));
        }
        config.synthetic.validate()?;
        let headers = synthetic::COLUMNS.map(str::to_owned);
        check_headers(config, &strategy, &headers, "synthetic data")?;
        return Ok(strategy);
    };
    let paths = std::iter::once(first).chain(config.input.second_path.as_deref());
    for path in paths {
        if let Some(headers) = read_headers(path, config.input.delimiter as u8) {
            check_headers(config, &strategy, &headers, &path.display().to_string())?;
        }
    }
    Ok(strategy)
}

fn check_headers(
    config: &RunConfig,
    strategy: &MatchStrategy,
    headers: &[String],
    origin: &str,
) -> Result<()> {
    if !headers.contains(&config.input.id_column) {
        return Err(Error::config(
            "input.id_column",
            format!("`{}` is not a column of {origin}", config.input.id_column),
        ));
    }
    if config.partitioning.mode == PartitioningMode::BlockingBased {
        if let Some(attr) = &config.partitioning.blocking_attribute {
            if !headers.contains(attr) {
                return Err(Error::config(
                    "partitioning.blocking_attribute",
                    format!("`{attr}` is not a column of {origin}"),
                ));
            }
        }
    }
    strategy.validate_schema(headers)
}

/// Header row of a delimited file, or `None` if it cannot be read (the
/// load step reports that).
fn read_headers(path: &Path, delimiter: u8) -> Option<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .from_path(path)
        .ok()?;
    Some(rdr.headers().ok()?.iter().map(str::to_owned).collect())
}

/// Loads the configured input file(s), or generates synthetic entities from
/// the `synthetic` section when no input file is given.
pub fn load(config: &RunConfig) -> Result<Arc<DataStore>> {
    let store = DataStore::new();
    let columns = (!config.input.columns.is_empty()).then(|| config.input.columns.clone());
    let opts = |source: &str| LoadOptions {
        source: source.to_owned(),
        id_column: config.input.id_column.clone(),
        delimiter: config.input.delimiter as u8,
        columns: columns.clone(),
    };
    let Some(first) = config.input.path.as_deref() else {
        let spec = synthetic::SyntheticSpec {
            source: config.input.source.clone(),
            ..config.synthetic.clone()
        };
        for e in synthetic::generate(&spec)? {
            store.insert_entity(e)?;
        }
        return Ok(Arc::new(store));
    };
    store.load_file(first, &opts(&config.input.source))?;
    if let Some(second) = &config.input.second_path {
        store.load_file(second, &opts(&config.input.second_source))?;
    }
    Ok(Arc::new(store))
}

pub fn plan(config: &RunConfig, store: &DataStore, strategy: &MatchStrategy) -> Result<PartitionPlan> {
    let opts = config.plan_options(strategy)?;
    let plan = match &config.input.second_path {
        None => {
            let es = store.entities();
            plan_single_source(es.iter().map(|e| e.as_ref()), &opts)?
        }
        Some(_) => {
            let a = store.source_entities(&config.input.source);
            let b = store.source_entities(&config.input.second_source);
            plan_two_sources(
                a.iter().map(|e| e.as_ref()),
                b.iter().map(|e| e.as_ref()),
                &opts,
                config.input.duplicate_free,
            )?
        }
    };
    plan.validate()?;
    Ok(plan)
}

pub fn prepare(config: &RunConfig) -> Result<PreparedRun> {
    let strategy = check_config(config)?;
    let store = load(config)?;
    let plan = plan(config, &store, &strategy)?;
    Ok(PreparedRun {
        store,
        plan,
        strategy,
        qualify_ids: config.input.second_path.is_some(),
    })
}

/// Runs the prepared plan on the configured in-process workers.
pub fn execute(config: &RunConfig, prepared: &PreparedRun) -> Result<RunOutcome> {
    run_local(
        prepared.store.clone(),
        prepared.plan.clone(),
        &prepared.strategy,
        &config.worker_descriptors()?,
        config.engine_config(),
    )
}

pub fn write_plan(dir: &Path, plan: &PartitionPlan) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(PLAN_FILE);
    report::write_plan_report(plan, BufWriter::new(File::create(&path)?))?;
    Ok(path)
}

/// Writes correspondences, metrics, plan and trace into `dir`.
pub fn write_artifacts(dir: &Path, prepared: &PreparedRun, outcome: &RunOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_correspondences(
        &outcome.correspondences,
        BufWriter::new(File::create(dir.join(CORRESPONDENCES_FILE))?),
        prepared.qualify_ids,
    )?;
    report::write_metrics(
        &outcome.metrics,
        BufWriter::new(File::create(dir.join(METRICS_FILE))?),
    )?;
    write_plan(dir, &prepared.plan)?;
    write_trace(
        &outcome.trace,
        BufWriter::new(File::create(dir.join(TRACE_FILE))?),
    )?;
    Ok(())
}
