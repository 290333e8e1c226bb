use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use parmatch::engine::tcp::{run_tcp_worker, TcpServer};
use parmatch::engine::{Coordinator, KillSwitch, RunOutcome, WorkerDescriptor};
use parmatch::harness::experiment::speedup_experiment;
use parmatch::harness::synthetic::{self, SyntheticSpec};
use parmatch::harness::{self, PreparedRun, RunConfig};
use parmatch::partitioning::PartitioningMode;
use parmatch::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_LOAD: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser)]
#[command(name = "parmatch", version, about = "Partitioned parallel entity matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load, partition and match in this process; write all artifacts.
    Run(RunArgs),
    /// Write a seeded synthetic product-offer file.
    Generate(GenerateArgs),
    /// Time the same plan at several thread counts.
    Speedup {
        #[command(flatten)]
        run: RunArgs,
        /// Thread counts to compare; the first is the baseline.
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        thread_counts: Vec<usize>,
    },
    /// Serve a run to workers connecting over TCP.
    Coordinator {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
    },
    /// Join a coordinator and execute match tasks.
    Worker {
        #[arg(long, default_value = "127.0.0.1:7878")]
        connect: String,
        #[arg(long)]
        id: String,
        #[arg(long, default_value_t = default_threads())]
        threads: usize,
        #[arg(long, default_value_t = 16)]
        cache: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Size,
    Blocking,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyPreset {
    Wam,
    Lrm,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input file; synthetic data is generated when no input is configured.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Column holding the blocking key.
    #[arg(long)]
    blocking_attribute: Option<String>,
    /// Memory per node in bytes; accepts k/m/g suffixes (decimal).
    #[arg(long, value_parser = parse_bytes)]
    max_mem: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Cached partitions per worker; 0 disables caching.
    #[arg(long)]
    cache: Option<usize>,
    #[arg(long)]
    min_size_fraction: Option<f64>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyPreset>,
    /// Only plan: write the plan report and stop.
    #[arg(long)]
    dry_run: bool,
    /// Seed for synthetic input.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    blocks: usize,
    #[arg(long, default_value_t = 1.0)]
    zipf_exponent: f64,
    /// Exact block sizes; the remaining entities get no blocking value.
    #[arg(long, value_delimiter = ',')]
    block_sizes: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0.1)]
    miss_rate: f64,
    #[arg(long, default_value_t = 0.2)]
    duplicate_rate: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

struct Failure {
    code: u8,
    error: Error,
}

type CliResult<T> = Result<T, Failure>;

fn config_failure(error: Error) -> Failure {
    let code = match error {
        Error::Config { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    };
    Failure { code, error }
}

fn load_failure(error: Error) -> Failure {
    let code = match error {
        Error::Config { .. } => EXIT_CONFIG,
        _ => EXIT_LOAD,
    };
    Failure { code, error }
}

fn runtime_failure(error: Error) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        error,
    }
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse_bytes(s: &str) -> Result<u64, String> {
    let lower = s.trim().to_ascii_lowercase();
    let lower = lower.strip_suffix('b').unwrap_or(&lower);
    let (digits, factor) = match lower.chars().last() {
        Some('k') => (&lower[..lower.len() - 1], 1_000),
        Some('m') => (&lower[..lower.len() - 1], 1_000_000),
        Some('g') => (&lower[..lower.len() - 1], 1_000_000_000),
        _ => (lower, 1),
    };
    digits
        .trim()
        .parse::<u64>()
        .ok()
        .and_then(|v| v.checked_mul(factor))
        .ok_or_else(|| format!("invalid byte count `{s}`"))
}

impl RunArgs {
    fn config(&self) -> CliResult<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_file(path).map_err(config_failure)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.input {
            c.input.path = Some(p.clone());
        }
        if let Some(m) = self.mode {
            c.partitioning.mode = match m {
                Mode::Size => PartitioningMode::SizeBased,
                Mode::Blocking => PartitioningMode::BlockingBased,
            };
        }
        if let Some(a) = &self.blocking_attribute {
            c.partitioning.blocking_attribute = Some(a.clone());
        }
        if let Some(v) = self.max_mem {
            c.partitioning.max_mem = v;
        }
        if let Some(v) = self.threads {
            c.environment.threads = Some(v);
        }
        if let Some(v) = self.workers {
            c.environment.workers = v;
        }
        if let Some(v) = self.cache {
            c.environment.cache = v;
        }
        if let Some(v) = self.min_size_fraction {
            c.partitioning.min_size_fraction = v;
        }
        if let Some(s) = self.strategy {
            c.strategy.definition = None;
            c.strategy.preset = match s {
                StrategyPreset::Wam => "wam",
                StrategyPreset::Lrm => "lrm",
            }
            .into();
        }
        if let Some(seed) = self.seed {
            c.synthetic.seed = seed;
        }
        if let Some(dir) = &self.out_dir {
            c.output.dir = dir.clone();
        }
        Ok(c)
    }
}

fn prepare(config: &RunConfig) -> CliResult<PreparedRun> {
    let strategy = harness::check_config(config).map_err(config_failure)?;
    let store = harness::load(config).map_err(load_failure)?;
    let plan = harness::plan(config, &store, &strategy).map_err(config_failure)?;
    info!(
        "{} entities, {} partitions, {} tasks",
        store.entity_count(),
        plan.partitions.len(),
        plan.tasks.len()
    );
    Ok(PreparedRun {
        store,
        plan,
        strategy,
        qualify_ids: config.input.second_path.is_some(),
    })
}

fn print_plan_summary(prepared: &PreparedRun, plan_path: &Path) {
    let p = &prepared.plan;
    println!(
        "plan: {} partitions, {} tasks, m={}, {} predicted pairs ({})",
        p.partitions.len(),
        p.tasks.len(),
        p.max_partition_size,
        p.predicted_pairs(),
        plan_path.display()
    );
}

fn finish(config: &RunConfig, prepared: &PreparedRun, outcome: RunOutcome) -> CliResult<()> {
    let dir = &config.output.dir;
    harness::write_artifacts(dir, prepared, &outcome).map_err(runtime_failure)?;
    let m = &outcome.metrics;
    println!(
        "matched: {} correspondences, {} pairs in {:.3}s, fetches {}, cache hits {}, hit ratio {:.3}",
        m.correspondence_count, m.pairs_compared, m.total_elapsed, m.fetches, m.cache_hits, m.hit_ratio
    );
    println!("artifacts written to {}", dir.display());
    Ok(())
}

fn run(args: &RunArgs) -> CliResult<()> {
    let config = args.config()?;
    let prepared = prepare(&config)?;
    if args.dry_run {
        let path = harness::write_plan(&config.output.dir, &prepared.plan).map_err(runtime_failure)?;
        print_plan_summary(&prepared, &path);
        return Ok(());
    }
    let outcome = harness::execute(&config, &prepared).map_err(runtime_failure)?;
    finish(&config, &prepared, outcome)
}

fn generate(args: &GenerateArgs) -> CliResult<()> {
    let spec = SyntheticSpec {
        n: args.n,
        blocks: args.blocks,
        zipf_exponent: args.zipf_exponent,
        block_sizes: args.block_sizes.clone(),
        miss_rate: args.miss_rate,
        duplicate_rate: args.duplicate_rate,
        seed: args.seed,
        ..SyntheticSpec::default()
    };
    let entities = synthetic::generate(&spec).map_err(config_failure)?;
    let file = File::create(&args.out).map_err(|e| runtime_failure(e.into()))?;
    synthetic::write_csv(&entities, BufWriter::new(file)).map_err(runtime_failure)?;
    println!("wrote {} entities to {}", entities.len(), args.out.display());
    Ok(())
}

fn speedup(args: &RunArgs, thread_counts: &[usize]) -> CliResult<()> {
    let config = args.config()?;
    if thread_counts.is_empty() || thread_counts.contains(&0) {
        return Err(config_failure(Error::config("thread-counts", "need positive thread counts")));
    }
    let prepared = prepare(&config)?;
    let report = speedup_experiment(
        &prepared.store,
        &prepared.plan,
        &prepared.strategy,
        thread_counts,
        config.environment.cache,
        &config.engine_config(),
    )
    .map_err(runtime_failure)?;
    print!("{}", report.to_table());
    if !report.results_identical {
        return Err(runtime_failure(Error::Transport(
            "thread counts produced different results".into(),
        )));
    }
    std::fs::create_dir_all(&config.output.dir).map_err(|e| runtime_failure(e.into()))?;
    let path = config.output.dir.join("speedup.json");
    let mut f = File::create(&path).map_err(|e| runtime_failure(e.into()))?;
    serde_json::to_writer_pretty(&mut f, &report)
        .map_err(|e| runtime_failure(Error::Io(e.into())))?;
    writeln!(f).map_err(|e| runtime_failure(e.into()))?;
    Ok(())
}

fn coordinator(args: &RunArgs, listen: &str) -> CliResult<()> {
    let config = args.config()?;
    let prepared = prepare(&config)?;
    let engine = config.engine_config();
    let heartbeat = engine.heartbeat_interval;
    let coordinator = Coordinator::new(prepared.store.clone(), prepared.plan.clone(), engine)
        .map_err(config_failure)?;
    let listener = TcpListener::bind(listen).map_err(|e| runtime_failure(e.into()))?;
    let server = TcpServer::start(
        listener,
        coordinator.handle(),
        prepared.store.clone(),
        prepared.strategy.clone(),
        heartbeat,
    )
    .map_err(runtime_failure)?;
    println!("listening on {}", server.local_addr());
    let _ = std::io::stdout().flush();
    let outcome = coordinator.run();
    server.stop();
    finish(&config, &prepared, outcome.map_err(runtime_failure)?)
}

fn worker(connect: &str, id: &str, threads: usize, cache: usize) -> CliResult<()> {
    let descriptor = WorkerDescriptor::new(id, threads, cache).map_err(config_failure)?;
    run_tcp_worker(connect, descriptor, KillSwitch::default()).map_err(runtime_failure)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Generate(args) => generate(args),
        Command::Speedup { run, thread_counts } => speedup(run, thread_counts),
        Command::Coordinator { run, listen } => coordinator(run, listen),
        Command::Worker {
            connect,
            id,
            threads,
            cache,
        } => worker(connect, id, *threads, *cache),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error}");
            if let Error::Aborted { partial, .. } = &error {
                eprintln!("{} correspondences were found before the abort", partial.len());
            }
            ExitCode::from(code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_suffixes() {
        assert_eq!(parse_bytes("2GB"), Ok(2_000_000_000));
        assert_eq!(parse_bytes("500m"), Ok(500_000_000));
        assert_eq!(parse_bytes("1234"), Ok(1234));
        assert!(parse_bytes("lots").is_err());
    }
}
