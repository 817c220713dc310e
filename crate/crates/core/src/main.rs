use std::io::{self, BufRead, IsTerminal};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use demograph::demographics::Task;
use demograph::pipeline::{self, Method, PipelineConfig, Workspace};
use demograph::synth::SynthConfig;
use demograph::{Error, Result};

#[derive(Parser)]
#[command(name = "demograph", version, about = "Demographic inference from call detail records")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed of the ground-truth split and training subsamples.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Work directory holding stage artifacts.
    #[arg(long, global = true)]
    work: Option<PathBuf>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    iters: Option<usize>,
}

#[derive(Args, Clone)]
struct Target {
    #[arg(long, value_enum)]
    task: Task,
    #[arg(long, value_enum, default_value = "ml+rdif")]
    method: Method,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and print its directory.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Generator configuration (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        users: Option<usize>,
        /// Output directory; defaults to `demograph-synth-<seed>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse raw records into the work directory.
    Ingest {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    Features {
        #[command(flatten)]
        common: Common,
    },
    /// Split labels and build the model matrix for a task.
    Preprocess {
        #[arg(long, value_enum)]
        task: Task,
        #[command(flatten)]
        common: Common,
    },
    /// Exploratory statistics, written as CSV and JSON.
    Analyze {
        #[command(flatten)]
        common: Common,
    },
    Train {
        #[arg(long, value_enum)]
        task: Task,
        #[command(flatten)]
        common: Common,
    },
    /// Probability vectors for the prediction population.
    Propagate {
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        common: Common,
    },
    /// Quota-constrained assignment.
    Pps {
        #[command(flatten)]
        target: Target,
        /// Fraction of the prediction population to label; repeatable.
        #[arg(long)]
        q: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    Evaluate {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        q: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// All stages from raw records to a report. The data directory is read
    /// from stdin when `--data` is absent, so `synth` output can be piped in.
    Run {
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        q: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(lambda) = common.lambda {
        cfg.lambda = lambda;
    }
    if let Some(iters) = common.iters {
        cfg.iters = iters;
    }
    cfg.validate().map_err(|e| match e {
        Error::Config(msg) => Error::Usage(msg),
        other => other,
    })?;
    Ok(cfg)
}

fn workspace(common: &Common, default: impl FnOnce() -> PathBuf) -> Result<Workspace> {
    Workspace::new(common.work.clone().unwrap_or_else(default))
}

fn default_work() -> PathBuf {
    PathBuf::from("demograph-work")
}

fn qs_or_default(qs: Vec<f64>, cfg: &PipelineConfig) -> Result<Vec<f64>> {
    let qs = if qs.is_empty() { cfg.qs.clone() } else { qs };
    if let Some(q) = qs.iter().find(|q| !(**q > 0.0 && **q <= 1.0)) {
        return Err(Error::Usage(format!("--q must lie in (0, 1], got {q}")));
    }
    Ok(qs)
}

fn data_from_stdin() -> Result<PathBuf> {
    let stdin = io::stdin();
    if stdin.is_terminal() {
        return Err(Error::Usage("--data is required unless a data directory is piped on stdin".into()));
    }
    let mut line = String::new();
    for l in stdin.lock().lines() {
        let l = l.map_err(|e| Error::io("<stdin>", e))?;
        if !l.trim().is_empty() {
            line = l.trim().to_string();
        }
    }
    if line.is_empty() {
        return Err(Error::Usage("no data directory on stdin".into()));
    }
    Ok(PathBuf::from(line))
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Synth { seed, config, users, out } => {
            let mut cfg = match config {
                Some(path) => SynthConfig::load(&path)?,
                None => SynthConfig::default(),
            };
            cfg.seed = seed;
            if let Some(n) = users {
                cfg.n_users = n;
            }
            cfg.validate()?;
            let out = out.unwrap_or_else(|| PathBuf::from(format!("demograph-synth-{seed}")));
            let data = demograph::synth::generate(&cfg)?;
            let manifest = data.write_dir(&out)?;
            log::info!("{} users, {} edges, {} calls, {} sms", manifest.users, manifest.edges, manifest.calls, manifest.sms);
            println!("{}", out.display());
        }
        Command::Ingest { data, common } => {
            let cfg = load_config(&common)?;
            let summary = pipeline::ingest(&cfg, &data, &workspace(&common, default_work)?)?;
            println!(
                "users={} clients={} labeled={} events={}",
                summary.users, summary.clients, summary.labeled, summary.events
            );
        }
        Command::Features { common } => {
            let cfg = load_config(&common)?;
            pipeline::features(&cfg, &workspace(&common, default_work)?)?;
        }
        Command::Preprocess { task, common } => {
            let cfg = load_config(&common)?;
            pipeline::preprocess(&cfg, &workspace(&common, default_work)?, task)?;
        }
        Command::Analyze { common } => {
            let cfg = load_config(&common)?;
            let summary = pipeline::analyze::analyze(&cfg, &workspace(&common, default_work)?)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Train { task, common } => {
            let cfg = load_config(&common)?;
            let model = pipeline::train(&cfg, &workspace(&common, default_work)?, task)?;
            println!("{} model with {} nonzero weights", task, model.nonzero_weights());
        }
        Command::Propagate { target, common } => {
            let cfg = load_config(&common)?;
            pipeline::propagate_stage(&cfg, &workspace(&common, default_work)?, target.task, target.method)?;
        }
        Command::Pps { target, q, common } => {
            let cfg = load_config(&common)?;
            let qs = qs_or_default(q, &cfg)?;
            pipeline::pps_stage(&cfg, &workspace(&common, default_work)?, target.task, target.method, &qs)?;
        }
        Command::Evaluate { target, q, common } => {
            let cfg = load_config(&common)?;
            let qs = qs_or_default(q, &cfg)?;
            let report = pipeline::evaluate(&cfg, &workspace(&common, default_work)?, target.task, target.method, &qs)?;
            pipeline::print_report(io::stdout().lock(), &report).map_err(|e| Error::io("<stdout>", e))?;
        }
        Command::Run { data, target, q, common } => {
            let cfg = load_config(&common)?;
            let qs = qs_or_default(q, &cfg)?;
            let data = match data {
                Some(d) => d,
                None => data_from_stdin()?,
            };
            let ws = workspace(&common, || Path::new(&data).join("work"))?;
            let report = pipeline::run(&cfg, &data, &ws, target.task, target.method, &qs)?;
            pipeline::print_report(io::stdout().lock(), &report).map_err(|e| Error::io("<stdout>", e))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
