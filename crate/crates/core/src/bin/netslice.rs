use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use netslice::dataset;
use netslice::harness::{self, ExperimentConfig, Scale};
use netslice::schemes::SchemeKind;
use netslice::Error;

/// Estimator-guided inter-slice resource partitioning experiments.
#[derive(Parser, Debug)]
#[command(name = "netslice", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML experiment config layered over the scale defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated schemes: idla,traffic,oracle,equal.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<String>>,
    /// full (12 cells, 1000/2000/2000 slots) or desk (3 cells, 200/400/400).
    #[arg(long)]
    scale: Option<String>,
    /// Dump per-iteration optimizer traces.
    #[arg(long)]
    trace: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Collection phase only; writes dataset.csv and kpi_h0.csv.
    Collect(Common),
    /// Trains the estimator on a dataset; writes model.json.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV (default: <out>/dataset.csv).
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Full phased experiment.
    Run(Common),
    /// Recomputes metrics from a slot log.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Slot log (default: <out>/slot_log.csv).
        #[arg(long)]
        logs: Option<PathBuf>,
    },
    /// Renders figures from a slot log.
    Plot {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        logs: Option<PathBuf>,
    },
    /// Prints the effective configuration as TOML.
    Config(Common),
}

enum Failure {
    Config(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidSlice { .. } => Failure::Config(e),
            other => Failure::Runtime(other),
        }
    }
}

fn resolve(c: &Common) -> Result<ExperimentConfig, Failure> {
    let scale = c.scale.as_deref().map(str::parse::<Scale>).transpose().map_err(Failure::Config)?;
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path, scale).map_err(Failure::Config)?,
        None => ExperimentConfig::for_scale(scale.unwrap_or_default()),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.output_dir = out.clone();
    }
    if let Some(list) = &c.schemes {
        cfg.schemes = list
            .iter()
            .map(|s| s.parse::<SchemeKind>())
            .collect::<Result<_, _>>()
            .map_err(Failure::Config)?;
    }
    cfg.trace |= c.trace;
    cfg.validate().map_err(Failure::Config)?;
    Ok(cfg)
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Collect(c) => {
            let cfg = resolve(&c)?;
            let collected = harness::collect(&cfg)?;
            harness::write_collected(&collected, cfg.sim.history_len, &cfg.output_dir)?;
            println!(
                "collected {} samples ({} raw) into {}",
                collected.samples.len(),
                collected.raw_samples,
                cfg.output_dir.display()
            );
        }
        Command::Train { common, dataset: path } => {
            let cfg = resolve(&common)?;
            let path = path.unwrap_or_else(|| cfg.output_dir.join("dataset.csv"));
            let (samples, history_len) = dataset::load(&path)?;
            let (model, report) = harness::train_estimator(&cfg, &samples, history_len)?;
            harness::write_model(&model, &report, &cfg.output_dir)?;
            println!(
                "train MAE {:.4}, test MAE {:.4}, {:.1}s",
                report.train_mae, report.test_mae, report.wall_clock_secs
            );
        }
        Command::Run(c) => {
            let cfg = resolve(&c)?;
            let out = harness::run_experiment(&cfg)?;
            println!("test MAE {:.4}", out.train_report.test_mae);
            print_summary(&out.metrics);
        }
        Command::Eval { common, logs } => {
            let cfg = resolve(&common)?;
            let path = logs.unwrap_or_else(|| cfg.output_dir.join("slot_log.csv"));
            let rows = harness::read_slot_log(&path)?;
            let metrics = harness::compute_metrics(&rows, cfg.convergence_fraction)?;
            harness::emit_outputs(&metrics, &cfg.output_dir)?;
            print_summary(&metrics);
        }
        Command::Plot { common, logs } => {
            let cfg = resolve(&common)?;
            let path = logs.unwrap_or_else(|| cfg.output_dir.join("slot_log.csv"));
            let rows = harness::read_slot_log(&path)?;
            let metrics = harness::compute_metrics(&rows, cfg.convergence_fraction)?;
            let written = harness::emit_plots(&metrics, &cfg.output_dir.join("plots"))?;
            println!("wrote {} figures", written.len());
        }
        Command::Config(c) => {
            let cfg = resolve(&c)?;
            print!("{}", cfg.to_toml()?);
        }
    }
    Ok(())
}

fn print_summary(m: &harness::MetricsTable) {
    println!(
        "{:<12} {:<5} {:>10} {:>10} {:>10} {:>10}",
        "scheme", "phase", "mean_sat", "p_sat", "norm_tput", "utility"
    );
    for r in &m.summary {
        println!(
            "{:<12} {:<5} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            r.scheme, r.phase, r.mean_satisfaction, r.p_satisfied, r.mean_norm_throughput, r.mean_utility
        );
    }
}

fn main() -> ExitCode {
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
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(2)
        }
    }
}
