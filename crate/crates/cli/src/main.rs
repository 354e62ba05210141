use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use s3gd_core::ledger::CostMode;
use s3gd_core::sim::{
    emit_results, emit_sweep, run_experiment, sweep_repeated, write_metrics_csv, write_metrics_json,
    write_sweep_csv, ExperimentConfig, OutputFormat, SweepAxis,
};
use s3gd_core::theory;

#[derive(Parser)]
#[command(name = "s3gd", version, about = "Simulate sparse-sign distributed SGD with majority vote")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and emit per-round metrics.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Run the experiment once per value of one parameter.
    Sweep {
        /// gamma, M, eta or mu
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values, e.g. 0.05,0.1,0.5
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Independent seeds per value.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Closed-form bounds.
    Theory {
        #[command(subcommand)]
        command: TheoryCommand,
    },
}

#[derive(Subcommand)]
enum TheoryCommand {
    /// Evaluate a bound and print it as JSON.
    Eval {
        #[arg(long)]
        bound: String,
        /// JSON object with the bound's parameters.
        #[arg(long, default_value = "{}")]
        params: String,
    },
    /// List the bound names accepted by `eval`.
    List,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
    /// Override the config's cost mode.
    #[arg(long)]
    cost_mode: Option<CostMode>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(mode) = self.cost_mode {
            cfg.cost_mode = mode;
        }
        Ok(cfg)
    }
}

fn run(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let out = run_experiment(&cfg)?;
    match &common.out {
        Some(path) => emit_results(&out.rounds, path, common.format)?,
        None => {
            let stdout = std::io::stdout().lock();
            match common.format {
                OutputFormat::Csv => write_metrics_csv(&out.rounds, stdout)?,
                OutputFormat::Json => write_metrics_json(&out.rounds, stdout)?,
            }
        }
    }
    eprintln!(
        "{} N={} K={} T={}: final train loss {:.6}, test metric {:.6}, {:.0} bits",
        out.algorithm,
        out.n,
        out.k,
        out.rounds.len(),
        out.final_metrics.train_loss,
        out.final_metrics.test_metric,
        out.cumulative_bits()
    );
    Ok(())
}

fn sweep(axis: SweepAxis, values: &[f64], repeats: usize, common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let rows = sweep_repeated(&cfg, axis, values, repeats)?;
    match &common.out {
        Some(path) => emit_sweep(&rows, path, common.format)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            match common.format {
                OutputFormat::Csv => write_sweep_csv(&rows, stdout)?,
                OutputFormat::Json => {
                    serde_json::to_writer_pretty(&mut stdout, &rows)?;
                    writeln!(stdout)?;
                }
            }
        }
    }
    Ok(())
}

fn theory_eval(bound: &str, params: &str) -> Result<()> {
    let params: serde_json::Value = serde_json::from_str(params).context("--params is not valid JSON")?;
    if !params.is_object() {
        bail!("--params must be a JSON object");
    }
    let value = theory::eval_json(bound, &params)?;
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { common } => run(&common),
        Command::Sweep {
            axis,
            values,
            repeats,
            common,
        } => sweep(axis, &values, repeats, &common),
        Command::Theory { command } => match command {
            TheoryCommand::Eval { bound, params } => theory_eval(&bound, &params),
            TheoryCommand::List => {
                theory::BOUND_NAMES.iter().for_each(|b| println!("{b}"));
                Ok(())
            }
        },
    }
}
