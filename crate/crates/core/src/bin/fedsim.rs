use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use fedsim::data::{synth_trajectories, write_csv, SynthKind};
use fedsim::nn::gradcheck::{self, GradCheckSpec};
use fedsim::nn::Dims;
use fedsim::sim::{emit_reports, plot_from_dir, run_experiment, summarize, ExperimentConfig, RoundLog, Variant};

#[derive(Parser)]
#[command(name = "fedsim", version, about = "Federated trajectory-prediction simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more variants and write rounds.csv, summary.json and curves.svg.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Variant to run instead of the configured one; repeat to compare several.
        #[arg(long = "variant")]
        variants: Vec<Variant>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        clients: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Check analytic gradients against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 8)]
        hidden: usize,
        #[arg(long, default_value_t = 4)]
        seq_len: usize,
        #[arg(long, default_value_t = 4)]
        batch: usize,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Leave out the head divergence term.
        #[arg(long)]
        no_bias: bool,
    },
    /// Train every client on its own data only.
    LocalOnly {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rebuild summary.json and curves.svg from rounds.csv.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Write synthetic trajectories as CSV.
    Synth {
        #[arg(long)]
        kind: SynthKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        vehicles: usize,
        #[arg(long, default_value_t = 400)]
        points: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    cfg.apply_env()?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn print_summary(logs: &[RoundLog]) {
    for s in summarize(logs) {
        eprintln!(
            "{:<24} final RMSE {:.6}  best {:.6} @ round {}  uploads {}{}",
            s.variant,
            s.final_rmse,
            s.best_rmse,
            s.best_round,
            s.uploads,
            if s.aborted { "  (aborted)" } else { "" }
        );
    }
}

fn run_variants(cfg: &ExperimentConfig, variants: &[Variant]) -> Result<Vec<RoundLog>> {
    let mut logs = Vec::new();
    for v in variants {
        let cfg = ExperimentConfig { variant: *v, ..cfg.clone() };
        let start = Instant::now();
        let outcome = run_experiment(&cfg).with_context(|| format!("running {v}"))?;
        eprintln!("{v}: {} rounds in {:.1}s", outcome.logs.len(), start.elapsed().as_secs_f64());
        if let Some(reason) = &outcome.aborted {
            eprintln!("{v}: aborted: {reason}");
        }
        logs.extend(outcome.logs);
    }
    Ok(logs)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, out, variants, seed, rounds, clients, learning_rate } => {
            let mut cfg = load_config(&config, seed)?;
            if let Some(r) = rounds {
                cfg.rounds = r;
            }
            if let Some(n) = clients {
                cfg.clients = n;
            }
            if let Some(lr) = learning_rate {
                cfg.learning_rate = lr;
            }
            cfg.validate()?;
            let variants = if variants.is_empty() { vec![cfg.variant] } else { variants };
            let logs = run_variants(&cfg, &variants)?;
            emit_reports(&logs, &out)?;
            print_summary(&logs);
        }
        Command::Gradcheck { instances, hidden, seq_len, batch, eps, seed, no_bias } => {
            let spec =
                GradCheckSpec { dims: Dims::new(2, hidden, 2)?, seq_len, batch, eps, with_bias_target: !no_bias };
            let start = Instant::now();
            let report = gradcheck::run(spec, instances, seed)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            eprintln!("{:.2}s", start.elapsed().as_secs_f64());
            if report.max_relative_error >= 1e-4 {
                bail!("max relative error {} exceeds 1e-4", report.max_relative_error);
            }
        }
        Command::LocalOnly { config, out, seed } => {
            let cfg = load_config(&config, seed)?;
            let logs = run_variants(&cfg, &[Variant::LocalOnly])?;
            if let Some(out) = out {
                emit_reports(&logs, &out)?;
            }
            print_summary(&logs);
        }
        Command::Plot { input } => {
            let logs = plot_from_dir(&input)?;
            print_summary(&logs);
        }
        Command::Synth { kind, out, vehicles, points, seed } => {
            write_csv(&out, &synth_trajectories(seed, vehicles, points, kind))?;
            eprintln!("wrote {vehicles} trajectories of {points} points to {}", out.display());
        }
    }
    Ok(())
}
