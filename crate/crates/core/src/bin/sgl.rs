use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sgl::harness::plot::{emit_plot, PlotOptions};
use sgl::harness::{run, ExperimentConfig, ExperimentKind};
use sgl::Error;

/// Score-based diffusion experiments.
///
/// Configuration precedence, lowest first: built-in preset, `--config` file,
/// `key=value` overrides, then `--out`, `--seed` and `--workers`.
///
/// Exit codes: 0 success, 1 property failure, 2 config error, 3 numerical divergence.
#[derive(Debug, Parser)]
#[command(name = "sgl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// KL divergence along training for several seeds.
    KlDynamics(RunArgs),
    /// Identical training budgets for different mode distances.
    ModesShift(RunArgs),
    /// KL against network width.
    CapacitySweep(RunArgs),
    /// Scaling of the generalization bounds.
    Bounds(RunArgs),
    /// Monte-Carlo gap of random-feature sub-networks.
    McGap(RunArgs),
    /// Runs every registered property check.
    Verify(RunArgs),
    /// Prints the effective configuration as TOML.
    ShowConfig {
        experiment: String,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Line chart of CSV columns as SVG.
    Plot {
        csv: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long, required = true, num_args = 1..)]
        y: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log_x: bool,
        #[arg(long)]
        log_y: bool,
        #[arg(long)]
        title: Option<String>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Dotted overrides such as `train.learning_rate=0.1`.
    overrides: Vec<String>,
}

impl RunArgs {
    fn load(&self, kind: ExperimentKind) -> sgl::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(kind, self.config.as_deref(), &self.overrides)?;
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(kind: ExperimentKind, args: &RunArgs) -> sgl::Result<u8> {
    let cfg = args.load(kind)?;
    let report = run(&cfg)?;
    for m in &report.messages {
        println!("{m}");
    }
    println!("outputs in {}", cfg.out_dir.display());
    Ok(if report.all_pass() { 0 } else { 1 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::KlDynamics(a) => execute(ExperimentKind::KlDynamics, a),
        Command::ModesShift(a) => execute(ExperimentKind::ModesShift, a),
        Command::CapacitySweep(a) => execute(ExperimentKind::CapacitySweep, a),
        Command::Bounds(a) => execute(ExperimentKind::Bounds, a),
        Command::McGap(a) => execute(ExperimentKind::McGap, a),
        Command::Verify(a) => execute(ExperimentKind::Verify, a),
        Command::ShowConfig { experiment, args } => experiment
            .parse::<ExperimentKind>()
            .and_then(|k| args.load(k))
            .and_then(|c| c.to_toml_string())
            .map(|text| {
                print!("{text}");
                0
            }),
        Command::Plot {
            csv,
            x,
            y,
            out,
            log_x,
            log_y,
            title,
        } => {
            let ys: Vec<&str> = y.iter().map(String::as_str).collect();
            let opts = PlotOptions {
                log_x: *log_x,
                log_y: *log_y,
                title: title.clone(),
            };
            emit_plot(csv, x, &ys, out, &opts).map(|warnings| {
                for w in warnings {
                    eprintln!("warning: {w}");
                }
                0
            })
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code() as u8
}
