use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use handeye_core::{MinWeight, SelectionStrategy, SolverKind};
use handeye_harness::calibrate::{calibrate, CalibrateOptions};
use handeye_harness::dataset::write_dataset;
use handeye_harness::sweep::cmd_sweep;
use handeye_harness::validate::{format_report, validate_noise};
use handeye_harness::{ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(name = "handeye", version, about = "Motion-based extrinsic calibration experiments")]
struct Cli {
    /// Experiment config (JSON). Defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set noise.drift_rate=[0,0.025]`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed, overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write simulated trajectory pairs and manifests.
    Simulate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrate one pair of TUM trajectories.
    Calibrate {
        traj1: PathBuf,
        traj2: PathBuf,
        #[arg(long, default_value = "B5")]
        strategy: SelectionStrategy,
        #[arg(long, default_value = "dnlo")]
        solver: SolverKind,
        /// DNLO inlier threshold on the squared pair residual.
        #[arg(long)]
        c: Option<f64>,
        /// DNLO minimum weight sum: a count, or a fraction of |S| if in (0, 1).
        #[arg(long)]
        d: Option<f64>,
        /// Manifest (or `tx ty tz qx qy qz qw` file) for absolute errors.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        /// Timestamp association tolerance in seconds.
        #[arg(long, default_value_t = 0.02)]
        tolerance: f64,
        /// Print a one-row CSV instead of text.
        #[arg(long)]
        csv: bool,
    },
    /// Run the strategy x solver x noise sweep.
    Sweep {
        #[arg(long)]
        out: PathBuf,
        /// Use a dataset written by `simulate` instead of generating one.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Report RMS ATE of the noisy trajectories.
    ValidateNoise,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    for o in &cli.overrides {
        config.apply_override(o)?;
    }
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<i32, HarnessError> {
    let config = load_config(&cli)?;
    match cli.command {
        Command::Simulate { out } => {
            let index = write_dataset(&config, &out)?;
            println!("wrote {} entries to {}", index.entries.len(), out.display());
            Ok(0)
        }
        Command::Calibrate {
            traj1,
            traj2,
            strategy,
            solver,
            c,
            d,
            ground_truth,
            tolerance,
            csv,
        } => {
            let mut dnlo = config.dnlo.params();
            if let Some(c) = c {
                dnlo.c = c;
            }
            if let Some(d) = d {
                dnlo.d = MinWeight::from_cli_value(d);
            }
            let opts = CalibrateOptions {
                strategy,
                solver,
                dnlo,
                ground_truth,
                tolerance,
            };
            let report = calibrate(&traj1, &traj2, &opts)?;
            print!("{}", if csv { report.to_csv() } else { report.to_text() });
            if !report.converged {
                eprintln!("error: solver did not converge");
            }
            Ok(report.exit_code())
        }
        Command::Sweep { out, dataset, jobs } => {
            if let Some(n) = jobs {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| HarnessError::Config(e.to_string()))?;
            }
            let records = cmd_sweep(&config, &out, dataset.as_deref())?;
            let failed = records.iter().filter(|r| r.errors.is_none()).count();
            println!("{} runs ({failed} failed) written to {}", records.len(), out.display());
            Ok(0)
        }
        Command::ValidateNoise => {
            config.validate()?;
            print!("{}", format_report(&validate_noise(&config)));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
