use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use guidelab::probe::{model_probe, schedule_csv, Quantity};
use guidelab::verify::DEFAULT_SEED;
use guidelab::{run_experiment, run_verification_suite, ExperimentConfig, Overrides, VerifyOptions};
use guidelab_core::schedule::{Schedule, DEFAULT_C0, DEFAULT_C1, DEFAULT_STEPS};

#[derive(Parser)]
#[command(name = "guidelab", version, about = "Guided diffusion sampling on analytic models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its artifact directory.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        record_trajectories: bool,
        #[arg(long)]
        decouple_noise: bool,
    },
    /// Run named identity checks (all when none are given).
    Verify {
        names: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
    Schedule {
        #[command(subcommand)]
        action: ScheduleAction,
    },
    Model {
        #[command(subcommand)]
        action: ModelAction,
    },
}

#[derive(clap::Args)]
struct Common {
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Divide trial counts by 10.
    #[arg(long)]
    fast: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ScheduleAction {
    /// Print `n, alpha_bar, beta, t` as CSV.
    Dump {
        #[arg(long, default_value_t = DEFAULT_STEPS)]
        n_steps: usize,
        #[arg(long, default_value_t = DEFAULT_C0)]
        c0: f64,
        #[arg(long, default_value_t = DEFAULT_C1)]
        c1: f64,
    },
}

#[derive(Subcommand)]
enum ModelAction {
    /// Evaluate a quantity of the config's model on a grid and print CSV.
    Probe {
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Quantity::Logpdf)]
        quantity: Quantity,
        /// Model times (signal fractions).
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.5,0.9")]
        t: Vec<f64>,
        #[arg(long, default_value_t = -4.0, allow_hyphen_values = true)]
        lo: f64,
        #[arg(long, default_value_t = 4.0, allow_hyphen_values = true)]
        hi: f64,
        #[arg(long, default_value_t = 81)]
        points: usize,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run {
            config,
            common,
            record_trajectories,
            decouple_noise,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let cfg = Overrides {
                seed: common.seed,
                fast: common.fast,
                out: common.out,
                record_trajectories,
                decouple_noise,
            }
            .apply(cfg);
            let out = run_experiment(&cfg)?;
            println!("wrote {}", out.dir.display());
            Ok(true)
        }
        Command::Verify { names, common } => {
            let opts = VerifyOptions {
                seed: common.seed.unwrap_or(DEFAULT_SEED),
                fast: common.fast,
            };
            let out = common.out.unwrap_or_else(|| PathBuf::from("."));
            let rows = run_verification_suite(&names, &opts, &out)?;
            Ok(rows.iter().all(|r| r.passed))
        }
        Command::Schedule {
            action: ScheduleAction::Dump { n_steps, c0, c1 },
        } => {
            print!("{}", schedule_csv(&Schedule::new(n_steps, c0, c1)?)?);
            Ok(true)
        }
        Command::Model {
            action:
                ModelAction::Probe {
                    config,
                    quantity,
                    t,
                    lo,
                    hi,
                    points,
                },
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let built = cfg.build_model().context("building model")?;
            print!("{}", model_probe(&built, quantity, &t, lo, hi, points)?);
            Ok(true)
        }
    }
}
