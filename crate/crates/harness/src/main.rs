use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tmdp::navenv::Channel;
use tmdp_harness::config::ExperimentConfig;
use tmdp_harness::experiment::{self, channel_name};
use tmdp_harness::suites::{run_checks, CheckPlan};
use tmdp_harness::HarnessError;

#[derive(Parser)]
#[command(name = "tmdp", version, about = "Topological MDP experiments on grid navigation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training iterations per objective.
    #[arg(long)]
    iterations: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured TMDP exactly and dump values and policy.
    SolveExact(Common),
    /// Train a policy and write a checkpoint and training log.
    Train(Common),
    /// Monte Carlo evaluation of a checkpoint.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Checkpoint file; defaults to `<out>/checkpoint.bin`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run the slack sweep and write `sweep.csv` and `sweep.svg`.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Solve each point exactly instead of training.
        #[arg(long)]
        exact: bool,
    },
    /// Run the solver, gradient and advantage property suites.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        instances: usize,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::from_toml("")?,
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(n) = common.iterations {
        cfg.train.iterations = Some(n);
        cfg.train.iterations_per_objective.clear();
    }
    Ok(cfg)
}

fn print_values(values: impl Fn(Channel) -> (f64, f64)) {
    for ch in Channel::ALL {
        let (v, se) = values(ch);
        println!("{:<8} {v:.6} +/- {se:.6}", channel_name(ch));
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::SolveExact(common) => {
            let cfg = load(&common)?;
            let report = experiment::solve_exact(&cfg, &cfg.out)?;
            println!("max |V_lar - V_lagrangian| = {:e}", report.max_value_gap);
            println!("leaf value = {}", report.leaf_value);
            print_values(|ch| (report.values[ch as usize], 0.0));
        }
        Command::Train(common) => {
            let cfg = load(&common)?;
            let report = experiment::train(&cfg, &cfg.out)?;
            println!("phases {:?}", report.phases);
            println!("checkpoint {}", report.checkpoint.display());
        }
        Command::Evaluate { common, checkpoint } => {
            let cfg = load(&common)?;
            let path = checkpoint.unwrap_or_else(|| cfg.out.join("checkpoint.bin"));
            let est = experiment::evaluate(&cfg, &path, Some(&cfg.out))?;
            print_values(|ch| (est.mean(ch), est.std_err(ch)));
        }
        Command::Sweep { common, exact } => {
            let cfg = load(&common)?;
            let result = experiment::run_sweep(&cfg, exact || cfg.exact, &cfg.out)?;
            println!("{}", experiment::SWEEP_HEADER);
            print!("{}", std::fs::read_to_string(&result.csv).map_err(|e| HarnessError::io(&result.csv, e))?.lines().skip(1).fold(String::new(), |acc, l| acc + l + "\n"));
            println!("wrote {} and {}", display(&result.csv), display(&result.svg));
        }
        Command::Check { seed, instances } => {
            let lines = run_checks(&CheckPlan { seed, instances, ..CheckPlan::default() })?;
            for line in &lines {
                println!("{line}");
            }
            let failed = lines.iter().filter(|l| !l.passed).count();
            if failed > 0 {
                return Err(HarnessError::CheckFailed(format!("{failed} check(s) failed")));
            }
        }
    }
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
