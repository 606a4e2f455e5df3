use std::path::PathBuf;
use std::process::ExitCode;

use bfdf_core::harness::{self, ExperimentConfig, HarnessError};
use bfdf_core::problems::list_problems;
use bfdf_core::solver::SOLVER_NAMES;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bfdf", version, about = "Bi-fidelity stochastic optimization benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Problem families and their default parameters.
    ListProblems,
    ListSolvers,
    /// Run every (problem, solver, macrorep) trial of an experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Overrides the config's output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Solvability profile of a finished experiment.
    Profile {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        /// Also write the table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean optimality gap per solver on one problem.
    Gap {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        problem: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::ListProblems => {
            for (name, defaults) in list_problems() {
                println!("{name}\t{defaults}");
            }
        }
        Command::ListSolvers => {
            for name in SOLVER_NAMES {
                println!("{name}");
            }
        }
        Command::Run { config, jobs, output } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if output.is_some() {
                cfg.output_dir = output;
            }
            let dir = cfg.resolved_output_dir();
            let out = harness::run_experiment(&cfg, jobs.max(1))?;
            harness::persist(&out, &dir)?;
            println!("{} rows written to {}", out.rows.len(), dir.display());
            println!("results sha256 {}", out.manifest.results_hash);
        }
        Command::Profile { results, alpha, out } => {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(HarnessError::Config(format!("alpha must lie in (0, 1), got {alpha}")));
            }
            let rows = harness::read_results(&results.join("results.csv"))?;
            let report = harness::solvability_profile(&rows, alpha);
            for p in &report.excluded {
                eprintln!("excluded {p}: start point already optimal");
            }
            println!("solver\tfraction\tsolved\thalf_width");
            for c in &report.curves {
                for i in 0..c.fractions.len() {
                    println!("{}\t{:.2}\t{:.4}\t{:.4}", c.solver, c.fractions[i], c.solved[i], c.half_width[i]);
                }
            }
            if let Some(path) = out {
                harness::write_profile_tsv(&report.curves, &path)?;
            }
        }
        Command::Gap { results, problem, out } => {
            let rows = harness::read_results(&results.join("results.csv"))?;
            let curves = harness::gap_curve(&rows, &problem)?;
            println!("solver\tfraction\tmean_gap\thalf_width");
            for c in &curves {
                for i in 0..c.fractions.len() {
                    println!("{}\t{:.2}\t{:.4}\t{:.4}", c.solver, c.fractions[i], c.mean_gap[i], c.half_width[i]);
                }
            }
            if let Some(path) = out {
                harness::write_gap_tsv(&curves, &path)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
