//! Macroreplicated experiments: configuration, parallel execution, post-hoc
//! evaluation of recommended solutions, persistence and summary curves.

mod profile;
mod results;

pub use profile::{gap_curve, solvability_profile, write_gap_tsv, write_profile_tsv, GapCurve, ProfileCurve, ProfileReport};
pub use results::{read_results, write_results, TrialRow};

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::oracle::{DesignPoint, PointKey, StreamKey, StreamRole};
use crate::problems::{parse_problem, Problem, ProblemError};
use crate::solver::{self, RunHistory, RunSpec, SolverConfig, SolverError, SOLVER_NAMES};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "BFDF_OUTPUT_DIR";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("solver failed on {trial}: {source}")]
    Solver { trial: String, source: SolverError },
    #[error("cannot parse configuration: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 3 for run or IO failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Problem(_) | HarnessError::Toml(_) => 2,
            HarnessError::Solver { source, .. } => match source {
                SolverError::UnknownSolver(_) | SolverError::Config(_) => 2,
                _ => 3,
            },
            HarnessError::Io(_) | HarnessError::Csv(_) | HarnessError::Json(_) => 3,
        }
    }
}

fn default_checkpoints() -> Vec<f64> {
    (1..=20).map(|i| i as f64 / 20.0).collect()
}

fn default_post_hoc_reps() -> u64 {
    1000
}

fn default_gap_alpha() -> f64 {
    0.01
}

/// One experiment, normally read from a TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problems: Vec<String>,
    pub solvers: Vec<String>,
    /// Per-trial budget in HF-equivalent units.
    pub budget: f64,
    pub macroreps: u64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_gap_alpha")]
    pub gap_alpha: f64,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: Vec<f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// HF replications per post-hoc estimate when no closed form exists.
    #[serde(default = "default_post_hoc_reps")]
    pub post_hoc_reps: u64,
    /// Keep full run histories in memory and write them as JSON lines.
    #[serde(default)]
    pub save_histories: bool,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.problems.is_empty() || self.solvers.is_empty() {
            return bad("need at least one problem and one solver".into());
        }
        for s in &self.solvers {
            if !SOLVER_NAMES.contains(&s.as_str()) {
                return bad(format!("unknown solver `{s}`"));
            }
        }
        for p in &self.problems {
            parse_problem(p)?;
        }
        if !(self.budget >= 0.0 && self.budget.is_finite()) {
            return bad("budget must be a non-negative number".into());
        }
        if self.macroreps == 0 {
            return bad("macroreps must be at least 1".into());
        }
        if !(self.gap_alpha > 0.0 && self.gap_alpha < 1.0) {
            return bad("gap_alpha must lie in (0, 1)".into());
        }
        if self.checkpoints.is_empty()
            || self.checkpoints.iter().any(|c| !(*c > 0.0 && *c <= 1.0))
            || self.checkpoints.windows(2).any(|w| w[0] >= w[1])
        {
            return bad("checkpoints must be strictly increasing within (0, 1]".into());
        }
        if self.post_hoc_reps == 0 {
            return bad("post_hoc_reps must be positive".into());
        }
        self.solver.validate().map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Explicit `output_dir`, else the environment default, else `results`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("results"))
    }
}

/// Identity of one (problem, solver, macrorep) trial.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrialKey {
    pub problem: String,
    pub solver: String,
    pub macrorep: u64,
    pub seed: u64,
}

impl TrialKey {
    pub fn label(&self) -> String {
        format!("{}/{}/{}", self.problem, self.solver, self.macrorep)
    }
}

/// Post-hoc objective estimates cached by exact coordinates.
pub struct PostHocEvaluator {
    problem: Box<dyn Problem>,
    stream: StreamKey,
    reps: u64,
    cache: Mutex<HashMap<PointKey, f64>>,
}

impl PostHocEvaluator {
    /// Uses a post-hoc stream, which never coincides with an optimization
    /// stream for the same problem.
    pub fn new(problem: Box<dyn Problem>, base_seed: u64, reps: u64) -> Self {
        let stream = StreamKey::for_role(base_seed, problem.tag(), StreamRole::PostHoc);
        PostHocEvaluator {
            problem,
            stream,
            reps,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn problem(&self) -> &dyn Problem {
        self.problem.as_ref()
    }

    /// Exact value when the problem has one, else a fixed-replication mean.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        if let Some(v) = self.problem.true_objective(x) {
            return v;
        }
        let key = DesignPoint::new(x.to_vec()).key();
        if let Some(v) = self.cache.lock().expect("cache lock").get(&key) {
            return *v;
        }
        let v = (0..self.reps)
            .map(|r| self.problem.hf(x, &mut self.stream.replication(r)))
            .sum::<f64>()
            / self.reps as f64;
        self.cache.lock().expect("cache lock").insert(key, v);
        v
    }
}

/// Everything an experiment produced.
pub struct ExperimentOutput {
    pub rows: Vec<TrialRow>,
    /// Filled when `save_histories` is set.
    pub histories: Vec<(TrialKey, RunHistory)>,
    pub manifest: Manifest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    /// SHA-256 of `blob <len>\0` followed by the CSV bytes.
    pub results_hash: String,
    pub trials: Vec<TrialKey>,
    pub version: String,
}

pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

fn trial_keys(cfg: &ExperimentConfig) -> Vec<TrialKey> {
    let mut out = Vec::new();
    for p in &cfg.problems {
        for s in &cfg.solvers {
            for m in 0..cfg.macroreps {
                out.push(TrialKey {
                    problem: p.clone(),
                    solver: s.clone(),
                    macrorep: m,
                    seed: cfg.base_seed + m,
                });
            }
        }
    }
    out
}

fn run_trial(
    cfg: &ExperimentConfig,
    key: &TrialKey,
    eval: &PostHocEvaluator,
) -> Result<(Vec<TrialRow>, RunHistory), HarnessError> {
    let problem = eval.problem();
    // Solvers share the stream of a macrorep, so they face common random numbers.
    let spec = RunSpec {
        oracle: problem,
        x0: problem.x0(),
        delta_max: problem.delta_max(),
        budget: cfg.budget,
        stream: StreamKey::for_role(key.seed, problem.tag(), StreamRole::Optimization),
    };
    let history = solver::run(&key.solver, spec, &cfg.solver).map_err(|source| HarnessError::Solver {
        trial: key.label(),
        source,
    })?;
    let f0 = eval.evaluate(&history.x0);
    let mut best = f0;
    let mut rows = Vec::with_capacity(cfg.checkpoints.len());
    for &frac in &cfg.checkpoints {
        let cost = frac * cfg.budget;
        let x = history.incumbent_at(cost).to_vec();
        let f = eval.evaluate(&x);
        best = best.min(f);
        rows.push(TrialRow {
            problem: key.problem.clone(),
            solver: key.solver.clone(),
            macrorep: key.macrorep,
            seed: key.seed,
            fraction: frac,
            cost: cost.min(history.total_cost),
            objective: f,
            best_objective: best,
            x0_objective: f0,
            x,
        });
    }
    Ok((rows, history))
}

/// Runs every trial, in parallel over `jobs` threads (0 = all cores).
/// Results are merged in trial order, so output does not depend on scheduling.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutput, HarnessError> {
    cfg.validate()?;
    let evaluators: HashMap<String, PostHocEvaluator> = cfg
        .problems
        .iter()
        .map(|p| Ok((p.clone(), PostHocEvaluator::new(parse_problem(p)?, cfg.base_seed, cfg.post_hoc_reps))))
        .collect::<Result<_, HarnessError>>()?;
    let keys = trial_keys(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let outcomes: Vec<Result<(Vec<TrialRow>, RunHistory), HarnessError>> = pool.install(|| {
        keys.par_iter()
            .map(|k| {
                let out = run_trial(cfg, k, &evaluators[&k.problem]);
                log::debug!("finished {}", k.label());
                out
            })
            .collect()
    });
    let mut rows = Vec::new();
    let mut histories = Vec::new();
    for (k, o) in keys.iter().zip(outcomes) {
        let (r, h) = o?;
        rows.extend(r);
        if cfg.save_histories {
            histories.push((k.clone(), h));
        }
    }
    let bytes = results::to_csv_bytes(&rows)?;
    let manifest = Manifest {
        config: cfg.clone(),
        results_hash: content_hash(&bytes),
        trials: keys,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    Ok(ExperimentOutput {
        rows,
        histories,
        manifest,
    })
}

/// Writes `results.csv`, `manifest.json` and, when kept, `histories.jsonl`.
pub fn persist(out: &ExperimentOutput, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    write_results(&out.rows, &dir.join("results.csv"))?;
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&out.manifest)?)?;
    if !out.histories.is_empty() {
        let mut text = String::new();
        for (k, h) in &out.histories {
            text.push_str(&serde_json::to_string(&serde_json::json!({ "trial": k, "history": h }))?);
            text.push('\n');
        }
        fs::write(dir.join("histories.jsonl"), text)?;
    }
    Ok(())
}
