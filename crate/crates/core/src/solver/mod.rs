//! Solvers behind a common contract: the bi-fidelity trust-region method,
//! its single-fidelity parent, and two classical baselines.

mod baselines;
mod cache;
mod config;
mod trust;


pub use baselines::{AdamFd, NelderMead};
pub use cache::PointCache;
pub use config::{default_delta0, AdamConfig, NelderMeadConfig, SolverConfig};
pub use trust::{AstroRun, Fidelities};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::EstimatorError;
use crate::oracle::{BiFidelityOracle, OracleError, StreamKey};

pub const SOLVER_NAMES: [&str; 4] = ["astro-bfdf", "astro-df", "nelder-mead", "adam-fd"];

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("unknown solver `{0}`")]
    UnknownSolver(String),
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("budget exhausted")]
    Budget,
    #[error(transparent)]
    Oracle(OracleError),
    #[error(transparent)]
    Estimator(EstimatorError),
}

impl From<OracleError> for SolverError {
    fn from(e: OracleError) -> Self {
        if e.is_budget() {
            SolverError::Budget
        } else {
            SolverError::Oracle(e)
        }
    }
}

impl From<EstimatorError> for SolverError {
    fn from(e: EstimatorError) -> Self {
        match e {
            e if e.is_budget() => SolverError::Budget,
            EstimatorError::Oracle(o) => SolverError::Oracle(o),
            e => SolverError::Estimator(e),
        }
    }
}

/// What one run optimizes.
pub struct RunSpec<'a> {
    pub oracle: &'a dyn BiFidelityOracle,
    pub x0: Vec<f64>,
    pub delta_max: f64,
    /// Total budget in HF-equivalent units.
    pub budget: f64,
    pub stream: StreamKey,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    LfSuccess,
    HfSuccess,
    HfFailure,
    /// A Nelder-Mead or ADAM step.
    Baseline,
}

/// Which model produced the HF-branch candidate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CandidateSource {
    HfModel,
    LfModel,
}

/// Audit trail of one outer iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: u64,
    pub branch: Branch,
    pub candidate_source: Option<CandidateSource>,
    pub accepted: bool,
    pub rho_hat: Option<f64>,
    pub rho_hat_l: Option<f64>,
    pub model_grad_norm_h: Option<f64>,
    pub model_grad_norm_l: Option<f64>,
    /// `rho_hat_l >= eta` and `|grad M^l| >= eps_hat`.
    pub lf_guard: bool,
    /// `rho_hat >= eta` and `mu |grad M^h| >= delta_h`.
    pub hf_guard: bool,
    pub predicted_reduction: Option<f64>,
    pub cauchy_reduction: Option<f64>,
    /// LF inner-loop passes that drew samples.
    pub lf_attempts: u32,
    pub delta_h_before: f64,
    pub alpha_after: f64,
    pub delta_h_after: f64,
    pub delta_l_after: f64,
    pub incumbent_after: Vec<f64>,
    pub incumbent_estimate: f64,
    pub cumulative_cost: f64,
}

/// The incumbent right after it changed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub cost: f64,
    pub x: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub solver: String,
    pub budget: f64,
    pub x0: Vec<f64>,
    pub iterations: Vec<IterationRecord>,
    /// Starts with `x0` at cost 0.
    pub trajectory: Vec<TrajectoryPoint>,
    pub final_x: Vec<f64>,
    pub total_cost: f64,
    pub hf_calls: u64,
    pub lf_calls: u64,
}

impl RunHistory {
    pub fn new(solver: &str, x0: Vec<f64>, budget: f64) -> Self {
        RunHistory {
            solver: solver.to_string(),
            budget,
            trajectory: vec![TrajectoryPoint {
                cost: 0.0,
                x: x0.clone(),
            }],
            final_x: x0.clone(),
            x0,
            iterations: Vec::new(),
            total_cost: 0.0,
            hf_calls: 0,
            lf_calls: 0,
        }
    }

    /// Incumbent recommended once `cost` has been spent.
    pub fn incumbent_at(&self, cost: f64) -> &[f64] {
        let mut x = &self.trajectory[0].x;
        for p in &self.trajectory {
            if p.cost <= cost {
                x = &p.x;
            } else {
                break;
            }
        }
        x
    }

    pub(crate) fn move_to(&mut self, cost: f64, x: &[f64]) {
        if self.final_x != x {
            self.trajectory.push(TrajectoryPoint { cost, x: x.to_vec() });
            self.final_x = x.to_vec();
        }
    }
}

/// Stepping interface shared by all solvers.
pub trait Solver {
    /// Runs one iteration; `false` once the budget is spent.
    fn step(&mut self) -> Result<bool, SolverError>;
    fn history(&self) -> &RunHistory;
    fn into_history(self: Box<Self>) -> RunHistory;
}

pub fn initialize<'a>(
    solver_id: &str,
    spec: RunSpec<'a>,
    cfg: &SolverConfig,
) -> Result<Box<dyn Solver + 'a>, SolverError> {
    cfg.validate()?;
    if spec.x0.len() != spec.oracle.dim() {
        return Err(SolverError::Config(format!(
            "x0 has dimension {} but the problem has {}",
            spec.x0.len(),
            spec.oracle.dim()
        )));
    }
    Ok(match solver_id {
        "astro-bfdf" => Box::new(AstroRun::new(spec, cfg.clone(), Fidelities::Bi)?),
        "astro-df" => Box::new(AstroRun::new(spec, cfg.clone(), Fidelities::HighOnly)?),
        "nelder-mead" => Box::new(NelderMead::new(spec, cfg.clone())?),
        "adam-fd" => Box::new(AdamFd::new(spec, cfg.clone())?),
        other => return Err(SolverError::UnknownSolver(other.to_string())),
    })
}

/// Iterates until the budget is exhausted.
pub fn run(solver_id: &str, spec: RunSpec<'_>, cfg: &SolverConfig) -> Result<RunHistory, SolverError> {
    let mut s = initialize(solver_id, spec, cfg)?;
    while s.step()? {}
    Ok(s.into_history())
}
