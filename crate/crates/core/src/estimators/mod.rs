//! Function estimation: moments, the BFMC variance law and the adaptive
//! sampling loops that choose between crude and bi-fidelity Monte Carlo.

mod bas;
mod bfmc;
mod moments;

pub use bas::{bas, cmc_adaptive, Fidelity, PointSamples};
pub use bfmc::{
    optimal_coefficient, predicted_cmc_size, solve_bfmc_plan, target_variance, var_bfmc,
    BfmcPlan, ClampedMoments, RHO_CLAMP,
};
pub use moments::{CrossWelford, MomentAccumulator, Welford};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::{FidelityCosts, OracleError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("sample sizes must be positive (n = {n}, v = {v})")]
    NonPositiveSampleSize { n: u64, v: u64 },
    #[error("low-fidelity variance is zero")]
    DegenerateLf,
    #[error("no draws in accumulator")]
    EmptyAccumulator,
    #[error("invalid sampling configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

impl EstimatorError {
    pub fn is_budget(&self) -> bool {
        matches!(self, EstimatorError::Oracle(e) if e.is_budget())
    }
}

/// Parameters of the adaptive sampling rules.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub kappa: f64,
    pub lambda_k: f64,
    pub sigma0: f64,
    pub s_h: u64,
    pub s_l: u64,
    pub w_h: f64,
    pub w_l: f64,
    /// Lower bound on the HF sample size at every point.
    pub min_samples: u64,
}

impl SamplingConfig {
    /// Batch sizes default to `s_h = 1`, `s_l = ceil(w_h / w_l)`, bumped to
    /// `s_h + 1` so that `s_h < s_l` holds when the fidelities cost the same.
    pub fn new(kappa: f64, lambda_k: f64, sigma0: f64, costs: FidelityCosts) -> Self {
        let s_h = 1;
        let ratio = (costs.w_h / costs.w_l).ceil();
        let s_l = if ratio.is_finite() { (ratio as u64).max(s_h + 1) } else { s_h + 1 };
        SamplingConfig {
            kappa,
            lambda_k,
            sigma0,
            s_h,
            s_l,
            w_h: costs.w_h,
            w_l: costs.w_l,
            min_samples: 1,
        }
    }

    pub fn with_min_samples(mut self, n: u64) -> Self {
        self.min_samples = n.max(1);
        self
    }

    pub fn validate(&self) -> Result<(), EstimatorError> {
        let bad = |m: &str| Err(EstimatorError::InvalidConfig(m.to_string()));
        if !(self.kappa > 0.0) {
            return bad("kappa must be positive");
        }
        if !(self.lambda_k >= 2.0) {
            return bad("lambda_k must be at least 2");
        }
        if !(self.sigma0 > 0.0) {
            return bad("sigma0 must be positive");
        }
        if self.s_h < 1 || self.s_h >= self.s_l {
            return bad("batch sizes need 1 <= s_h < s_l");
        }
        if !(self.w_h > 0.0 && self.w_l > 0.0) {
            return bad("call costs must be positive");
        }
        Ok(())
    }

    /// `ceil(sigma0^2 lambda_k / (kappa^2 delta^4))`, at least one.
    pub fn sample_floor(&self, delta: f64) -> u64 {
        bfmc::min_count_for(self.sigma0 * self.sigma0, target_variance(self, delta))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Cmc,
    Bfmc,
}

/// A function estimate at one point.
///
/// For LF-only estimates `n` counts LF draws and `v` equals `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub value: f64,
    pub method: Method,
    pub n: u64,
    pub v: u64,
    pub c: f64,
    pub plug_in_variance: f64,
    /// The budget ran out before the stopping rule was met.
    pub truncated: bool,
}

/// Mean of the HF draws.
pub fn cmc_mean(acc: &MomentAccumulator) -> Result<f64, EstimatorError> {
    if acc.n_hf() == 0 {
        return Err(EstimatorError::EmptyAccumulator);
    }
    Ok(acc.mean_h())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cmc_mean_small_cases() {
        let acc = MomentAccumulator::from_prefix(&[1.0, 2.0, 3.0], &[]);
        assert_eq!(cmc_mean(&acc).unwrap(), 2.0);
        let acc = MomentAccumulator::from_prefix(&[5.0], &[]);
        assert_eq!(cmc_mean(&acc).unwrap(), 5.0);
        assert_eq!(acc.sigma2_h(), 0.0);
        assert_eq!(
            cmc_mean(&MomentAccumulator::new()),
            Err(EstimatorError::EmptyAccumulator)
        );
    }

    #[test]
    fn cmc_mean_of_gaussian_draws() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(3);
        let d = Normal::new(7.0, 2.0).unwrap();
        let xs: Vec<f64> = (0..10_000).map(|_| d.sample(&mut rng)).collect();
        let m = cmc_mean(&MomentAccumulator::from_prefix(&xs, &[])).unwrap();
        assert!((m - 7.0).abs() < 0.08, "{m}");
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = SamplingConfig::new(1.0, 5.0, 0.1, FidelityCosts::new(1.0, 0.1));
        assert_eq!((c.s_h, c.s_l), (1, 10));
        assert!(c.validate().is_ok());
        let same = SamplingConfig::new(1.0, 5.0, 0.1, FidelityCosts::new(1.0, 1.0));
        assert_eq!(same.s_l, 2);
        assert!(same.validate().is_ok());
        let mut bad = c;
        bad.kappa = 0.0;
        assert!(bad.validate().is_err());
        let mut bad = c;
        bad.lambda_k = 1.5;
        assert!(bad.validate().is_err());
        assert_eq!(c.sample_floor(1.0), 1);
        // 0.01 * 5 / (1 * 0.1^4) = 500
        assert_eq!(c.sample_floor(0.1), 500);
    }
}
