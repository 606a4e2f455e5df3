use serde::{Deserialize, Serialize};

use super::SolverError;

/// Hyper-parameters shared by the trust-region solvers, plus the baseline
/// settings. Problem-dependent quantities default to `None` and are filled
/// from the problem at run time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub delta_max: Option<f64>,
    pub delta0: Option<f64>,
    pub kappa: Option<f64>,
    pub eta: f64,
    pub mu: f64,
    pub gamma_expand: f64,
    pub gamma_shrink: f64,
    pub alpha0: f64,
    pub alpha_th: f64,
    pub eps_hat: f64,
    pub zeta: f64,
    pub sigma0: f64,
    pub lambda_min: f64,
    pub kappa_fcd: f64,
    /// Use the same replication stream at every design point.
    pub crn: bool,
    pub nelder_mead: NelderMeadConfig,
    pub adam: AdamConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            delta_max: None,
            delta0: None,
            kappa: None,
            eta: 0.1,
            mu: 1000.0,
            gamma_expand: 1.5,
            gamma_shrink: 0.75,
            alpha0: 0.5,
            alpha_th: 0.3,
            eps_hat: 0.001,
            zeta: 0.01,
            sigma0: 0.1,
            lambda_min: 5.0,
            kappa_fcd: 1.0,
            crn: true,
            nelder_mead: NelderMeadConfig::default(),
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NelderMeadConfig {
    /// Replications per simplex vertex.
    pub reps: u64,
    pub reflect: f64,
    pub expand: f64,
    pub contract: f64,
    pub shrink: f64,
    /// Initial simplex edge as a fraction of `delta_max`.
    pub initial_spread: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        NelderMeadConfig {
            reps: 30,
            reflect: 1.0,
            expand: 2.0,
            contract: 0.5,
            shrink: 0.5,
            initial_spread: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    /// Replications per function evaluation.
    pub reps: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Central-difference step as a fraction of `delta_max`.
    pub fd_step: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            reps: 30,
            learning_rate: 0.5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            fd_step: 0.01,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::Config(m.to_string()));
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad("eta must lie in (0, 1)");
        }
        if !(self.mu > 0.0) {
            return bad("mu must be positive");
        }
        if !(self.gamma_expand > 1.0) {
            return bad("gamma_expand must exceed 1");
        }
        if !(self.gamma_shrink > 0.0 && self.gamma_shrink < 1.0) {
            return bad("gamma_shrink must lie in (0, 1)");
        }
        if !(self.alpha0 > 0.0 && self.alpha0 <= 1.0) {
            return bad("alpha0 must lie in (0, 1]");
        }
        if !(self.alpha_th > 0.0 && self.alpha_th < 1.0) {
            return bad("alpha_th must lie in (0, 1)");
        }
        if !(self.eps_hat > 0.0 && self.zeta > 0.0 && self.sigma0 > 0.0) {
            return bad("eps_hat, zeta and sigma0 must be positive");
        }
        if !(self.lambda_min >= 2.0) {
            return bad("lambda_min must be at least 2");
        }
        if !(self.kappa_fcd > 0.0 && self.kappa_fcd <= 1.0) {
            return bad("kappa_fcd must lie in (0, 1]");
        }
        for (name, v) in [("delta_max", self.delta_max), ("delta0", self.delta0), ("kappa", self.kappa)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(SolverError::Config(format!("{name} must be positive")));
                }
            }
        }
        if self.nelder_mead.reps == 0 || self.adam.reps == 0 {
            return bad("baseline replication counts must be positive");
        }
        Ok(())
    }

    /// `max{lambda_min, 2 log10(d + 0.5) max{1, log10(k + 0.1)^1.01}}`.
    pub fn lambda_k(&self, k: u64, d: usize) -> f64 {
        let lk = (k as f64 + 0.1).log10();
        let growth = if lk > 1.0 { lk.powf(1.01) } else { 1.0 };
        self.lambda_min.max(2.0 * (d as f64 + 0.5).log10() * growth)
    }

    /// Per-point HF sample floor implied by `lambda_k`.
    pub fn min_samples(&self, lambda_k: f64) -> u64 {
        (lambda_k.ceil() as u64).max(2)
    }
}

/// `10^{ceil(log10(delta_max^2) - 1) / d}`.
pub fn default_delta0(delta_max: f64, d: usize) -> f64 {
    10f64.powf(((delta_max * delta_max).log10() - 1.0).ceil() / d as f64)
}
