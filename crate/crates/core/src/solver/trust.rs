//! Adaptive-sampling trust-region solvers.
//!
//! One implementation serves both the bi-fidelity method (LF inner loop,
//! BAS estimates, two models) and the single-fidelity parent (CMC adaptive
//! sampling, one model).

use super::{
    default_delta0, Branch, CandidateSource, IterationRecord, PointCache, RunHistory, RunSpec,
    Solver, SolverConfig, SolverError,
};
use crate::estimators::{bas, cmc_adaptive, EstimateRecord, Fidelity, Method, SamplingConfig};
use crate::model::{
    fit_interpolation, minimize_model, select_hf_design_set, select_lf_design_set, DesignSet,
    InterpModel, SubproblemResult,
};
use crate::oracle::SamplingContext;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fidelities {
    Bi,
    HighOnly,
}

pub struct AstroRun<'a> {
    ctx: SamplingContext<'a>,
    cache: PointCache,
    cfg: SolverConfig,
    mode: Fidelities,
    delta_max: f64,
    delta0: f64,
    kappa: Option<f64>,
    x: Vec<f64>,
    fx: f64,
    delta_h: f64,
    delta_l: f64,
    alpha: f64,
    k: u64,
    last_step: Option<Vec<f64>>,
    history: RunHistory,
    piloted: bool,
    done: bool,
}

struct LfAttempt {
    candidate: Vec<f64>,
    f_candidate: f64,
    rho: f64,
    grad_norm: f64,
    sub: SubproblemResult,
    success: bool,
}

impl<'a> AstroRun<'a> {
    pub fn new(spec: RunSpec<'a>, cfg: SolverConfig, mode: Fidelities) -> Result<Self, SolverError> {
        cfg.validate()?;
        let d = spec.x0.len();
        let delta_max = cfg.delta_max.unwrap_or(spec.delta_max);
        if !(delta_max > 0.0) {
            return Err(SolverError::Config("delta_max must be positive".into()));
        }
        let delta0 = cfg.delta0.unwrap_or_else(|| default_delta0(delta_max, d)).min(delta_max);
        spec.oracle
            .check_domain(&spec.x0)
            .map_err(|e| SolverError::Config(format!("x0 is not evaluable: {e}")))?;
        let name = match mode {
            Fidelities::Bi => "astro-bfdf",
            Fidelities::HighOnly => "astro-df",
        };
        let ctx = SamplingContext::new(spec.oracle, spec.stream, spec.budget)
            .with_common_random_numbers(cfg.crn);
        Ok(AstroRun {
            ctx,
            cache: PointCache::new(),
            alpha: cfg.alpha0,
            kappa: cfg.kappa,
            mode,
            delta_max,
            delta0,
            x: spec.x0.clone(),
            fx: f64::NAN,
            delta_h: delta0,
            delta_l: delta0,
            k: 0,
            last_step: None,
            history: RunHistory::new(name, spec.x0, spec.budget),
            piloted: false,
            done: false,
            cfg,
        })
    }

    pub fn delta_h(&self) -> f64 {
        self.delta_h
    }

    pub fn delta_l(&self) -> f64 {
        self.delta_l
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn incumbent(&self) -> &[f64] {
        &self.x
    }

    pub fn kappa(&self) -> Option<f64> {
        self.kappa
    }

    /// Overrides the correlation constant; used by tests to exercise gates.
    pub fn set_alpha(&mut self, alpha: f64) {
        self.alpha = alpha;
    }

    pub fn set_radii(&mut self, delta_h: f64, delta_l: f64) {
        self.delta_h = delta_h;
        self.delta_l = delta_l;
    }

    fn sampling(&self) -> SamplingConfig {
        let lambda = self.cfg.lambda_k(self.k, self.x.len());
        SamplingConfig::new(
            self.kappa.expect("pilot done"),
            lambda,
            self.cfg.sigma0,
            self.ctx.costs(),
        )
        .with_min_samples(self.cfg.min_samples(lambda))
    }

    /// Pilot run at `x0` fixing `kappa = |F(x0)| / delta0^2` (floored at sigma0).
    fn pilot(&mut self) -> Result<(), SolverError> {
        let lambda = self.cfg.lambda_k(0, self.x.len());
        let n0 = self.cfg.min_samples(lambda);
        let s = self.cache.get_mut(&self.x);
        s.extend(&mut self.ctx, n0, 0)?;
        let mean = s.moments().mean_h();
        self.fx = mean;
        if self.kappa.is_none() {
            self.kappa = Some((mean.abs() / (self.delta0 * self.delta0)).max(self.cfg.sigma0));
        }
        self.piloted = true;
        Ok(())
    }

    fn feasible(&self) -> impl Fn(&[f64]) -> bool + 'a {
        let oracle = self.ctx.oracle();
        move |x: &[f64]| oracle.check_domain(x).is_ok()
    }

    fn candidate(&self, step: &[f64]) -> Vec<f64> {
        let raw: Vec<f64> = self.x.iter().zip(step).map(|(a, b)| a + b).collect();
        self.ctx.oracle().project(&raw)
    }

    fn hf_design(&self, delta: f64) -> Option<DesignSet> {
        let cached = self.cache.hf_points_within(&self.x, delta);
        let set = select_hf_design_set(&self.x, delta, &cached, self.last_step.as_deref());
        let feasible = self.feasible();
        set.repair(&feasible)
            .or_else(|| DesignSet::coordinate(&self.x, delta).repair(&feasible))
    }

    fn lf_design(&self, delta: f64) -> Option<DesignSet> {
        select_lf_design_set(&self.x, delta).repair(self.feasible())
    }

    fn checked(rec: EstimateRecord) -> Result<EstimateRecord, SolverError> {
        if rec.truncated {
            Err(SolverError::Budget)
        } else {
            Ok(rec)
        }
    }

    fn bas_at(&mut self, x: &[f64], delta: f64, sc: &SamplingConfig) -> Result<EstimateRecord, SolverError> {
        let s = self.cache.get_mut(x);
        Self::checked(bas(s, &mut self.ctx, delta, sc)?)
    }

    fn cmc_at(
        &mut self,
        x: &[f64],
        delta: f64,
        sc: &SamplingConfig,
        fidelity: Fidelity,
    ) -> Result<EstimateRecord, SolverError> {
        let s = self.cache.get_mut(x);
        Self::checked(cmc_adaptive(s, &mut self.ctx, delta, sc, fidelity)?)
    }

    /// HF estimate under the governing sampling rule for this solver.
    fn hf_estimate(&mut self, x: &[f64], delta: f64, sc: &SamplingConfig) -> Result<EstimateRecord, SolverError> {
        match self.mode {
            Fidelities::Bi => self.bas_at(x, delta, sc),
            Fidelities::HighOnly => self.cmc_at(x, delta, sc, Fidelity::High),
        }
    }

    fn prefix_at(&mut self, x: &[f64], like: &EstimateRecord) -> Result<EstimateRecord, SolverError> {
        let s = self.cache.get_mut(x);
        let v = if like.method == Method::Bfmc { like.v } else { 0 };
        Self::checked(s.estimate_with(&mut self.ctx, like.method, like.n, v, like.c)?)
    }

    fn lf_attempt(&mut self, sc: &SamplingConfig) -> Result<Option<LfAttempt>, SolverError> {
        let dl = self.delta_l;
        let Some(set) = self.lf_design(dl) else { return Ok(None) };
        let mut values = Vec::with_capacity(set.points.len());
        for p in &set.points {
            values.push(self.cmc_at(p, dl, sc, Fidelity::Low)?.value);
        }
        let Ok(model) = fit_interpolation(&set, &values) else { return Ok(None) };
        let sub = minimize_model(&model, dl);
        let candidate = self.candidate(&sub.step);
        if candidate == self.x {
            return Ok(None);
        }
        let x = self.x.clone();
        let fs = self.bas_at(&candidate, dl, sc)?;
        let f0 = self.bas_at(&x, dl, sc)?;
        let red = model.value(&x) - model.value(&candidate);
        let floor = self.cfg.zeta * self.delta_h * self.delta_h;
        let rho = (f0.value - fs.value) / floor.max(red);
        let grad_norm = model.grad_norm();
        Ok(Some(LfAttempt {
            success: rho >= self.cfg.eta && grad_norm >= self.cfg.eps_hat,
            candidate,
            f_candidate: fs.value,
            rho,
            grad_norm,
            sub,
        }))
    }

    fn blank_record(&self) -> IterationRecord {
        IterationRecord {
            k: self.k,
            branch: Branch::HfFailure,
            candidate_source: None,
            accepted: false,
            rho_hat: None,
            rho_hat_l: None,
            model_grad_norm_h: None,
            model_grad_norm_l: None,
            lf_guard: false,
            hf_guard: false,
            predicted_reduction: None,
            cauchy_reduction: None,
            lf_attempts: 0,
            delta_h_before: self.delta_h,
            alpha_after: self.alpha,
            delta_h_after: self.delta_h,
            delta_l_after: self.delta_l,
            incumbent_after: self.x.clone(),
            incumbent_estimate: self.fx,
            cumulative_cost: 0.0,
        }
    }

    fn move_to(&mut self, candidate: Vec<f64>, value: f64) {
        self.last_step = Some(candidate.iter().zip(&self.x).map(|(a, b)| a - b).collect());
        self.x = candidate;
        self.fx = value;
    }

    fn iterate(&mut self) -> Result<IterationRecord, SolverError> {
        let sc = self.sampling();
        let g_e = self.cfg.gamma_expand;
        let g_s = self.cfg.gamma_shrink;
        let mut rec = self.blank_record();

        if self.mode == Fidelities::Bi {
            let mut success = None;
            while self.alpha >= self.cfg.alpha_th {
                rec.lf_attempts += 1;
                if let Some(a) = self.lf_attempt(&sc)? {
                    rec.rho_hat_l = Some(a.rho);
                    rec.model_grad_norm_l = Some(a.grad_norm);
                    if a.success {
                        success = Some(a);
                        break;
                    }
                }
                self.delta_l *= g_s;
                self.alpha *= g_s;
            }
            self.delta_h = self.delta_h.max(self.delta_l);
            if let Some(a) = success {
                rec.branch = Branch::LfSuccess;
                rec.accepted = true;
                rec.lf_guard = true;
                rec.predicted_reduction = Some(a.sub.predicted_reduction);
                rec.cauchy_reduction = Some(a.sub.cauchy_reduction);
                self.move_to(a.candidate, a.f_candidate);
                self.delta_l = (g_e * self.delta_l).min(self.delta_max);
                self.alpha = (g_e * self.alpha).min(1.0);
                self.delta_h = self.delta_h.max(self.delta_l);
                return Ok(rec);
            }
        }

        let dh = self.delta_h;
        rec.delta_h_before = dh;
        let Some(set) = self.hf_design(dh) else {
            self.delta_h = g_s * dh;
            self.delta_l = self.delta_l.min(self.delta_h);
            return Ok(rec);
        };
        let x = self.x.clone();
        let center = self.hf_estimate(&x, dh, &sc)?;
        let mut hf_values = vec![center.value];
        for p in &set.points[1..] {
            let r = match self.mode {
                Fidelities::Bi => self.prefix_at(p, &center)?,
                Fidelities::HighOnly => self.cmc_at(p, dh, &sc, Fidelity::High)?,
            };
            hf_values.push(r.value);
        }
        let lf_values = if self.mode == Fidelities::Bi {
            let mut v = Vec::with_capacity(set.points.len());
            for p in &set.points {
                v.push(self.cmc_at(p, dh, &sc, Fidelity::Low)?.value);
            }
            Some(v)
        } else {
            None
        };

        let Ok(model_h) = fit_interpolation(&set, &hf_values) else {
            self.delta_h = g_s * dh;
            self.delta_l = self.delta_l.min(self.delta_h);
            return Ok(rec);
        };
        let model_l: Option<InterpModel> =
            lf_values.and_then(|v| fit_interpolation(&set, &v).ok());

        let sub_h = minimize_model(&model_h, dh);
        let cand_h = self.candidate(&sub_h.step);
        let f_h = self.hf_estimate(&cand_h, dh, &sc)?;
        let mut chosen = (cand_h.clone(), f_h.value, CandidateSource::HfModel, sub_h.clone());

        if let Some(ml) = &model_l {
            let sub_l = minimize_model(ml, dh);
            let cand_l = self.candidate(&sub_l.step);
            let f_l = if cand_l == cand_h { f_h } else { self.hf_estimate(&cand_l, dh, &sc)? };
            if f_l.value < chosen.1 {
                chosen = (cand_l.clone(), f_l.value, CandidateSource::LfModel, sub_l.clone());
            }
            let red_l = ml.value(&x) - ml.value(&cand_l);
            let rho_l = (center.value - f_l.value) / (self.cfg.zeta * dh * dh).max(red_l);
            let gl = ml.grad_norm();
            rec.rho_hat_l = Some(rho_l);
            rec.model_grad_norm_l = Some(gl);
            rec.lf_guard = rho_l >= self.cfg.eta && gl >= self.cfg.eps_hat;
            self.alpha = if rec.lf_guard { (g_e * self.alpha).min(1.0) } else { g_s * self.alpha };
        } else if self.mode == Fidelities::Bi {
            self.alpha *= g_s;
        }

        let (cand, f_cand, source, sub) = chosen;
        let den = model_h.value(&x) - model_h.value(&cand);
        let rho = if den > 0.0 && cand != x {
            Some((center.value - f_cand) / den)
        } else {
            None
        };
        let gh = model_h.grad_norm();
        rec.rho_hat = rho;
        rec.model_grad_norm_h = Some(gh);
        rec.candidate_source = Some(source);
        rec.predicted_reduction = Some(sub.predicted_reduction);
        rec.cauchy_reduction = Some(sub.cauchy_reduction);
        rec.hf_guard = rho.is_some_and(|r| r >= self.cfg.eta) && self.cfg.mu * gh >= dh;
        if rec.hf_guard {
            rec.branch = Branch::HfSuccess;
            rec.accepted = true;
            self.move_to(cand, f_cand);
            self.delta_h = (g_e * dh).min(self.delta_max);
        } else {
            rec.branch = Branch::HfFailure;
            self.fx = center.value;
            self.delta_h = g_s * dh;
        }
        self.delta_l = self.delta_l.min(self.delta_h);
        if self.mode == Fidelities::HighOnly {
            self.delta_l = self.delta_h;
        }
        Ok(rec)
    }

    fn finish_record(&mut self, mut rec: IterationRecord) {
        rec.alpha_after = self.alpha;
        rec.delta_h_after = self.delta_h;
        rec.delta_l_after = self.delta_l;
        rec.incumbent_after = self.x.clone();
        rec.incumbent_estimate = self.fx;
        rec.cumulative_cost = self.ctx.total_cost();
        if rec.accepted {
            let cost = rec.cumulative_cost;
            self.history.move_to(cost, &self.x);
        }
        self.history.iterations.push(rec);
    }

    fn sync_totals(&mut self) {
        let l = self.ctx.ledger();
        self.history.total_cost = l.total_cost();
        self.history.hf_calls = l.hf_calls_total;
        self.history.lf_calls = l.lf_calls_total;
    }
}

impl Solver for AstroRun<'_> {
    fn step(&mut self) -> Result<bool, SolverError> {
        if self.done {
            return Ok(false);
        }
        if !self.piloted {
            match self.pilot() {
                Ok(()) => {}
                Err(SolverError::Budget) => {
                    self.done = true;
                    self.sync_totals();
                    return Ok(false);
                }
                Err(e) => return Err(e),
            }
        }
        let result = self.iterate();
        match result {
            Ok(rec) => {
                self.finish_record(rec);
                self.k += 1;
                self.sync_totals();
                Ok(true)
            }
            Err(SolverError::Budget) => {
                self.done = true;
                self.sync_totals();
                Ok(false)
            }
            Err(e) => Err(e),
        }
    }

    fn history(&self) -> &RunHistory {
        &self.history
    }

    fn into_history(self: Box<Self>) -> RunHistory {
        self.history
    }
}
