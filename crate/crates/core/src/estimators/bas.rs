//! Adaptive sampling at a single design point.

use serde::{Deserialize, Serialize};

use super::bfmc::{min_count_for, predicted_cmc_size, solve_bfmc_plan, target_variance};
use super::{ClampedMoments, EstimateRecord, EstimatorError, Method, MomentAccumulator};
use super::SamplingConfig;
use crate::oracle::{OracleError, SamplingContext};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Fidelity {
    High,
    Low,
}

/// All draws taken at one point.
///
/// `hf[j]` and `lf[j]` come from replication `j`, so both vectors are
/// prefixes of the replication sequence and any `(N, V)` pair can be
/// re-evaluated later without new draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSamples {
    x: Vec<f64>,
    hf: Vec<f64>,
    lf: Vec<f64>,
    acc: MomentAccumulator,
}

impl PointSamples {
    pub fn new(x: Vec<f64>) -> Self {
        PointSamples {
            x,
            hf: Vec::new(),
            lf: Vec::new(),
            acc: MomentAccumulator::new(),
        }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn hf(&self) -> &[f64] {
        &self.hf
    }

    pub fn lf(&self) -> &[f64] {
        &self.lf
    }

    pub fn moments(&self) -> &MomentAccumulator {
        &self.acc
    }

    pub fn n_hf(&self) -> u64 {
        self.hf.len() as u64
    }

    pub fn n_lf(&self) -> u64 {
        self.lf.len() as u64
    }

    fn push_hf(&mut self, h: f64) {
        let j = self.hf.len();
        self.hf.push(h);
        self.acc.push_hf(h);
        if j < self.lf.len() {
            self.acc.push_cross(h, self.lf[j]);
        }
    }

    fn push_lf(&mut self, l: f64) {
        let j = self.lf.len();
        self.lf.push(l);
        self.acc.push_lf(l);
        if j < self.hf.len() {
            self.acc.push_cross(self.hf[j], l);
        }
    }

    /// Draws until at least `n` HF and `v` LF values are held.
    ///
    /// Replications needing both fidelities are drawn as pairs. On budget
    /// exhaustion the draws taken so far are kept.
    pub fn extend(&mut self, ctx: &mut SamplingContext<'_>, n: u64, v: u64) -> Result<(), OracleError> {
        let (n, v) = (n as usize, v as usize);
        let upto = n.max(v);
        let start = self.hf.len().min(self.lf.len());
        for j in start..upto {
            let need_h = j >= self.hf.len() && j < n;
            let need_l = j >= self.lf.len() && j < v;
            if need_h && need_l {
                let s = ctx.sample_paired(&self.x, j as u64)?;
                self.push_lf(s.lf_value.expect("paired draw has LF"));
                self.push_hf(s.hf_value.expect("paired draw has HF"));
            } else if need_h {
                let s = ctx.sample_hf(&self.x, j as u64)?;
                if let Some(l) = s.lf_value {
                    if j == self.lf.len() {
                        self.push_lf(l);
                    }
                }
                self.push_hf(s.hf_value.expect("HF draw has HF"));
            } else if need_l {
                let s = ctx.sample_lf_only(&self.x, j as u64)?;
                self.push_lf(s.lf_value.expect("LF draw has LF"));
            }
        }
        Ok(())
    }

    /// Estimate from the first `n` HF and `v` LF draws. For CMC `v` and `c`
    /// are ignored. Panics if the draws are not held.
    pub fn prefix_estimate(&self, method: Method, n: u64, v: u64, c: f64) -> EstimateRecord {
        let (nu, vu) = (n as usize, v as usize);
        assert!(nu >= 1 && nu <= self.hf.len(), "HF prefix {n} not available");
        match method {
            Method::Cmc => {
                let acc = MomentAccumulator::from_prefix(&self.hf[..nu], &[]);
                cmc_record(&acc, false)
            }
            Method::Bfmc => {
                assert!(vu > nu && vu <= self.lf.len(), "LF prefix {v} not available");
                let acc = MomentAccumulator::from_prefix(&self.hf[..nu], &self.lf[..vu]);
                bfmc_record(&acc, c, false)
            }
        }
    }

    /// Extends to `(n, v)` and returns the prefix estimate.
    pub fn estimate_with(
        &mut self,
        ctx: &mut SamplingContext<'_>,
        method: Method,
        n: u64,
        v: u64,
        c: f64,
    ) -> Result<EstimateRecord, EstimatorError> {
        let v = if method == Method::Bfmc { v } else { 0 };
        match self.extend(ctx, n, v) {
            Ok(()) => Ok(self.prefix_estimate(method, n, v, c)),
            Err(e) if e.is_budget() => truncated_record(self, e),
            Err(e) => Err(e.into()),
        }
    }

    /// Mean of the LF draws as a single-fidelity estimate.
    pub fn lf_record(&self) -> Option<EstimateRecord> {
        if self.lf.is_empty() {
            return None;
        }
        let w = self.acc.lf();
        Some(EstimateRecord {
            value: w.mean(),
            method: Method::Cmc,
            n: w.count(),
            v: w.count(),
            c: 0.0,
            plug_in_variance: w.variance() / w.count() as f64,
            truncated: false,
        })
    }
}

fn cmc_record(acc: &MomentAccumulator, truncated: bool) -> EstimateRecord {
    let n = acc.n_hf();
    EstimateRecord {
        value: acc.mean_h(),
        method: Method::Cmc,
        n,
        v: acc.v_lf_total(),
        c: 0.0,
        plug_in_variance: acc.sigma2_h() / n as f64,
        truncated,
    }
}

/// Requires `v > n`, so the paired prefix is the whole HF sample.
fn bfmc_record(acc: &MomentAccumulator, c: f64, truncated: bool) -> EstimateRecord {
    let (n, v) = (acc.n_hf(), acc.v_lf_total());
    let variance = ClampedMoments::from_accumulator(acc)
        .map(|m| m.variance(n, v, c))
        .unwrap_or(acc.sigma2_h() / n as f64);
    EstimateRecord {
        value: acc.mean_h() - c * (acc.mean_l_paired() - acc.mean_l()),
        method: Method::Bfmc,
        n,
        v,
        c,
        plug_in_variance: variance,
        truncated,
    }
}

fn truncated_record(s: &PointSamples, e: OracleError) -> Result<EstimateRecord, EstimatorError> {
    if s.n_hf() == 0 {
        return Err(e.into());
    }
    Ok(cmc_record(&s.acc, true))
}

/// Adaptive BFMC/CMC estimation of the HF function.
///
/// Starts from whatever draws `samples` already holds.
pub fn bas(
    samples: &mut PointSamples,
    ctx: &mut SamplingContext<'_>,
    delta: f64,
    cfg: &SamplingConfig,
) -> Result<EstimateRecord, EstimatorError> {
    if !(delta > 0.0) {
        return Err(EstimatorError::InvalidConfig(format!("radius {delta} is not positive")));
    }
    let target = target_variance(cfg, delta);
    let mut n = cfg
        .sample_floor(delta)
        .max(cfg.min_samples)
        .max(samples.n_hf());
    let mut v = (n + 1).max(samples.n_lf());
    macro_rules! draw {
        ($n:expr, $v:expr) => {
            match samples.extend(ctx, $n, $v) {
                Ok(()) => {}
                Err(e) if e.is_budget() => return truncated_record(samples, e),
                Err(e) => return Err(e.into()),
            }
        };
    }
    draw!(n, v);
    loop {
        let acc = samples.acc;
        let n_p = predicted_cmc_size(acc.sigma2_h().sqrt(), cfg, delta);
        let plan = solve_bfmc_plan(&acc, cfg, delta);
        if plan.is_feasible() && plan.cost <= cfg.w_h * n_p as f64 {
            v = v.max(n + 1);
            draw!(n, v);
            let acc = samples.acc;
            if let Some(m) = ClampedMoments::from_accumulator(&acc) {
                let c = m.coefficient();
                if m.variance(n, v, c) <= target {
                    return Ok(bfmc_record(&acc, c, false));
                }
            }
            if n + 1 >= plan.n_star {
                v += cfg.s_l;
            } else {
                n += cfg.s_h;
            }
            draw!(n, v);
        } else {
            if n >= n_p {
                return Ok(cmc_record(&acc, false));
            }
            n += cfg.s_h;
            draw!(n, 0);
        }
        // keep the counters in step with draws that arrived for free
        n = n.max(samples.n_hf());
        v = v.max(samples.n_lf());
    }
}

/// Single-fidelity adaptive sampling: the smallest `n` (in batches of `s_h`)
/// with `max(sigma0, sigma_hat) / sqrt(n) <= kappa delta^2 / sqrt(lambda_k)`.
pub fn cmc_adaptive(
    samples: &mut PointSamples,
    ctx: &mut SamplingContext<'_>,
    delta: f64,
    cfg: &SamplingConfig,
    fidelity: Fidelity,
) -> Result<EstimateRecord, EstimatorError> {
    if !(delta > 0.0) {
        return Err(EstimatorError::InvalidConfig(format!("radius {delta} is not positive")));
    }
    let target = target_variance(cfg, delta);
    let held = |s: &PointSamples| match fidelity {
        Fidelity::High => s.n_hf(),
        Fidelity::Low => s.n_lf(),
    };
    let mut n = cfg
        .sample_floor(delta)
        .max(cfg.min_samples)
        .max(held(samples));
    loop {
        let res = match fidelity {
            Fidelity::High => samples.extend(ctx, n, 0),
            Fidelity::Low => samples.extend(ctx, 0, n),
        };
        if let Err(e) = res {
            if !e.is_budget() || held(samples) == 0 {
                return Err(e.into());
            }
            let mut rec = finish(samples, fidelity);
            rec.truncated = true;
            return Ok(rec);
        }
        n = n.max(held(samples));
        let s2 = match fidelity {
            Fidelity::High => samples.acc.sigma2_h(),
            Fidelity::Low => samples.acc.sigma2_l(),
        };
        let s2 = s2.max(cfg.sigma0 * cfg.sigma0);
        if n >= min_count_for(s2, target) {
            return Ok(finish(samples, fidelity));
        }
        n += cfg.s_h;
    }
}

fn finish(samples: &PointSamples, fidelity: Fidelity) -> EstimateRecord {
    match fidelity {
        Fidelity::High => cmc_record(&samples.acc, false),
        Fidelity::Low => samples.lf_record().expect("LF draws present"),
    }
}
