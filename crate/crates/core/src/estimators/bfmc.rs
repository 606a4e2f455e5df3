//! Bi-fidelity Monte Carlo variance algebra and the cost-allocation plan.

use serde::{Deserialize, Serialize};

use super::{EstimatorError, MomentAccumulator, SamplingConfig};

/// Largest correlation magnitude used when planning.
pub const RHO_CLAMP: f64 = 0.999;

/// Variance of `mean_h(n) - c (mean_l(n) - mean_l(v))` where the first
/// `min(n, v)` LF draws are paired with HF draws.
pub fn var_bfmc(
    sigma2_h: f64,
    sigma2_l: f64,
    sigma_hl: f64,
    n: u64,
    v: u64,
    c: f64,
) -> Result<f64, EstimatorError> {
    if n == 0 || v == 0 {
        return Err(EstimatorError::NonPositiveSampleSize { n, v });
    }
    let nf = n as f64;
    let vf = v as f64;
    let mx = nf.max(vf);
    Ok(sigma2_h / nf
        + c * c * (1.0 / nf + 1.0 / vf - 2.0 / mx) * sigma2_l
        + 2.0 * c * (1.0 / mx - 1.0 / nf) * sigma_hl)
}

/// Variance-minimizing coefficient `sigma_hl / sigma2_l` (valid for any v > n).
pub fn optimal_coefficient(sigma2_l: f64, sigma_hl: f64) -> Result<f64, EstimatorError> {
    if !(sigma2_l > 0.0) {
        return Err(EstimatorError::DegenerateLf);
    }
    Ok(sigma_hl / sigma2_l)
}

/// Target variance `kappa^2 delta^4 / lambda_k`.
pub fn target_variance(cfg: &SamplingConfig, delta: f64) -> f64 {
    cfg.kappa * cfg.kappa * delta.powi(4) / cfg.lambda_k
}

const MAX_COUNT: f64 = 1e15;

/// Smallest `m >= 1` with `variance_numerator / m <= target`.
pub(crate) fn min_count_for(variance_numerator: f64, target: f64) -> u64 {
    if !(variance_numerator > 0.0) {
        return 1;
    }
    if !(target > 0.0) {
        return MAX_COUNT as u64;
    }
    let q = variance_numerator / target;
    if q >= MAX_COUNT {
        return MAX_COUNT as u64;
    }
    // tolerate representation error on exact integer ratios
    let m = (q * (1.0 - 1e-12)).ceil().max(1.0);
    m as u64
}

/// Predicted CMC sample size: smallest `n` with
/// `sigma_hat_h / sqrt(n) <= kappa delta^2 / sqrt(lambda_k)`.
pub fn predicted_cmc_size(sigma_hat_h: f64, cfg: &SamplingConfig, delta: f64) -> u64 {
    min_count_for(sigma_hat_h * sigma_hat_h, target_variance(cfg, delta))
}

/// Sample sizes and coefficient proposed for BFMC.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BfmcPlan {
    pub n_star: u64,
    pub v_star: u64,
    pub c_star: f64,
    /// `w_h n_star + w_l v_star`; infinite for the degenerate sentinel.
    pub cost: f64,
}

impl BfmcPlan {
    pub fn infeasible() -> Self {
        BfmcPlan {
            n_star: 0,
            v_star: 0,
            c_star: 0.0,
            cost: f64::INFINITY,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.cost.is_finite()
    }
}

/// Plug-in moment estimates after clamping the correlation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClampedMoments {
    pub sigma2_h: f64,
    pub sigma2_l: f64,
    pub sigma_hl: f64,
}

impl ClampedMoments {
    pub fn from_accumulator(acc: &MomentAccumulator) -> Option<Self> {
        Self::new(acc.sigma2_h(), acc.sigma2_l(), acc.sigma_hl())
    }

    /// `None` when the LF variance is numerically zero.
    pub fn new(sigma2_h: f64, sigma2_l: f64, sigma_hl: f64) -> Option<Self> {
        if !(sigma2_l > 1e-14 * sigma2_h.max(1e-300)) || !sigma2_l.is_finite() {
            return None;
        }
        let bound = RHO_CLAMP * (sigma2_h * sigma2_l).sqrt();
        Some(ClampedMoments {
            sigma2_h,
            sigma2_l,
            sigma_hl: sigma_hl.clamp(-bound, bound),
        })
    }

    pub fn coefficient(&self) -> f64 {
        self.sigma_hl / self.sigma2_l
    }

    /// `sigma_hl^2 / sigma2_l`, the variance removable by LF draws.
    pub fn explained(&self) -> f64 {
        self.sigma_hl * self.sigma_hl / self.sigma2_l
    }

    pub fn variance(&self, n: u64, v: u64, c: f64) -> f64 {
        var_bfmc(self.sigma2_h, self.sigma2_l, self.sigma_hl, n.max(1), v.max(1), c)
            .unwrap_or(f64::INFINITY)
    }
}

/// Approximately solves
/// `min w_h n + w_l v  s.t.  Var(n, v, c) <= target, n >= n_cur, v >= max(v_cur, n+1)`.
///
/// With `c = c*` the variance is `a/n + b/v` where `b = sigma_hl^2 / sigma2_l`
/// and `a = sigma2_h - b`. For fixed `n` the cheapest feasible `v` is explicit,
/// so the search runs over `n` only: the stationary point of the continuous
/// relaxation, the bounds, and a logarithmic grid, each refined locally.
/// `n` is capped at `max(n_cur, n_cmc)` since larger plans cannot beat CMC.
pub fn solve_bfmc_plan(acc: &MomentAccumulator, cfg: &SamplingConfig, delta: f64) -> BfmcPlan {
    let n_cur = acc.n_hf();
    let v_cur = acc.v_lf_total();
    // LF draws lagging behind HF draws are fine: the plan tops them up to n+1
    if acc.n_paired() < 2 || v_cur < 2 || !(delta > 0.0) {
        return BfmcPlan::infeasible();
    }
    let Some(m) = ClampedMoments::from_accumulator(acc) else {
        return BfmcPlan::infeasible();
    };
    let n_cmc = predicted_cmc_size(acc.sigma2_h().sqrt(), cfg, delta);
    plan_with_moments(&m, n_cur, v_cur, n_cmc, cfg, delta)
}

pub(crate) fn plan_with_moments(
    m: &ClampedMoments,
    n_cur: u64,
    v_cur: u64,
    n_cmc: u64,
    cfg: &SamplingConfig,
    delta: f64,
) -> BfmcPlan {
    let target = target_variance(cfg, delta);
    let c = m.coefficient();
    let b = m.explained();
    let a = (m.sigma2_h - b).max(0.0);
    let (w_h, w_l) = (cfg.w_h, cfg.w_l);
    let n_cur = n_cur.max(1);
    let n_hi = n_cur.max(n_cmc);

    let evaluate = |n: u64| -> Option<BfmcPlan> {
        if n < n_cur || n > n_hi {
            return None;
        }
        let nf = n as f64;
        let v_req = if b > 0.0 {
            let rem = target - a / nf;
            if !(rem > 0.0) {
                return None;
            }
            min_count_for(b, rem)
        } else {
            if a / nf > target * (1.0 + 1e-12) {
                return None;
            }
            1
        };
        let mut v = v_req.max(v_cur).max(n + 1);
        // round-off repair against the exact variance expression
        let mut guard = 0;
        while m.variance(n, v, c) > target * (1.0 + 1e-12) {
            v = v + 1 + v / 1_000_000;
            guard += 1;
            if guard > 64 {
                return None;
            }
        }
        Some(BfmcPlan {
            n_star: n,
            v_star: v,
            c_star: c,
            cost: w_h * nf + w_l * v as f64,
        })
    };

    let mut candidates: Vec<u64> = vec![n_cur, n_hi];
    let n_lo = if a > 0.0 {
        n_cur.max(min_count_for(a, target))
    } else {
        n_cur
    };
    candidates.push(n_lo);
    // stationary point of the continuous relaxation
    if a > 0.0 && b > 0.0 {
        let ratio = ((w_h / w_l) * (b / a)).sqrt();
        let n_cont = (a + b / ratio) / target;
        if n_cont.is_finite() && n_cont < 1e15 {
            candidates.push(n_cont.floor() as u64);
            candidates.push(n_cont.ceil() as u64);
        }
    }
    if n_hi > n_lo {
        let steps = 32;
        let (lo, hi) = ((n_lo as f64).ln(), (n_hi as f64).ln());
        for i in 0..=steps {
            let t = lo + (hi - lo) * i as f64 / steps as f64;
            candidates.push(t.exp().round() as u64);
        }
    }

    let mut best: Option<BfmcPlan> = None;
    let consider = |plan: Option<BfmcPlan>, best: &mut Option<BfmcPlan>| {
        if let Some(p) = plan {
            if best.map_or(true, |b| p.cost < b.cost) {
                *best = Some(p);
            }
        }
    };
    for n in candidates {
        consider(evaluate(n), &mut best);
    }
    if let Some(b0) = best {
        // local refinement around the incumbent with geometric steps
        let mut centre = b0.n_star;
        let mut step = (centre / 16).max(1);
        while step >= 1 {
            let mut improved = false;
            for n in [centre.saturating_sub(step), centre + step] {
                let p = evaluate(n);
                if let (Some(p), Some(cur)) = (p, best) {
                    if p.cost < cur.cost {
                        best = Some(p);
                        centre = p.n_star;
                        improved = true;
                    }
                }
            }
            if !improved {
                if step == 1 {
                    break;
                }
                step /= 2;
            }
        }
    }
    best.unwrap_or_else(BfmcPlan::infeasible)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::FidelityCosts;
    use proptest::prelude::*;

    fn cfg(kappa: f64, lambda: f64, w_l: f64) -> SamplingConfig {
        SamplingConfig::new(kappa, lambda, 0.1, FidelityCosts::new(1.0, w_l))
    }

    #[test]
    fn zero_coefficient_is_cmc_variance() {
        let v = var_bfmc(4.0, 9.0, 1.3, 10, 37, 0.0).unwrap();
        assert!((v - 0.4).abs() < 1e-15);
    }

    #[test]
    fn equal_sizes_cancel_correction() {
        for c in [-3.0, 0.0, 0.7, 12.0] {
            let v = var_bfmc(4.0, 1.0, 0.9, 25, 25, c).unwrap();
            assert!((v - 4.0 / 25.0).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_evaluated_variance() {
        let v = var_bfmc(4.0, 1.0, 0.0, 10, 20, 1.0).unwrap();
        assert!((v - 0.45).abs() < 1e-14);
    }

    #[test]
    fn hand_evaluated_variance_matches_simulation() {
        // independent oracle: simulate the estimator directly
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(5);
        let reps = 100_000;
        let (n, v, c) = (10usize, 20usize, 1.0);
        let mut w = super::super::Welford::new();
        let mut lf = vec![0.0; v];
        for _ in 0..reps {
            let mut sum_h = 0.0;
            for (j, l) in lf.iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *l = z;
                if j < n {
                    let zh: f64 = StandardNormal.sample(&mut rng);
                    sum_h += 2.0 * zh;
                }
            }
            let mean_ln = lf[..n].iter().sum::<f64>() / n as f64;
            let mean_lv = lf.iter().sum::<f64>() / v as f64;
            w.push(sum_h / n as f64 - c * (mean_ln - mean_lv));
        }
        let empirical = w.variance();
        assert!((empirical - 0.45).abs() / 0.45 < 0.02, "{empirical}");
    }

    #[test]
    fn nonpositive_sizes_rejected() {
        assert!(var_bfmc(1.0, 1.0, 0.0, 0, 3, 1.0).is_err());
        assert!(var_bfmc(1.0, 1.0, 0.0, 3, 0, 1.0).is_err());
    }

    fn grid_argmin(s2h: f64, s2l: f64, shl: f64, n: u64, v: u64) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        let mut c = -5.0;
        while c <= 5.0 {
            let val = var_bfmc(s2h, s2l, shl, n, v, c).unwrap();
            if val < best.0 {
                best = (val, c);
            }
            c += 1e-4;
        }
        best.1
    }

    #[test]
    fn optimal_coefficient_matches_grid_search() {
        let c = optimal_coefficient(1.0, 0.8).unwrap();
        assert!((c - 0.8).abs() < 1e-15);
        assert!((grid_argmin(1.0, 1.0, 0.8, 10, 100) - 0.8).abs() < 2e-4);

        assert_eq!(optimal_coefficient(2.0, 0.0).unwrap(), 0.0);

        let c = optimal_coefficient(0.25, -0.5).unwrap();
        assert!((c + 2.0).abs() < 1e-15);
        assert!((grid_argmin(1.0, 0.25, -0.5, 10, 100) + 2.0).abs() < 2e-4);
        let reduced = var_bfmc(1.0, 0.25, -0.5, 10, 100, c).unwrap();
        assert!(reduced <= 1.0 / 10.0);
    }

    #[test]
    fn degenerate_lf_signalled() {
        assert_eq!(
            optimal_coefficient(0.0, 0.3),
            Err(EstimatorError::DegenerateLf)
        );
    }

    #[test]
    fn predicted_sizes() {
        assert_eq!(predicted_cmc_size(2.0, &cfg(1.0, 5.0, 0.1), 1.0), 20);
        assert_eq!(predicted_cmc_size(0.0, &cfg(1.0, 5.0, 0.1), 1.0), 1);
        assert_eq!(predicted_cmc_size(3.0, &cfg(2.0, 8.0, 0.1), 0.5), 288);
    }

    #[test]
    fn predicted_size_is_minimal_by_linear_scan() {
        let c = cfg(2.0, 8.0, 0.1);
        let rhs = c.kappa * 0.25 / c.lambda_k.sqrt();
        let scan = (1u64..).find(|n| 3.0 / (*n as f64).sqrt() <= rhs * (1.0 + 1e-12)).unwrap();
        assert_eq!(scan, 288);
        for (s, d) in [(1.3, 0.7), (0.2, 0.1), (5.0, 2.0)] {
            let rhs = c.kappa * d * d / c.lambda_k.sqrt();
            let scan = (1u64..)
                .find(|n| s / (*n as f64).sqrt() <= rhs * (1.0 + 1e-12))
                .unwrap();
            assert_eq!(predicted_cmc_size(s, &c, d), scan);
        }
    }

    fn acc_with(s2h: f64, s2l: f64, shl: f64, n: u64, v: u64) -> (ClampedMoments, u64, u64) {
        (ClampedMoments::new(s2h, s2l, shl).unwrap(), n, v)
    }

    #[test]
    fn zero_covariance_plan_never_beats_cmc() {
        let c = cfg(1.0, 5.0, 0.1);
        let delta = 0.5;
        let (m, n, v) = acc_with(4.0, 4.0, 0.0, 5, 6);
        let n_cmc = min_count_for(4.0, target_variance(&c, delta));
        let plan = plan_with_moments(&m, n, v, n_cmc, &c, delta);
        assert_eq!(plan.c_star, 0.0);
        assert_eq!(plan.n_star, n_cmc);
        assert_eq!(plan.v_star, n_cmc + 1);
        assert!(plan.cost > c.w_h * n_cmc as f64);
    }

    /// Exhaustive integer search over n in [2, 1000], v in [n+1, 1e5].
    fn brute_force_cost(m: &ClampedMoments, target: f64, w_h: f64, w_l: f64) -> f64 {
        let c = m.coefficient();
        let mut best = f64::INFINITY;
        for n in 2..=1000u64 {
            // variance is decreasing in v, so bisect the smallest feasible v
            let (mut lo, mut hi) = (n + 1, 100_000u64);
            if m.variance(n, hi, c) > target {
                continue;
            }
            while lo < hi {
                let mid = (lo + hi) / 2;
                if m.variance(n, mid, c) <= target {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            best = best.min(w_h * n as f64 + w_l * lo as f64);
        }
        best
    }

    #[test]
    fn high_correlation_plan_beats_cmc_and_is_near_grid_optimum() {
        let c = cfg(1.0, 5.0, 0.1);
        let delta = 0.05f64.powf(0.25); // target variance 0.01
        let target = target_variance(&c, delta);
        assert!((target - 0.01).abs() < 1e-15);
        let (m, n, v) = acc_with(4.0, 4.0, 3.8, 2, 3);
        let n_cmc = min_count_for(4.0, target);
        assert_eq!(n_cmc, 400);
        let plan = plan_with_moments(&m, n, v, n_cmc, &c, delta);
        assert!(plan.cost < 400.0);
        assert!(m.variance(plan.n_star, plan.v_star, plan.c_star) <= target * (1.0 + 1e-12));
        let grid = brute_force_cost(&m, target, 1.0, 0.1);
        assert!(plan.cost <= grid * 1.05, "plan {} grid {}", plan.cost, grid);
    }

    #[test]
    fn already_satisfied_constraint_keeps_current_sizes() {
        let c = cfg(1.0, 4.0, 0.1);
        let delta = 2.0; // target 4
        let (m, n, v) = acc_with(4.0, 4.0, 2.0, 10, 30);
        let plan = plan_with_moments(&m, n, v, 4, &c, delta);
        assert_eq!(plan.n_star, 10);
        assert_eq!(plan.v_star, 30);
    }

    #[test]
    fn degenerate_accumulator_gives_sentinel() {
        let c = cfg(1.0, 5.0, 0.1);
        let mut acc = MomentAccumulator::new();
        for j in 0..5 {
            acc.push_hf(j as f64);
            acc.push_lf(1.0);
            acc.push_cross(j as f64, 1.0);
        }
        acc.push_lf(1.0);
        assert!(!solve_bfmc_plan(&acc, &c, 0.5).is_feasible());
        // too few paired draws
        let mut small = MomentAccumulator::new();
        small.push_hf(1.0);
        small.push_lf(2.0);
        small.push_cross(1.0, 2.0);
        small.push_lf(3.0);
        assert!(!solve_bfmc_plan(&small, &c, 0.5).is_feasible());
    }

    proptest! {
        #[test]
        fn coefficient_is_optimal_and_reduces_variance(
            s2h in 0.1f64..10.0, s2l in 0.1f64..10.0, rho in -0.99f64..0.99,
            n in 1u64..200, extra in 1u64..500, c in -10.0f64..10.0,
        ) {
            let shl = rho * (s2h * s2l).sqrt();
            let v = n + extra;
            let cs = optimal_coefficient(s2l, shl).unwrap();
            let at_star = var_bfmc(s2h, s2l, shl, n, v, cs).unwrap();
            let at_c = var_bfmc(s2h, s2l, shl, n, v, c).unwrap();
            prop_assert!(at_star <= at_c + 1e-12);
            prop_assert!(at_star <= s2h / n as f64 + 1e-12);
        }

        #[test]
        fn plan_is_feasible_when_finite(
            s2h in 0.5f64..10.0, ratio_l in 0.2f64..5.0, rho in 0.0f64..0.99,
            n in 2u64..50, w_l in 0.01f64..1.0, delta in 0.2f64..1.5,
        ) {
            let s2l = s2h * ratio_l;
            let c = cfg(1.0, 5.0, w_l);
            let m = ClampedMoments::new(s2h, s2l, rho * (s2h * s2l).sqrt()).unwrap();
            let n_cmc = min_count_for(s2h, target_variance(&c, delta));
            let plan = plan_with_moments(&m, n, n + 1, n_cmc, &c, delta);
            if plan.is_feasible() {
                prop_assert!(plan.n_star >= n);
                prop_assert!(plan.v_star >= plan.n_star + 1);
                prop_assert!(m.variance(plan.n_star, plan.v_star, plan.c_star)
                    <= target_variance(&c, delta) * (1.0 + 1e-12));
            }
        }
    }
}
