//! Continuous-review style (s, S) inventory with full backlogging, reviewed
//! once per period. The LF draw averages the first periods of the same run.

use std::sync::OnceLock;

use rand_distr::{Distribution, Exp, Poisson};

use super::{BoxDomain, Params, Problem, ProblemError, ReferenceOptimum};
use crate::oracle::{
    BiFidelityOracle, FidelityCosts, OracleError, ReplicationRng, StreamKey, StreamRole,
};

pub trait InventorySource {
    fn demand(&mut self) -> f64;
    /// Periods until an order placed now is received.
    fn lead_time(&mut self) -> u64;
}

pub struct RandomInventory<'r> {
    rng: &'r mut ReplicationRng,
    demand: Exp<f64>,
    lead: Option<Poisson<f64>>,
}

impl<'r> RandomInventory<'r> {
    pub fn new(rng: &'r mut ReplicationRng, mean_demand: f64, mean_lead: f64) -> Self {
        RandomInventory {
            rng,
            demand: Exp::new(1.0 / mean_demand).expect("positive demand mean"),
            lead: (mean_lead > 0.0).then(|| Poisson::new(mean_lead).expect("finite lead mean")),
        }
    }
}

impl InventorySource for RandomInventory<'_> {
    fn demand(&mut self) -> f64 {
        self.demand.sample(self.rng)
    }

    fn lead_time(&mut self) -> u64 {
        self.lead.as_ref().map_or(0, |p| p.sample(self.rng) as u64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InventoryCosts {
    pub holding: f64,
    pub backorder: f64,
    pub fixed: f64,
}

impl Default for InventoryCosts {
    fn default() -> Self {
        InventoryCosts {
            holding: 1.0,
            backorder: 4.0,
            fixed: 36.0,
        }
    }
}

/// Cost breakdown of one period.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeriodCost {
    pub holding: f64,
    pub backorder: f64,
    pub fixed: f64,
    pub ordered: f64,
}

impl PeriodCost {
    pub fn total(&self) -> f64 {
        self.holding + self.backorder + self.fixed
    }
}

/// Simulates `periods` periods starting from `initial` on hand and nothing
/// on order; returns the per-period total costs.
///
/// Each period: demand is served or backlogged, due orders arrive, then an
/// order up to `big_s` is placed if the inventory position is below `s`.
/// An order placed in period `t` with lead time `L` arrives in period
/// `t + max(L, 1)`.
pub fn simulate_sscont(
    s: f64,
    big_s: f64,
    costs: &InventoryCosts,
    periods: usize,
    initial: f64,
    source: &mut dyn InventorySource,
    mut log: Option<&mut Vec<PeriodCost>>,
) -> Vec<f64> {
    let mut net = initial;
    // (due period, quantity)
    let mut pipeline: Vec<(usize, f64)> = Vec::new();
    let mut out = Vec::with_capacity(periods);
    for t in 0..periods {
        net -= source.demand();
        pipeline.retain(|&(due, q)| {
            if due <= t {
                net += q;
                false
            } else {
                true
            }
        });
        let position = net + pipeline.iter().map(|o| o.1).sum::<f64>();
        let mut ordered = 0.0;
        if position < s {
            ordered = big_s - position;
            let lead = source.lead_time().max(1) as usize;
            pipeline.push((t + lead, ordered));
        }
        let c = PeriodCost {
            holding: costs.holding * net.max(0.0),
            backorder: costs.backorder * (-net).max(0.0),
            fixed: if ordered > 0.0 { costs.fixed } else { 0.0 },
            ordered,
        };
        if let Some(l) = log.as_deref_mut() {
            l.push(c);
        }
        out.push(c.total());
    }
    out
}

#[derive(Debug)]
pub struct SscontProblem {
    pub mean_demand: f64,
    pub mean_lead: f64,
    pub horizon_h: usize,
    pub horizon_l: usize,
    pub costs: InventoryCosts,
    domain: BoxDomain,
    reference: OnceLock<ReferenceOptimum>,
}

/// Smallest gap `S - s` produced by projection.
const MIN_GAP: f64 = 1.0;

impl SscontProblem {
    pub fn new(mean_demand: f64, mean_lead: f64, ratio: f64) -> Self {
        let horizon_h = 100;
        let scale = Self::scale_of(mean_demand, mean_lead);
        SscontProblem {
            mean_demand,
            mean_lead,
            horizon_h,
            horizon_l: ((ratio * horizon_h as f64).round() as usize).clamp(1, horizon_h - 1),
            costs: InventoryCosts::default(),
            domain: BoxDomain {
                lo: vec![0.0, 0.0],
                hi: vec![10.0 * scale; 2],
            },
            reference: OnceLock::new(),
        }
    }

    fn scale_of(mean_demand: f64, mean_lead: f64) -> f64 {
        mean_demand * mean_lead.max(1.0)
    }

    /// Mean demand over a mean lead time; sets x0 and the radius cap.
    pub fn scale(&self) -> f64 {
        Self::scale_of(self.mean_demand, self.mean_lead)
    }

    pub(crate) fn from_params(p: &mut Params) -> Result<Self, ProblemError> {
        let mu_d = p.f64("muD", 100.0)?;
        if !(mu_d > 0.0) {
            return Err(p.bad("muD", mu_d, "must be positive"));
        }
        let mu_l = p.f64("muL", 6.0)?;
        if !(mu_l >= 0.0) {
            return Err(p.bad("muL", mu_l, "must be non-negative"));
        }
        let ratio = p.f64("ratio", 0.3)?;
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(p.bad("ratio", ratio, "must lie in (0, 1)"));
        }
        Ok(Self::new(mu_d, mu_l, ratio))
    }

    /// Per-period cost averages over the first `horizon_l` and all periods.
    fn run(&self, x: &[f64], rng: &mut ReplicationRng, periods: usize) -> (f64, f64) {
        let mut src = RandomInventory::new(rng, self.mean_demand, self.mean_lead);
        let c = simulate_sscont(x[0], x[1], &self.costs, periods, x[1], &mut src, None);
        let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let l = avg(&c[..self.horizon_l.min(periods)]);
        (avg(&c), l)
    }

    /// Best cell of a 20 x 20 `(s, S)` grid, 200 post-hoc replications each.
    pub fn grid_reference(&self) -> ReferenceOptimum {
        let m = self.scale();
        let key = StreamKey::for_role(0, self.tag(), StreamRole::PostHoc);
        let mut best = ReferenceOptimum { x: None, value: f64::INFINITY };
        for i in 0..20 {
            for j in 0..20 {
                let s = 3.0 * m * i as f64 / 19.0;
                let big_s = 0.5 * m + 4.5 * m * j as f64 / 19.0;
                if s >= big_s {
                    continue;
                }
                let x = [s, big_s];
                let v = (0..200).map(|r| self.run(&x, &mut key.replication(r), self.horizon_h).0).sum::<f64>() / 200.0;
                if v < best.value {
                    best = ReferenceOptimum { x: Some(x.to_vec()), value: v };
                }
            }
        }
        best
    }
}

impl BiFidelityOracle for SscontProblem {
    fn dim(&self) -> usize {
        2
    }

    fn costs(&self) -> FidelityCosts {
        FidelityCosts::new(1.0, self.horizon_l as f64 / self.horizon_h as f64)
    }

    fn lf_free_with_hf(&self) -> bool {
        true
    }

    fn check_domain(&self, x: &[f64]) -> Result<(), OracleError> {
        self.domain.check(x)?;
        if x[0] < x[1] {
            Ok(())
        } else {
            Err(OracleError::Domain {
                point: x.to_vec(),
                reason: "reorder point s must be below the order-up-to level S".into(),
            })
        }
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.domain.clip(x);
        if y[1] - y[0] < MIN_GAP {
            let mid = 0.5 * (y[0] + y[1]);
            let hi = self.domain.hi[1];
            let mid = mid.clamp(0.5 * MIN_GAP, hi - 0.5 * MIN_GAP);
            y = vec![mid - 0.5 * MIN_GAP, mid + 0.5 * MIN_GAP];
        }
        y
    }

    fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        Some((self.domain.lo.clone(), self.domain.hi.clone()))
    }

    fn paired(&self, x: &[f64], rng: &mut ReplicationRng) -> (f64, f64) {
        self.run(x, rng, self.horizon_h)
    }

    fn lf(&self, x: &[f64], rng: &mut ReplicationRng) -> f64 {
        self.run(x, rng, self.horizon_l).1
    }
}

impl Problem for SscontProblem {
    fn id(&self) -> String {
        format!(
            "sscont?muD={}&muL={}&ratio={}",
            self.mean_demand,
            self.mean_lead,
            self.horizon_l as f64 / self.horizon_h as f64
        )
    }

    fn x0(&self) -> Vec<f64> {
        vec![self.scale(), 2.0 * self.scale()]
    }

    fn delta_max(&self) -> f64 {
        self.scale()
    }

    fn reference(&self) -> ReferenceOptimum {
        self.reference.get_or_init(|| self.grid_reference()).clone()
    }
}
