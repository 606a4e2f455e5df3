//! Single-server FIFO queue with exponential interarrival and service times.
//!
//! One event-driven pass produces both fidelities: the LF statistics are a
//! snapshot taken when the clock crosses the shorter horizon, so the LF run
//! is exactly a prefix of the HF run.

use std::collections::VecDeque;

use rand_distr::{Distribution, Exp};

use super::{BoxDomain, Params, Problem, ProblemError, ReferenceOptimum};
use crate::oracle::{BiFidelityOracle, FidelityCosts, OracleError, ReplicationRng};

/// Supplies interarrival and service durations in the order events need them.
pub trait QueueSource {
    fn interarrival(&mut self) -> f64;
    fn service(&mut self) -> f64;
}

pub struct ExpQueueSource<'r> {
    rng: &'r mut ReplicationRng,
    arrival: Exp<f64>,
    service: Exp<f64>,
}

impl<'r> ExpQueueSource<'r> {
    pub fn new(rng: &'r mut ReplicationRng, arrival_rate: f64, service_rate: f64) -> Self {
        ExpQueueSource {
            rng,
            arrival: Exp::new(arrival_rate).expect("positive arrival rate"),
            service: Exp::new(service_rate).expect("positive service rate"),
        }
    }
}

impl QueueSource for ExpQueueSource<'_> {
    fn interarrival(&mut self) -> f64 {
        self.arrival.sample(self.rng)
    }

    fn service(&mut self) -> f64 {
        self.service.sample(self.rng)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QueueEventKind {
    Arrival,
    Departure,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QueueEvent {
    pub time: f64,
    pub kind: QueueEventKind,
    pub customer: u64,
}

/// Sojourn totals over customers that departed, excluding the warmup ones.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SojournStats {
    pub customers: u64,
    pub total: f64,
}

impl SojournStats {
    /// Zero when nobody completed.
    pub fn mean(&self) -> f64 {
        if self.customers == 0 {
            0.0
        } else {
            self.total / self.customers as f64
        }
    }
}

/// Runs the queue until the last horizon and returns the statistics as they
/// stood at each horizon (ascending). Events after a horizon do not count
/// toward its snapshot.
pub fn simulate_mm1(
    source: &mut dyn QueueSource,
    warmup: u64,
    horizons: &[f64],
    mut log: Option<&mut Vec<QueueEvent>>,
) -> Vec<SojournStats> {
    let mut snapshots = Vec::with_capacity(horizons.len());
    let mut stats = SojournStats::default();
    let mut waiting: VecDeque<(u64, f64)> = VecDeque::new();
    // (customer, arrival time, departure time)
    let mut busy: Option<(u64, f64, f64)> = None;
    let mut next_arrival = source.interarrival();
    let mut arrived = 0u64;

    loop {
        let next_departure = busy.map_or(f64::INFINITY, |b| b.2);
        let t = next_arrival.min(next_departure);
        while snapshots.len() < horizons.len() && t > horizons[snapshots.len()] {
            snapshots.push(stats);
        }
        if snapshots.len() == horizons.len() {
            break;
        }
        if next_arrival <= next_departure {
            let id = arrived;
            arrived += 1;
            if let Some(l) = log.as_deref_mut() {
                l.push(QueueEvent { time: t, kind: QueueEventKind::Arrival, customer: id });
            }
            if busy.is_none() {
                busy = Some((id, t, t + source.service()));
            } else {
                waiting.push_back((id, t));
            }
            next_arrival = t + source.interarrival();
        } else {
            let (id, arrival, _) = busy.take().expect("departure needs a customer");
            if let Some(l) = log.as_deref_mut() {
                l.push(QueueEvent { time: t, kind: QueueEventKind::Departure, customer: id });
            }
            if id >= warmup {
                stats.customers += 1;
                stats.total += t - arrival;
            }
            if let Some((next, arr)) = waiting.pop_front() {
                busy = Some((next, arr, t + source.service()));
            }
        }
    }
    snapshots
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mm1Problem {
    pub arrival_rate: f64,
    pub horizon_h: f64,
    pub horizon_l: f64,
    pub warmup: u64,
    domain: BoxDomain,
}

/// Smallest admissible gap between service and arrival rate.
const STABILITY_MARGIN: f64 = 0.1;
const RATE_SPAN: f64 = 50.0;

impl Mm1Problem {
    pub fn new(arrival_rate: f64, horizon_h: f64, ratio: f64, warmup: u64) -> Self {
        Mm1Problem {
            arrival_rate,
            horizon_h,
            horizon_l: ratio * horizon_h,
            warmup,
            domain: BoxDomain {
                lo: vec![arrival_rate + STABILITY_MARGIN],
                hi: vec![arrival_rate + RATE_SPAN],
            },
        }
    }

    pub(crate) fn from_params(p: &mut Params) -> Result<Self, ProblemError> {
        let lambda = p.f64("lambda", 1.0)?;
        if !(lambda > 0.0) {
            return Err(p.bad("lambda", lambda, "must be positive"));
        }
        let ratio = p.f64("ratio", 0.3)?;
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(p.bad("ratio", ratio, "must lie in (0, 1)"));
        }
        let horizon = p.f64("horizon", 5000.0)?;
        if !(horizon > 0.0) {
            return Err(p.bad("horizon", horizon, "must be positive"));
        }
        let warmup = p.f64("warmup", 1000.0)?;
        if !(warmup >= 0.0 && warmup.fract() == 0.0) {
            return Err(p.bad("warmup", warmup, "must be a non-negative integer"));
        }
        Ok(Self::new(lambda, horizon, ratio, warmup as u64))
    }

    fn penalty(mu: f64) -> f64 {
        0.1 * mu * mu
    }

    /// Steady-state objective `1/(mu - lambda) + 0.1 mu^2`.
    pub fn steady_state_objective(&self, mu: f64) -> f64 {
        1.0 / (mu - self.arrival_rate) + Self::penalty(mu)
    }

    /// Root of `0.2 mu (mu - lambda)^2 = 1` on `mu > lambda`.
    pub fn steady_state_minimizer(&self) -> f64 {
        let g = |mu: f64| 0.2 * mu * (mu - self.arrival_rate).powi(2) - 1.0;
        let (mut lo, mut hi) = (self.arrival_rate, self.arrival_rate + 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn run(&self, mu: f64, rng: &mut ReplicationRng, horizons: &[f64]) -> Vec<f64> {
        let mut src = ExpQueueSource::new(rng, self.arrival_rate, mu);
        simulate_mm1(&mut src, self.warmup, horizons, None)
            .iter()
            .map(|s| s.mean() + Self::penalty(mu))
            .collect()
    }
}

impl BiFidelityOracle for Mm1Problem {
    fn dim(&self) -> usize {
        1
    }

    fn costs(&self) -> FidelityCosts {
        FidelityCosts::new(1.0, self.horizon_l / self.horizon_h)
    }

    fn lf_free_with_hf(&self) -> bool {
        true
    }

    fn check_domain(&self, x: &[f64]) -> Result<(), OracleError> {
        self.domain.check(x)
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        self.domain.clip(x)
    }

    fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        Some((self.domain.lo.clone(), self.domain.hi.clone()))
    }

    fn paired(&self, x: &[f64], rng: &mut ReplicationRng) -> (f64, f64) {
        let v = self.run(x[0], rng, &[self.horizon_l, self.horizon_h]);
        (v[1], v[0])
    }

    fn hf(&self, x: &[f64], rng: &mut ReplicationRng) -> f64 {
        self.run(x[0], rng, &[self.horizon_h])[0]
    }

    fn lf(&self, x: &[f64], rng: &mut ReplicationRng) -> f64 {
        self.run(x[0], rng, &[self.horizon_l])[0]
    }
}

impl Problem for Mm1Problem {
    fn id(&self) -> String {
        format!(
            "mm1?lambda={}&ratio={}&horizon={}&warmup={}",
            self.arrival_rate,
            self.horizon_l / self.horizon_h,
            self.horizon_h,
            self.warmup
        )
    }

    fn x0(&self) -> Vec<f64> {
        vec![self.arrival_rate + 2.0]
    }

    fn delta_max(&self) -> f64 {
        5.0
    }

    fn reference(&self) -> ReferenceOptimum {
        let mu = self.steady_state_minimizer();
        ReferenceOptimum {
            x: Some(vec![mu]),
            value: self.steady_state_objective(mu),
        }
    }
}
