//! Bi-fidelity oracle contract, replication streams, and cost accounting.
//!
//! Every stochastic draw in the crate is addressed by a [`StreamKey`] plus a
//! replication index. A replication index identifies one realization of the
//! underlying randomness, so the high- and low-fidelity outputs produced at the
//! same index are paired, and the same index at two different design points is
//! a common random number.

use std::fmt;
use std::ops::Deref;

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Generator handed to an oracle for one replication.
pub type ReplicationRng = Xoshiro256PlusPlus;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("design point {point:?} is outside the problem domain: {reason}")]
    Domain { point: Vec<f64>, reason: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("budget exhausted: requested {requested} with {remaining} remaining")]
    BudgetExhausted { requested: f64, remaining: f64 },
}

impl OracleError {
    pub fn is_budget(&self) -> bool {
        matches!(self, OracleError::BudgetExhausted { .. })
    }
}

/// A point in the decision space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DesignPoint(Vec<f64>);

impl DesignPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        DesignPoint(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Bit-exact key used by evaluation caches.
    pub fn key(&self) -> PointKey {
        PointKey(self.0.iter().map(|v| canonical_bits(*v)).collect())
    }

    pub fn distance(&self, other: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl Deref for DesignPoint {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for DesignPoint {
    fn from(v: Vec<f64>) -> Self {
        DesignPoint(v)
    }
}

impl fmt::Display for DesignPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PointKey(Vec<u64>);

fn canonical_bits(v: f64) -> u64 {
    // -0.0 and 0.0 address the same point
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

/// SplitMix64 finalizer.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn hash_words(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x243F_6A88_85A3_08D3, |acc, w| mix64(acc ^ mix64(*w)))
}

/// Stable 64-bit hash of a string (FNV-1a), used to derive substream ids from names.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Role of a substream; distinct roles never share randomness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StreamRole {
    /// Draws consumed by an optimization run.
    Optimization,
    /// Post-hoc evaluation of recommended solutions.
    PostHoc,
}

impl StreamRole {
    fn tag(self) -> u64 {
        match self {
            StreamRole::Optimization => 0x4f50_5449,
            StreamRole::PostHoc => 0x504f_5354,
        }
    }
}

/// Address of one pseudorandom sequence of replications.
///
/// `(macrorep_id, substream_id)` fixes the sequence; the replication index is
/// the cursor. Each replication gets its own generator derived by hashing the
/// full triple, so revisiting an index always replays the same realization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub macrorep_id: u64,
    pub substream_id: u64,
}

impl StreamKey {
    pub fn new(macrorep_id: u64, substream_id: u64) -> Self {
        StreamKey {
            macrorep_id,
            substream_id,
        }
    }

    pub fn for_role(macrorep_id: u64, problem_tag: u64, role: StreamRole) -> Self {
        StreamKey {
            macrorep_id,
            substream_id: hash_words(&[problem_tag, role.tag()]),
        }
    }

    /// Same stream shifted to a design-point-specific substream (used when
    /// common random numbers are disabled).
    pub fn for_point(&self, point: &PointKey) -> Self {
        let mut words = Vec::with_capacity(point.0.len() + 1);
        words.push(self.substream_id);
        words.extend_from_slice(&point.0);
        StreamKey {
            macrorep_id: self.macrorep_id,
            substream_id: hash_words(&words),
        }
    }

    pub fn replication(&self, index: u64) -> ReplicationRng {
        let seed = hash_words(&[self.macrorep_id, self.substream_id, index]);
        ReplicationRng::seed_from_u64(seed)
    }
}

/// Result of one oracle call.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSample {
    pub hf_value: Option<f64>,
    pub lf_value: Option<f64>,
    pub hf_calls: u64,
    pub lf_calls: u64,
}

/// Per-call costs of the two fidelities, in HF-equivalent units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityCosts {
    pub w_h: f64,
    pub w_l: f64,
}

impl FidelityCosts {
    pub fn new(w_h: f64, w_l: f64) -> Self {
        FidelityCosts { w_h, w_l }
    }
}

/// A bi-fidelity stochastic simulator.
///
/// Implementations are immutable descriptions; all randomness arrives through
/// the replication generator, and for a given generator state the outputs are
/// deterministic. `hf` and `lf` called with generators for the same
/// replication must agree with the two halves of `paired`.
pub trait BiFidelityOracle: Send + Sync {
    fn dim(&self) -> usize;

    fn costs(&self) -> FidelityCosts;

    /// True when one HF replication also yields the paired LF replication at
    /// no extra cost (LF is a prefix of the HF run).
    fn lf_free_with_hf(&self) -> bool {
        false
    }

    /// Checks that `x` may be evaluated.
    fn check_domain(&self, x: &[f64]) -> Result<(), OracleError>;

    /// Maps an arbitrary point onto the evaluable set.
    fn project(&self, x: &[f64]) -> Vec<f64>;

    /// Box bounds of the evaluable set, when it has them.
    fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }

    fn paired(&self, x: &[f64], rng: &mut ReplicationRng) -> (f64, f64);

    fn hf(&self, x: &[f64], rng: &mut ReplicationRng) -> f64 {
        self.paired(x, rng).0
    }

    fn lf(&self, x: &[f64], rng: &mut ReplicationRng) -> f64 {
        self.paired(x, rng).1
    }
}

/// Running totals of oracle usage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub hf_calls_total: u64,
    pub lf_calls_total: u64,
    pub w_h: f64,
    pub w_l: f64,
    /// HF calls that also produced a free LF replication.
    pub free_lf_total: u64,
}

impl CostLedger {
    pub fn new(costs: FidelityCosts) -> Self {
        CostLedger {
            hf_calls_total: 0,
            lf_calls_total: 0,
            w_h: costs.w_h,
            w_l: costs.w_l,
            free_lf_total: 0,
        }
    }

    pub fn total_cost(&self) -> f64 {
        self.w_h * self.hf_calls_total as f64 + self.w_l * self.lf_calls_total as f64
    }

    pub fn remaining_budget(&self, budget_cap: f64) -> f64 {
        budget_cap - self.total_cost()
    }
}

/// Sampling state confined to one run: oracle handle, stream, ledger and cap.
pub struct SamplingContext<'a> {
    oracle: &'a dyn BiFidelityOracle,
    stream: StreamKey,
    common_random_numbers: bool,
    ledger: CostLedger,
    budget_cap: f64,
}

impl<'a> SamplingContext<'a> {
    pub fn new(oracle: &'a dyn BiFidelityOracle, stream: StreamKey, budget_cap: f64) -> Self {
        SamplingContext {
            oracle,
            stream,
            common_random_numbers: true,
            ledger: CostLedger::new(oracle.costs()),
            budget_cap,
        }
    }

    pub fn with_common_random_numbers(mut self, enabled: bool) -> Self {
        self.common_random_numbers = enabled;
        self
    }

    pub fn oracle(&self) -> &'a dyn BiFidelityOracle {
        self.oracle
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    pub fn budget_cap(&self) -> f64 {
        self.budget_cap
    }

    pub fn total_cost(&self) -> f64 {
        self.ledger.total_cost()
    }

    pub fn remaining_budget(&self) -> f64 {
        self.ledger.remaining_budget(self.budget_cap)
    }

    pub fn costs(&self) -> FidelityCosts {
        FidelityCosts::new(self.ledger.w_h, self.ledger.w_l)
    }

    fn stream_for(&self, x: &[f64]) -> StreamKey {
        if self.common_random_numbers {
            self.stream
        } else {
            self.stream.for_point(&DesignPoint::new(x.to_vec()).key())
        }
    }

    fn charge(&mut self, hf: u64, lf: u64) -> Result<(), OracleError> {
        let requested = self.ledger.w_h * hf as f64 + self.ledger.w_l * lf as f64;
        let remaining = self.remaining_budget();
        // small slack so that a cap that is an exact multiple of the costs is usable
        if requested > remaining + 1e-9 * self.budget_cap.abs().max(1.0) {
            return Err(OracleError::BudgetExhausted {
                requested,
                remaining,
            });
        }
        self.ledger.hf_calls_total += hf;
        self.ledger.lf_calls_total += lf;
        Ok(())
    }

    fn check(&self, x: &[f64]) -> Result<(), OracleError> {
        if x.len() != self.oracle.dim() {
            return Err(OracleError::Dimension {
                expected: self.oracle.dim(),
                got: x.len(),
            });
        }
        self.oracle.check_domain(x)
    }

    /// One HF and one LF draw sharing replication `index`.
    pub fn sample_paired(&mut self, x: &[f64], index: u64) -> Result<OracleSample, OracleError> {
        self.check(x)?;
        let lf_calls = if self.oracle.lf_free_with_hf() { 0 } else { 1 };
        self.charge(1, lf_calls)?;
        if lf_calls == 0 {
            self.ledger.free_lf_total += 1;
        }
        let mut rng = self.stream_for(x).replication(index);
        let (h, l) = self.oracle.paired(x, &mut rng);
        Ok(OracleSample {
            hf_value: Some(h),
            lf_value: Some(l),
            hf_calls: 1,
            lf_calls,
        })
    }

    /// One HF draw at replication `index`. Oracles whose LF output is a prefix
    /// of the HF run also return the LF value, uncharged.
    pub fn sample_hf(&mut self, x: &[f64], index: u64) -> Result<OracleSample, OracleError> {
        if self.oracle.lf_free_with_hf() {
            return self.sample_paired(x, index);
        }
        self.check(x)?;
        self.charge(1, 0)?;
        let mut rng = self.stream_for(x).replication(index);
        let h = self.oracle.hf(x, &mut rng);
        Ok(OracleSample {
            hf_value: Some(h),
            lf_value: None,
            hf_calls: 1,
            lf_calls: 0,
        })
    }

    /// One LF draw at replication `index`.
    pub fn sample_lf_only(&mut self, x: &[f64], index: u64) -> Result<OracleSample, OracleError> {
        self.check(x)?;
        self.charge(0, 1)?;
        let mut rng = self.stream_for(x).replication(index);
        let l = self.oracle.lf(x, &mut rng);
        Ok(OracleSample {
            hf_value: None,
            lf_value: Some(l),
            hf_calls: 0,
            lf_calls: 1,
        })
    }
}


#[cfg(test)]
mod tests {
    use super::test_oracles::*;
    use super::*;

    fn square_oracle() -> Noiseless<fn(&[f64]) -> f64, fn(&[f64]) -> f64> {
        Noiseless {
            dim: 1,
            hf: |x| x[0] * x[0],
            lf: |x| x[0] * x[0],
            costs: FidelityCosts::new(1.0, 0.1),
        }
    }

    #[test]
    fn paired_zero_noise_identity() {
        let oracle = square_oracle();
        let mut ctx = SamplingContext::new(&oracle, StreamKey::new(0, 0), 100.0);
        let s = ctx.sample_paired(&[2.0], 0).unwrap();
        assert_eq!(s.hf_value, Some(4.0));
        assert_eq!(s.lf_value, Some(4.0));
        assert!((ctx.total_cost() - 1.1).abs() < 1e-12);
    }

    #[test]
    fn paired_replay_is_deterministic() {
        let oracle = GaussianPair {
            mean_h: 0.0,
            mean_l: 0.0,
            sd_h: 1.0,
            sd_l: 1.0,
            rho: 0.5,
            costs: FidelityCosts::new(1.0, 0.1),
        };
        let key = StreamKey::new(3, 11);
        let a = SamplingContext::new(&oracle, key, 10.0)
            .sample_paired(&[0.0], 7)
            .unwrap();
        let b = SamplingContext::new(&oracle, key, 10.0)
            .sample_paired(&[0.0], 7)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn paired_gaussian_correlation() {
        let oracle = GaussianPair {
            mean_h: 1.0,
            mean_l: -2.0,
            sd_h: 2.0,
            sd_l: 0.5,
            rho: 0.9,
            costs: FidelityCosts::new(1.0, 0.1),
        };
        let n = 100_000;
        let mut ctx = SamplingContext::new(&oracle, StreamKey::new(1, 2), 1e9);
        let draws: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let s = ctx.sample_paired(&[0.0], i).unwrap();
                (s.hf_value.unwrap(), s.lf_value.unwrap())
            })
            .collect();
        let corr = pearson(&draws);
        assert!((corr - 0.9).abs() < 0.02, "corr = {corr}");
    }

    pub(crate) fn pearson(d: &[(f64, f64)]) -> f64 {
        let n = d.len() as f64;
        let mx = d.iter().map(|p| p.0).sum::<f64>() / n;
        let my = d.iter().map(|p| p.1).sum::<f64>() / n;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (x, y) in d {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
            syy += (y - my) * (y - my);
        }
        sxy / (sxx * syy).sqrt()
    }

    #[test]
    fn lf_only_constant() {
        let oracle = Noiseless {
            dim: 2,
            hf: |_x: &[f64]| 0.0,
            lf: |_x: &[f64]| 3.0,
            costs: FidelityCosts::new(1.0, 0.1),
        };
        let mut ctx = SamplingContext::new(&oracle, StreamKey::new(0, 0), 1.0);
        let s = ctx.sample_lf_only(&[5.0, -1.0], 0).unwrap();
        assert_eq!(s.lf_value, Some(3.0));
        assert_eq!(s.hf_value, None);
        assert_eq!(ctx.ledger().lf_calls_total, 1);
    }

    #[test]
    fn lf_only_draws_are_independent() {
        let oracle = GaussianPair {
            mean_h: 0.0,
            mean_l: 0.0,
            sd_h: 1.0,
            sd_l: 1.0,
            rho: 0.0,
            costs: FidelityCosts::new(1.0, 0.1),
        };
        let n = 100_000u64;
        let mut ctx = SamplingContext::new(&oracle, StreamKey::new(9, 4), 1e9);
        let v: Vec<f64> = (0..n)
            .map(|i| ctx.sample_lf_only(&[0.0], i).unwrap().lf_value.unwrap())
            .collect();
        let lagged: Vec<(f64, f64)> = v.windows(2).map(|w| (w[0], w[1])).collect();
        let ac = pearson(&lagged);
        assert!(ac.abs() < 0.01, "lag-1 autocorrelation {ac}");
    }

    #[test]
    fn lf_only_budget_exceeded() {
        let oracle = square_oracle();
        let mut ctx = SamplingContext::new(&oracle, StreamKey::new(0, 0), 0.05);
        let err = ctx.sample_lf_only(&[1.0], 0).unwrap_err();
        assert!(err.is_budget());
        assert_eq!(ctx.total_cost(), 0.0);
    }

    #[test]
    fn remaining_budget_arithmetic() {
        let mut ledger = CostLedger::new(FidelityCosts::new(1.0, 0.1));
        assert_eq!(ledger.remaining_budget(100.0), 100.0);
        ledger.hf_calls_total = 30;
        ledger.lf_calls_total = 50;
        assert!((ledger.remaining_budget(100.0) - 65.0).abs() < 1e-12);
        let mut l2 = CostLedger::new(FidelityCosts::new(1.0, 1.0));
        l2.hf_calls_total = 10;
        assert_eq!(l2.remaining_budget(10.0), 0.0);
    }

    #[test]
    fn lf_free_oracle_charges_hf_only() {
        struct Prefix;
        impl BiFidelityOracle for Prefix {
            fn dim(&self) -> usize {
                1
            }
            fn costs(&self) -> FidelityCosts {
                FidelityCosts::new(1.0, 0.3)
            }
            fn lf_free_with_hf(&self) -> bool {
                true
            }
            fn check_domain(&self, _x: &[f64]) -> Result<(), OracleError> {
                Ok(())
            }
            fn project(&self, x: &[f64]) -> Vec<f64> {
                x.to_vec()
            }
            fn paired(&self, x: &[f64], _rng: &mut ReplicationRng) -> (f64, f64) {
                (x[0], 0.5 * x[0])
            }
        }
        let mut ctx = SamplingContext::new(&Prefix, StreamKey::new(0, 0), 10.0);
        let s = ctx.sample_hf(&[2.0], 0).unwrap();
        assert_eq!(s.lf_value, Some(1.0));
        assert_eq!(ctx.total_cost(), 1.0);
        assert_eq!(ctx.ledger().free_lf_total, 1);
    }
}
