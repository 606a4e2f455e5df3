use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};

use super::{BoxDomain, Params, Problem, ProblemError, ReferenceOptimum};
use crate::oracle::{BiFidelityOracle, FidelityCosts, OracleError, ReplicationRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Branin,
    Colville,
    Forretal,
    Rosen,
}

/// LF shape `A f(gamma x + delta) + B`, blended with `f` by `kcor`.
///
/// Values were fitted once on a domain-filling grid so that the noiseless
/// HF-LF Pearson correlation rises with `kcor` (about 0.1, 0.49 and 0.98 at
/// 0.1, 0.5 and 0.9); the unit tests recompute it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Distortion {
    pub a: f64,
    pub gamma: f64,
    pub delta: &'static [f64],
    pub b: f64,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Branin, Family::Colville, Family::Forretal, Family::Rosen];

    pub fn name(self) -> &'static str {
        match self {
            Family::Branin => "branin",
            Family::Colville => "colville",
            Family::Forretal => "forretal",
            Family::Rosen => "rosen",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }

    pub fn dim(self) -> usize {
        match self {
            Family::Branin | Family::Rosen => 2,
            Family::Colville => 4,
            Family::Forretal => 1,
        }
    }

    pub fn bounds(self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Family::Branin => (vec![-5.0, 0.0], vec![10.0, 15.0]),
            Family::Colville => (vec![-10.0; 4], vec![10.0; 4]),
            Family::Forretal => (vec![0.0], vec![1.0]),
            Family::Rosen => (vec![-2.0, -1.0], vec![2.0, 3.0]),
        }
    }

    /// Noiseless HF objective.
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            Family::Branin => {
                let (x1, x2) = (x[0], x[1]);
                let b = 5.1 / (4.0 * PI * PI);
                let inner = x2 - b * x1 * x1 + 5.0 / PI * x1 - 6.0;
                inner * inner + 10.0 * (1.0 - 1.0 / (8.0 * PI)) * x1.cos() + 10.0
            }
            Family::Colville => {
                let (x1, x2, x3, x4) = (x[0], x[1], x[2], x[3]);
                100.0 * (x1 * x1 - x2).powi(2)
                    + (x1 - 1.0).powi(2)
                    + (x3 - 1.0).powi(2)
                    + 90.0 * (x3 * x3 - x4).powi(2)
                    + 10.1 * ((x2 - 1.0).powi(2) + (x4 - 1.0).powi(2))
                    + 19.8 * (x2 - 1.0) * (x4 - 1.0)
            }
            Family::Forretal => {
                let t = x[0];
                (6.0 * t - 2.0).powi(2) * (12.0 * t - 4.0).sin()
            }
            Family::Rosen => 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2),
        }
    }

    pub fn distortion(self) -> Distortion {
        match self {
            Family::Branin => Distortion {
                a: 3.895,
                gamma: 0.7,
                delta: &[6.75, 0.75],
                b: -76.59,
            },
            Family::Colville => Distortion {
                a: 168.2,
                gamma: 0.2,
                delta: &[0.0, 9.0, -1.0, -5.0],
                b: -1.474e6,
            },
            Family::Forretal => Distortion {
                a: 4.019,
                gamma: 0.7,
                delta: &[-0.15],
                b: -4.347,
            },
            Family::Rosen => Distortion {
                a: 7.912,
                gamma: 0.5,
                delta: &[0.0, 0.5],
                b: -398.2,
            },
        }
    }

    pub fn minimum(self) -> ReferenceOptimum {
        let (x, value) = match self {
            Family::Branin => (vec![PI, 2.275], 0.397887357729738),
            Family::Colville => (vec![1.0; 4], 0.0),
            Family::Forretal => (vec![0.7572487561660257], -6.020740055767081),
            Family::Rosen => (vec![1.0, 1.0], 0.0),
        };
        ReferenceOptimum { x: Some(x), value }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticProblem {
    pub family: Family,
    pub kappa_cor: f64,
    pub sd_h: f64,
    pub sd_l: f64,
    /// LF cost per call relative to HF.
    pub ratio: f64,
    domain: BoxDomain,
}

impl SyntheticProblem {
    pub fn new(family: Family, kappa_cor: f64, sd_h: f64, sd_l: f64, ratio: f64) -> Self {
        let (lo, hi) = family.bounds();
        SyntheticProblem {
            family,
            kappa_cor,
            sd_h,
            sd_l,
            ratio,
            domain: BoxDomain { lo, hi },
        }
    }

    pub(crate) fn from_params(family: Family, p: &mut Params) -> Result<Self, ProblemError> {
        let kcor = p.f64("kcor", 0.5)?;
        if !(0.0..=1.0).contains(&kcor) {
            return Err(p.bad("kcor", kcor, "must lie in [0, 1]"));
        }
        let sdh = p.f64("sdh", 20.0)?;
        let sdl = p.f64("sdl", 20.0)?;
        for (k, v) in [("sdh", sdh), ("sdl", sdl)] {
            if v < 0.0 {
                return Err(p.bad(k, v, "must be non-negative"));
            }
        }
        let ratio = p.f64("ratio", 0.1)?;
        if !(ratio > 0.0) {
            return Err(p.bad("ratio", ratio, "must be positive"));
        }
        Ok(Self::new(family, kcor, sdh, sdl, ratio))
    }

    pub fn hf_mean(&self, x: &[f64]) -> f64 {
        self.family.eval(x)
    }

    pub fn lf_mean(&self, x: &[f64]) -> f64 {
        let d = self.family.distortion();
        let y: Vec<f64> = x.iter().zip(d.delta).map(|(v, s)| d.gamma * v + s).collect();
        let shaped = d.a * self.family.eval(&y) + d.b;
        self.kappa_cor * self.family.eval(x) + (1.0 - self.kappa_cor) * shaped
    }
}

impl BiFidelityOracle for SyntheticProblem {
    fn dim(&self) -> usize {
        self.family.dim()
    }

    fn costs(&self) -> FidelityCosts {
        FidelityCosts::new(1.0, self.ratio)
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
        // E^h first so that `hf` can stop after one normal.
        let zh: f64 = StandardNormal.sample(rng);
        let zl: f64 = StandardNormal.sample(rng);
        let (eh, el) = (self.sd_h * zh, self.sd_l * zl);
        (self.hf_mean(x) + eh, self.lf_mean(x) + 0.5 * (eh + el))
    }

    fn hf(&self, x: &[f64], rng: &mut ReplicationRng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.hf_mean(x) + self.sd_h * z
    }
}

impl Problem for SyntheticProblem {
    fn id(&self) -> String {
        format!(
            "{}?kcor={}&sdh={}&sdl={}&ratio={}",
            self.family.name(),
            self.kappa_cor,
            self.sd_h,
            self.sd_l,
            self.ratio
        )
    }

    fn x0(&self) -> Vec<f64> {
        self.domain.center()
    }

    fn delta_max(&self) -> f64 {
        0.5 * self.domain.min_side()
    }

    fn reference(&self) -> ReferenceOptimum {
        self.family.minimum()
    }

    fn true_objective(&self, x: &[f64]) -> Option<f64> {
        Some(self.hf_mean(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::StreamKey;

    fn grid(f: Family, per_axis: usize) -> Vec<Vec<f64>> {
        let (lo, hi) = f.bounds();
        let mut pts = vec![vec![]];
        for (l, h) in lo.iter().zip(&hi) {
            let mut next = Vec::new();
            for p in &pts {
                for i in 0..per_axis {
                    let mut q = p.clone();
                    q.push(l + (h - l) * i as f64 / (per_axis - 1) as f64);
                    next.push(q);
                }
            }
            pts = next;
        }
        pts
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn distortion_calibration() {
        for f in Family::ALL {
            let per = match f.dim() {
                1 => 1001,
                2 => 101,
                _ => 11,
            };
            let pts = grid(f, per);
            let mut last = -1.0;
            for (kcor, want) in [(0.1, 0.1), (0.5, 0.49), (0.9, 0.977)] {
                let p = SyntheticProblem::new(f, kcor, 0.0, 0.0, 0.1);
                let h: Vec<f64> = pts.iter().map(|x| p.hf_mean(x)).collect();
                let l: Vec<f64> = pts.iter().map(|x| p.lf_mean(x)).collect();
                let r = pearson(&h, &l);
                assert!((r - want).abs() < 0.015, "{f:?} kcor {kcor}: {r}");
                assert!(r > last);
                last = r;
            }
        }
    }

    #[test]
    fn zero_noise_full_correlation_is_identity() {
        let mut rng = StreamKey::new(0, 0).replication(0);
        for f in Family::ALL {
            let p = SyntheticProblem::new(f, 1.0, 0.0, 0.0, 0.1);
            let x = p.x0();
            let (h, l) = p.paired(&x, &mut rng);
            assert_eq!(h, f.eval(&x));
            assert_eq!(l, h);
        }
    }

    #[test]
    fn known_minima() {
        for f in Family::ALL {
            let m = f.minimum();
            assert!((f.eval(m.x.as_ref().unwrap()) - m.value).abs() < 1e-9, "{f:?}");
        }
        // 1000 x 1000 grid on the Branin box never beats the recorded value
        let p = SyntheticProblem::new(Family::Branin, 0.5, 0.0, 0.0, 0.1);
        let mut best = f64::INFINITY;
        for i in 0..1000 {
            for j in 0..1000 {
                let x = [-5.0 + 15.0 * i as f64 / 999.0, 15.0 * j as f64 / 999.0];
                best = best.min(p.hf_mean(&x));
            }
        }
        assert!(best >= 0.397887357729738 - 1e-12 && best - 0.397887357729738 < 1e-3);
    }

    #[test]
    fn noise_moments_and_paired_correlation() {
        let p = SyntheticProblem::new(Family::Rosen, 0.5, 20.0, 20.0, 0.1);
        let x = [0.3, 0.7];
        let key = StreamKey::new(4, 9);
        let n = 100_000;
        let draws: Vec<(f64, f64)> = (0..n).map(|i| p.paired(&x, &mut key.replication(i))).collect();
        let hs: Vec<f64> = draws.iter().map(|d| d.0).collect();
        let ls: Vec<f64> = draws.iter().map(|d| d.1).collect();
        let mean = hs.iter().sum::<f64>() / n as f64;
        let sd = (hs.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((mean - p.hf_mean(&x)).abs() < 4.0 * 20.0 / (n as f64).sqrt());
        assert!((sd / 20.0 - 1.0).abs() < 0.03);
        // noise-part correlation 200 / (20 sqrt 200)
        let r = pearson(&hs, &ls);
        assert!((r - 0.5f64.sqrt()).abs() < 0.01, "{r}");
        // single-fidelity HF call replays the paired HF half
        assert_eq!(p.hf(&x, &mut key.replication(17)), draws[17].0);
    }

    #[test]
    fn positive_covariance_at_random_points() {
        use rand::Rng;
        let mut pick = StreamKey::new(99, 1).replication(0);
        for f in Family::ALL {
            let p = SyntheticProblem::new(f, 0.9, 20.0, 30.0, 0.1);
            let (lo, hi) = f.bounds();
            for _ in 0..10 {
                let x: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| pick.random_range(*l..*h)).collect();
                let draws: Vec<(f64, f64)> =
                    (0..2000).map(|i| p.paired(&x, &mut StreamKey::new(1, 2).replication(i))).collect();
                let hs: Vec<f64> = draws.iter().map(|d| d.0).collect();
                let ls: Vec<f64> = draws.iter().map(|d| d.1).collect();
                assert!(pearson(&hs, &ls) > 0.0);
            }
        }
    }

    #[test]
    fn metadata() {
        let p = SyntheticProblem::new(Family::Branin, 0.9, 20.0, 20.0, 0.1);
        assert_eq!(p.x0(), vec![2.5, 7.5]);
        assert_eq!(p.delta_max(), 7.5);
        assert_eq!(p.id(), "branin?kcor=0.9&sdh=20&sdl=20&ratio=0.1");
        assert_eq!(p.project(&[20.0, -1.0]), vec![10.0, 0.0]);
        let r = SyntheticProblem::new(Family::Rosen, 0.9, 20.0, 20.0, 0.1);
        assert_eq!(r.x0(), vec![0.0, 1.0]);
        assert_eq!(r.delta_max(), 2.0);
    }
}
