//! One-pass moment accumulators.
//!
//! Variances use the `1/n` normalization throughout, matching the plug-in
//! estimates that drive the sampling rules.

use serde::{Deserialize, Serialize};

/// Univariate running mean and sum of squared deviations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    /// `m2 / n`; zero when empty.
    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0)
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }
}

/// Bivariate running moments over paired observations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CrossWelford {
    count: u64,
    mean_x: f64,
    mean_y: f64,
    m2_x: f64,
    m2_y: f64,
    m2_xy: f64,
}

impl CrossWelford {
    pub fn push(&mut self, x: f64, y: f64) {
        self.count += 1;
        let n = self.count as f64;
        let dx = x - self.mean_x;
        self.mean_x += dx / n;
        let dy = y - self.mean_y;
        self.mean_y += dy / n;
        self.m2_x += dx * (x - self.mean_x);
        self.m2_y += dy * (y - self.mean_y);
        self.m2_xy += dx * (y - self.mean_y);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean_x(&self) -> f64 {
        self.mean_x
    }

    pub fn mean_y(&self) -> f64 {
        self.mean_y
    }

    pub fn covariance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.m2_xy / self.count as f64
        }
    }

    pub fn m2_xy(&self) -> f64 {
        self.m2_xy
    }
}

/// Streaming moments for one design point.
///
/// HF draws occupy replication indices `0..n`, LF draws `0..v`; the cross
/// moments cover the common prefix `0..min(n, v)`. Callers push values in
/// index order so the three accumulators always describe prefixes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentAccumulator {
    hf: Welford,
    lf: Welford,
    paired: CrossWelford,
}

impl MomentAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds the moments of the prefixes `hf[..n]`, `lf[..v]`.
    pub fn from_prefix(hf: &[f64], lf: &[f64]) -> Self {
        let mut acc = Self::new();
        for h in hf {
            acc.hf.push(*h);
        }
        for l in lf {
            acc.lf.push(*l);
        }
        for (h, l) in hf.iter().zip(lf) {
            acc.paired.push(*h, *l);
        }
        acc
    }

    pub fn push_hf(&mut self, h: f64) {
        self.hf.push(h);
    }

    pub fn push_lf(&mut self, l: f64) {
        self.lf.push(l);
    }

    pub fn push_cross(&mut self, h: f64, l: f64) {
        self.paired.push(h, l);
    }

    pub fn n_hf(&self) -> u64 {
        self.hf.count()
    }

    pub fn v_lf_total(&self) -> u64 {
        self.lf.count()
    }

    pub fn n_paired(&self) -> u64 {
        self.paired.count()
    }

    pub fn mean_h(&self) -> f64 {
        self.hf.mean()
    }

    pub fn mean_l(&self) -> f64 {
        self.lf.mean()
    }

    /// LF mean over the paired prefix.
    pub fn mean_l_paired(&self) -> f64 {
        self.paired.mean_y()
    }

    pub fn m2_h(&self) -> f64 {
        self.hf.m2()
    }

    pub fn m2_l(&self) -> f64 {
        self.lf.m2()
    }

    pub fn m2_hl(&self) -> f64 {
        self.paired.m2_xy()
    }

    pub fn sigma2_h(&self) -> f64 {
        self.hf.variance()
    }

    pub fn sigma2_l(&self) -> f64 {
        self.lf.variance()
    }

    pub fn sigma_hl(&self) -> f64 {
        self.paired.covariance()
    }

    pub fn hf(&self) -> &Welford {
        &self.hf
    }

    pub fn lf(&self) -> &Welford {
        &self.lf
    }
}
