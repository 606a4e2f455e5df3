//! Bi-fidelity test problems: four synthetic families with tunable HF-LF
//! correlation, an M/M/1 queue and an (s, S) inventory system.
//!
//! Problems are addressed by strings such as
//! `branin?kcor=0.9&sdh=20&sdl=20&ratio=0.1`, `mm1?lambda=1` or
//! `sscont?muD=100&muL=6`.

mod mm1;
mod sscont;
mod synthetic;

pub use mm1::{simulate_mm1, ExpQueueSource, Mm1Problem, QueueEvent, QueueEventKind, QueueSource, SojournStats};
pub use sscont::{
    simulate_sscont, InventoryCosts, InventorySource, PeriodCost, RandomInventory, SscontProblem,
};
pub use synthetic::{Distortion, Family, SyntheticProblem};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::{hash_str, BiFidelityOracle, OracleError};

#[derive(Debug, Error, PartialEq)]
pub enum ProblemError {
    #[error("unknown problem `{0}`")]
    UnknownProblem(String),
    #[error("problem `{problem}` has no parameter `{key}`")]
    UnknownParameter { problem: String, key: String },
    #[error("bad value `{value}` for `{key}` in `{problem}`: {reason}")]
    BadParameter {
        problem: String,
        key: String,
        value: String,
        reason: String,
    },
}

/// Best known solution, used as metadata for gap reporting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceOptimum {
    pub x: Option<Vec<f64>>,
    pub value: f64,
}

/// A registered benchmark instance.
pub trait Problem: BiFidelityOracle {
    /// Canonical problem string; parsing it yields the same instance.
    fn id(&self) -> String;
    fn x0(&self) -> Vec<f64>;
    fn delta_max(&self) -> f64;
    fn reference(&self) -> ReferenceOptimum;

    /// Noise-free HF objective when it is known in closed form.
    fn true_objective(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// Stream tag derived from the id.
    fn tag(&self) -> u64 {
        hash_str(&self.id())
    }
}

/// Axis-aligned box used for domain checks and projection.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn check(&self, x: &[f64]) -> Result<(), OracleError> {
        if x.len() != self.lo.len() {
            return Err(OracleError::Dimension {
                expected: self.lo.len(),
                got: x.len(),
            });
        }
        for (i, v) in x.iter().enumerate() {
            let slack = 1e-12 * (self.hi[i] - self.lo[i]);
            if !(v.is_finite() && *v >= self.lo[i] - slack && *v <= self.hi[i] + slack) {
                return Err(OracleError::Domain {
                    point: x.to_vec(),
                    reason: format!("coordinate {i} outside [{}, {}]", self.lo[i], self.hi[i]),
                });
            }
        }
        Ok(())
    }

    pub fn clip(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (l, h))| if v.is_nan() { 0.5 * (l + h) } else { v.clamp(*l, *h) })
            .collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn min_side(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).fold(f64::INFINITY, f64::min)
    }
}

/// `key=value` pairs of a problem string, consumed as they are read.
pub(crate) struct Params {
    problem: String,
    pairs: Vec<(String, String)>,
}

impl Params {
    fn parse(problem: &str, query: &str) -> Result<Self, ProblemError> {
        let mut pairs = Vec::new();
        for item in query.split('&').filter(|s| !s.is_empty()) {
            let (k, v) = item.split_once('=').ok_or_else(|| ProblemError::BadParameter {
                problem: problem.to_string(),
                key: item.to_string(),
                value: String::new(),
                reason: "expected key=value".into(),
            })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(Params {
            problem: problem.to_string(),
            pairs,
        })
    }

    pub fn bad(&self, key: &str, value: impl ToString, reason: &str) -> ProblemError {
        ProblemError::BadParameter {
            problem: self.problem.clone(),
            key: key.to_string(),
            value: value.to_string(),
            reason: reason.to_string(),
        }
    }

    pub fn f64(&mut self, key: &str, default: f64) -> Result<f64, ProblemError> {
        match self.pairs.iter().position(|(k, _)| k == key) {
            None => Ok(default),
            Some(i) => {
                let (_, v) = self.pairs.remove(i);
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| self.bad(key, &v, "not a finite number"))
            }
        }
    }

    fn finish(self) -> Result<(), ProblemError> {
        match self.pairs.into_iter().next() {
            None => Ok(()),
            Some((key, _)) => Err(ProblemError::UnknownParameter {
                problem: self.problem,
                key,
            }),
        }
    }
}

/// Problem names with their parameters and defaults.
pub fn list_problems() -> Vec<(&'static str, &'static str)> {
    vec![
        ("branin", "kcor=0.5 sdh=20 sdl=20 ratio=0.1"),
        ("colville", "kcor=0.5 sdh=20 sdl=20 ratio=0.1"),
        ("forretal", "kcor=0.5 sdh=20 sdl=20 ratio=0.1"),
        ("rosen", "kcor=0.5 sdh=20 sdl=20 ratio=0.1"),
        ("mm1", "lambda=1 ratio=0.3 horizon=5000 warmup=1000"),
        ("sscont", "muD=100 muL=6 ratio=0.3"),
    ]
}

pub fn parse_problem(spec: &str) -> Result<Box<dyn Problem>, ProblemError> {
    let (name, query) = spec.trim().split_once('?').unwrap_or((spec.trim(), ""));
    let name = name.to_ascii_lowercase();
    let mut p = Params::parse(&name, query)?;
    let problem: Box<dyn Problem> = match name.as_str() {
        "mm1" => Box::new(Mm1Problem::from_params(&mut p)?),
        "sscont" => Box::new(SscontProblem::from_params(&mut p)?),
        other => match Family::from_name(other) {
            Some(f) => Box::new(SyntheticProblem::from_params(f, &mut p)?),
            None => return Err(ProblemError::UnknownProblem(spec.to_string())),
        },
    };
    p.finish()?;
    Ok(problem)
}

/// The twelve-instance synthetic subset: every family at low and high
/// correlation with equal noise, plus one extra noise mix per family.
pub fn desk_synthetic_suite(ratio: f64) -> Vec<String> {
    let mut out = Vec::new();
    for f in Family::ALL {
        for kcor in [0.1, 0.9] {
            out.push(format!("{}?kcor={kcor}&sdh=20&sdl=20&ratio={ratio}", f.name()));
        }
    }
    let extra = [(30, 40), (40, 20), (20, 40), (40, 40)];
    for (f, (sdh, sdl)) in Family::ALL.iter().zip(extra) {
        out.push(format!("{}?kcor=0.5&sdh={sdh}&sdl={sdl}&ratio={ratio}", f.name()));
    }
    out
}
