use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HarnessError, TrialRow};

const Z95: f64 = 1.96;

/// Fraction of (problem, macrorep) pairs solved at each budget fraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub solver: String,
    pub fractions: Vec<f64>,
    pub solved: Vec<f64>,
    pub half_width: Vec<f64>,
    pub pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub curves: Vec<ProfileCurve>,
    /// Problems whose start already equals the best value found.
    pub excluded: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapCurve {
    pub solver: String,
    pub fractions: Vec<f64>,
    pub mean_gap: Vec<f64>,
    pub half_width: Vec<f64>,
}

fn first_seen<'a>(it: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in it {
        if !out.iter().any(|o| o == s) {
            out.push(s.to_string());
        }
    }
    out
}

fn fractions(rows: &[TrialRow]) -> Vec<f64> {
    let mut f: Vec<f64> = rows.iter().map(|r| r.fraction).collect();
    f.sort_by(f64::total_cmp);
    f.dedup();
    f
}

/// `(f_best, f(x0) - f_best)` for one problem, or `None` when degenerate.
fn normalization(rows: &[TrialRow], problem: &str) -> Option<(f64, f64)> {
    let mine = rows.iter().filter(|r| r.problem == problem);
    let best = mine.clone().map(|r| r.best_objective).fold(f64::INFINITY, f64::min);
    let f0 = mine.map(|r| r.x0_objective).next()?;
    let denom = f0 - best;
    (denom > 1e-12 * f0.abs().max(1.0)).then_some((best, denom))
}

fn gap(row: &TrialRow, (best, denom): (f64, f64)) -> f64 {
    (row.best_objective - best) / denom
}

/// Solved fractions per solver using best-so-far recommendations, with
/// normal-approximation 95% intervals over the pair population.
pub fn solvability_profile(rows: &[TrialRow], gap_alpha: f64) -> ProfileReport {
    let problems = first_seen(rows.iter().map(|r| r.problem.as_str()));
    let mut norms = BTreeMap::new();
    let mut excluded = Vec::new();
    for p in &problems {
        match normalization(rows, p) {
            Some(n) => {
                norms.insert(p.clone(), n);
            }
            None => {
                log::warn!("excluding {p}: the start point is already the best value found");
                excluded.push(p.clone());
            }
        }
    }
    let grid = fractions(rows);
    let curves = first_seen(rows.iter().map(|r| r.solver.as_str()))
        .into_iter()
        .map(|solver| {
            let mine: Vec<&TrialRow> = rows
                .iter()
                .filter(|r| r.solver == solver && norms.contains_key(&r.problem))
                .collect();
            let mut pairs: Vec<(&str, u64)> = mine.iter().map(|r| (r.problem.as_str(), r.macrorep)).collect();
            pairs.sort();
            pairs.dedup();
            let m = pairs.len();
            let mut solved = Vec::with_capacity(grid.len());
            let mut half = Vec::with_capacity(grid.len());
            for &t in &grid {
                let hits = mine
                    .iter()
                    .filter(|r| r.fraction == t && gap(r, norms[&r.problem]) <= gap_alpha)
                    .count();
                let v = if m == 0 { 0.0 } else { hits as f64 / m as f64 };
                solved.push(v);
                half.push(if m == 0 { 0.0 } else { Z95 * (v * (1.0 - v) / m as f64).sqrt() });
            }
            ProfileCurve {
                solver,
                fractions: grid.clone(),
                solved,
                half_width: half,
                pairs: m,
            }
        })
        .collect();
    ProfileReport { curves, excluded }
}

/// Mean relative gap per solver on one problem, with 95% intervals over
/// macroreplications.
pub fn gap_curve(rows: &[TrialRow], problem: &str) -> Result<Vec<GapCurve>, HarnessError> {
    let mine: Vec<TrialRow> = rows.iter().filter(|r| r.problem == problem).cloned().collect();
    if mine.is_empty() {
        return Err(HarnessError::Config(format!("no results for problem `{problem}`")));
    }
    let norm = normalization(&mine, problem).ok_or_else(|| {
        HarnessError::Config(format!("gap undefined for `{problem}`: start equals best value"))
    })?;
    let grid = fractions(&mine);
    Ok(first_seen(mine.iter().map(|r| r.solver.as_str()))
        .into_iter()
        .map(|solver| {
            let mut mean_gap = Vec::new();
            let mut half_width = Vec::new();
            for &t in &grid {
                let g: Vec<f64> = mine
                    .iter()
                    .filter(|r| r.solver == solver && r.fraction == t)
                    .map(|r| gap(r, norm))
                    .collect();
                let n = g.len() as f64;
                let mean = g.iter().sum::<f64>() / n;
                let hw = if g.len() < 2 {
                    0.0
                } else {
                    let var = g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
                    Z95 * (var / n).sqrt()
                };
                mean_gap.push(mean);
                half_width.push(hw);
            }
            GapCurve {
                solver,
                fractions: grid.clone(),
                mean_gap,
                half_width,
            }
        })
        .collect())
}

pub fn write_profile_tsv(curves: &[ProfileCurve], path: &Path) -> Result<(), HarnessError> {
    let mut s = String::from("solver\tfraction\tsolved\thalf_width\n");
    for c in curves {
        for i in 0..c.fractions.len() {
            let _ = writeln!(s, "{}\t{}\t{}\t{}", c.solver, c.fractions[i], c.solved[i], c.half_width[i]);
        }
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn write_gap_tsv(curves: &[GapCurve], path: &Path) -> Result<(), HarnessError> {
    let mut s = String::from("solver\tfraction\tmean_gap\thalf_width\n");
    for c in curves {
        for i in 0..c.fractions.len() {
            let _ = writeln!(s, "{}\t{}\t{}\t{}", c.solver, c.fractions[i], c.mean_gap[i], c.half_width[i]);
        }
    }
    std::fs::write(path, s)?;
    Ok(())
}
