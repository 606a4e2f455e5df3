//! Interpolation design sets for the diagonal-Hessian quadratic model.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::oracle::DesignPoint;

/// Smallest admissible singular value of the normalized direction matrix.
pub const THETA_GEO: f64 = 1e-3;

/// Reused points closer to the center than this fraction of the radius are
/// skipped; they would amplify estimation noise in the fitted gradient.
pub const MIN_REUSE_DISTANCE: f64 = 0.5;

/// Largest condition number accepted for the scaled interpolation matrix.
pub const MAX_SYSTEM_CONDITION: f64 = 1.0 / (THETA_GEO * THETA_GEO);

/// `2d + 1` points: the center, `d` direction points, then their mirrors
/// (or one-sided substitutes near a boundary).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSet {
    pub center: DesignPoint,
    pub delta: f64,
    pub points: Vec<DesignPoint>,
    /// Which points were taken from the cache of evaluated points.
    pub reuse_flags: Vec<bool>,
    /// Orthonormal directions (rows) in which the model Hessian is diagonal;
    /// `None` means the coordinate axes.
    #[serde(default)]
    pub frame: Option<Vec<Vec<f64>>>,
}

impl DesignSet {
    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    /// Plain `±` coordinate basis at radius `delta`.
    pub fn coordinate(center: &[f64], delta: f64) -> Self {
        let d = center.len();
        let mut points = Vec::with_capacity(2 * d + 1);
        points.push(DesignPoint::new(center.to_vec()));
        for sign in [1.0, -1.0] {
            for i in 0..d {
                let mut p = center.to_vec();
                p[i] += sign * delta;
                points.push(DesignPoint::new(p));
            }
        }
        DesignSet {
            center: DesignPoint::new(center.to_vec()),
            delta,
            reuse_flags: vec![false; points.len()],
            points,
            frame: None,
        }
    }

    /// Offset `s` expressed in the design frame.
    pub fn to_frame(&self, s: &[f64]) -> Vec<f64> {
        to_frame(self.frame.as_deref(), s)
    }

    /// Offsets of the points from the center.
    pub fn offsets(&self) -> Vec<Vec<f64>> {
        self.points
            .iter()
            .map(|p| p.iter().zip(self.center.iter()).map(|(a, b)| a - b).collect())
            .collect()
    }

    /// Interpolation matrix in coordinates scaled by `delta`.
    pub fn scaled_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        let offs: Vec<Vec<f64>> = self.offsets().iter().map(|s| self.to_frame(s)).collect();
        DMatrix::from_fn(2 * d + 1, 2 * d + 1, |r, c| {
            let s = &offs[r];
            if c == 0 {
                1.0
            } else if c <= d {
                s[c - 1] / self.delta
            } else {
                let t = s[c - d - 1] / self.delta;
                0.5 * t * t
            }
        })
    }

    pub fn condition_number(&self) -> f64 {
        condition(&self.scaled_matrix())
    }

    pub fn is_well_poised(&self) -> bool {
        self.points.len() == 2 * self.dim() + 1 && self.condition_number() <= MAX_SYSTEM_CONDITION
    }

    /// Replaces infeasible points. A direction whose mirror is infeasible is
    /// sampled one-sidedly at the full and half offsets. Returns `None` when
    /// some direction is infeasible on both sides or poisedness is lost.
    pub fn repair(&self, feasible: impl Fn(&[f64]) -> bool) -> Option<DesignSet> {
        let d = self.dim();
        if !feasible(&self.center) {
            return None;
        }
        let offs = self.offsets();
        let mut out = self.clone();
        let c = self.center.coords();
        let at = |u: &[f64], scale: f64| -> Vec<f64> {
            c.iter().zip(u).map(|(ci, ui)| ci + scale * ui).collect()
        };
        for i in 0..d {
            let (ip, im) = (1 + i, 1 + d + i);
            let plus_ok = feasible(&self.points[ip]);
            let minus_ok = feasible(&self.points[im]);
            match (plus_ok, minus_ok) {
                (true, true) => {}
                (true, false) => {
                    out.points[im] = DesignPoint::new(at(&offs[ip], 0.5));
                    out.reuse_flags[im] = false;
                }
                (false, true) => {
                    out.points[ip] = DesignPoint::new(at(&offs[im], 0.5));
                    out.reuse_flags[ip] = false;
                    // keep the full-length point first so mirrors stay paired
                    out.points.swap(ip, im);
                    out.reuse_flags.swap(ip, im);
                }
                (false, false) => {
                    let half_p = at(&offs[ip], 0.5);
                    let half_m = at(&offs[im], 0.5);
                    if feasible(&half_p) && feasible(&half_m) {
                        out.points[ip] = DesignPoint::new(half_p);
                        out.points[im] = DesignPoint::new(half_m);
                        out.reuse_flags[ip] = false;
                        out.reuse_flags[im] = false;
                    } else {
                        return None;
                    }
                }
            }
        }
        out.is_well_poised().then_some(out)
    }
}

pub(crate) fn to_frame(frame: Option<&[Vec<f64>]>, s: &[f64]) -> Vec<f64> {
    match frame {
        None => s.to_vec(),
        Some(q) => q.iter().map(|row| row.iter().zip(s).map(|(a, b)| a * b).sum()).collect(),
    }
}

pub(crate) fn from_frame(frame: Option<&[Vec<f64>]>, t: &[f64]) -> Vec<f64> {
    match frame {
        None => t.to_vec(),
        Some(q) => {
            let mut s = vec![0.0; t.len()];
            for (row, tj) in q.iter().zip(t) {
                for (si, qi) in s.iter_mut().zip(row) {
                    *si += tj * qi;
                }
            }
            s
        }
    }
}

fn condition(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if !(min > 0.0) {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Columns of the Householder reflection taking `e1` to `dir / |dir|`.
fn aligned_basis(d: usize, dir: Option<&[f64]>) -> Vec<Vec<f64>> {
    let identity = || {
        (0..d)
            .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect()
    };
    let Some(dir) = dir else { return identity() };
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return identity();
    }
    let mut v: Vec<f64> = dir.iter().map(|x| -x / norm).collect();
    v[0] += 1.0;
    let vv: f64 = v.iter().map(|x| x * x).sum();
    if vv < 1e-24 {
        return identity();
    }
    (0..d)
        .map(|col| {
            (0..d)
                .map(|row| {
                    let e = if row == col { 1.0 } else { 0.0 };
                    e - 2.0 * v[row] * v[col] / vv
                })
                .collect()
        })
        .collect()
}

fn residual(u: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut r = u.to_vec();
    // two passes of modified Gram-Schmidt for stability
    for _ in 0..2 {
        for b in basis {
            let dot: f64 = r.iter().zip(b).map(|(x, y)| x * y).sum();
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri -= dot * bi;
            }
        }
    }
    r
}

fn norm(u: &[f64]) -> f64 {
    u.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn direction_condition(dirs: &[Vec<f64>]) -> f64 {
    let d = dirs[0].len();
    let m = DMatrix::from_fn(dirs.len(), d, |r, c| dirs[r][c]);
    let sv = m.svd(false, false).singular_values;
    let min = sv.min();
    if !(min > 0.0) {
        f64::INFINITY
    } else {
        sv.max() / min
    }
}

/// HF design set reusing cached points inside the ball where possible.
///
/// Cached points are considered farthest first (ties in cache order). A
/// point is admitted when its normalized direction adds a component of at
/// least [`THETA_GEO`] to the span of the directions already admitted and
/// keeps their condition number within `1 / THETA_GEO`. Remaining directions
/// come from a coordinate basis rotated so that its first axis follows
/// `last_step`, projected onto the orthogonal complement of the admitted
/// directions. Every direction is then mirrored through the center. The
/// Gram-Schmidt basis of the directions becomes the model frame, so a
/// rotated basis stays as well poised as the plain one.
pub fn select_hf_design_set(
    center: &[f64],
    delta: f64,
    cache: &[DesignPoint],
    last_step: Option<&[f64]>,
) -> DesignSet {
    let d = center.len();
    let c = DesignPoint::new(center.to_vec());
    let mut candidates: Vec<(usize, f64)> = cache
        .iter()
        .enumerate()
        .filter(|(_, p)| p.dim() == d && p.is_finite())
        .map(|(i, p)| (i, p.distance(center)))
        .filter(|(_, r)| *r >= MIN_REUSE_DISTANCE * delta && *r <= delta * (1.0 + 1e-12))
        .collect();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut chosen: Vec<(Vec<f64>, bool)> = Vec::with_capacity(d);
    for (i, r) in candidates {
        if dirs.len() == d {
            break;
        }
        let off: Vec<f64> = cache[i].iter().zip(center).map(|(a, b)| a - b).collect();
        let u: Vec<f64> = off.iter().map(|x| x / r).collect();
        let res = residual(&u, &ortho);
        let rn = norm(&res);
        if rn < THETA_GEO {
            continue;
        }
        let mut trial = dirs.clone();
        trial.push(u.clone());
        if direction_condition(&trial) > 1.0 / THETA_GEO {
            continue;
        }
        dirs = trial;
        ortho.push(res.iter().map(|x| x / rn).collect());
        chosen.push((off, true));
    }

    let basis = aligned_basis(d, last_step);
    while chosen.len() < d {
        // first basis vector with the largest residual
        let mut best = residual(&basis[0], &ortho);
        let mut bn = norm(&best);
        for b in &basis[1..] {
            let r = residual(b, &ortho);
            let rn = norm(&r);
            if rn > bn * (1.0 + 1e-9) {
                best = r;
                bn = rn;
            }
        }
        let u: Vec<f64> = best.iter().map(|x| x / bn).collect();
        ortho.push(u.clone());
        chosen.push((u.iter().map(|x| x * delta).collect(), false));
    }

    let mut points = vec![c.clone()];
    let mut flags = vec![true];
    for (off, reused) in &chosen {
        points.push(DesignPoint::new(center.iter().zip(off).map(|(a, b)| a + b).collect()));
        flags.push(*reused);
    }
    for (off, _) in &chosen {
        points.push(DesignPoint::new(center.iter().zip(off).map(|(a, b)| a - b).collect()));
        flags.push(false);
    }
    let set = DesignSet {
        center: c,
        delta,
        points,
        reuse_flags: flags,
        frame: Some(ortho),
    };
    if set.is_well_poised() {
        set
    } else {
        let mut fresh = DesignSet::coordinate(center, delta);
        fresh.reuse_flags[0] = true;
        fresh
    }
}

/// LF design set: the `±` coordinate basis.
pub fn select_lf_design_set(center: &[f64], delta: f64) -> DesignSet {
    DesignSet::coordinate(center, delta)
}

/// Smallest singular value of the normalized offsets of points `1..=d`.
pub fn direction_singular_min(set: &DesignSet) -> f64 {
    let d = set.dim();
    let offs = set.offsets();
    let m = DMatrix::from_fn(d, d, |r, c| offs[1 + r][c] / norm(&offs[1 + r]));
    m.svd(false, false).singular_values.min()
}

pub(crate) fn solve(set: &DesignSet, rhs: &[f64]) -> Option<DVector<f64>> {
    let m = set.scaled_matrix();
    if condition(&m) > MAX_SYSTEM_CONDITION {
        return None;
    }
    let b = DVector::from_column_slice(rhs);
    m.lu().solve(&b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(set: &DesignSet) -> Vec<Vec<f64>> {
        set.points.iter().map(|p| p.coords().to_vec()).collect()
    }

    #[test]
    fn fresh_coordinate_set() {
        let s = select_hf_design_set(&[0.0, 0.0], 1.0, &[], None);
        assert_eq!(
            pts(&s),
            vec![
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![-1.0, 0.0],
                vec![0.0, -1.0]
            ]
        );
    }

    #[test]
    fn lf_sets() {
        let s = select_lf_design_set(&[3.0], 2.0);
        assert_eq!(pts(&s), vec![vec![3.0], vec![5.0], vec![1.0]]);
        let s = select_lf_design_set(&[1.0, 1.0], 0.5);
        assert_eq!(
            pts(&s),
            vec![
                vec![1.0, 1.0],
                vec![1.5, 1.0],
                vec![1.0, 1.5],
                vec![0.5, 1.0],
                vec![1.0, 0.5]
            ]
        );
        for p in &s.points[1..] {
            assert!((p.distance(&[1.0, 1.0]) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn single_cached_direction_is_reused() {
        let cache = vec![DesignPoint::new(vec![0.5, 0.0])];
        let s = select_hf_design_set(&[0.0, 0.0], 1.0, &cache, None);
        assert_eq!(s.points[1].coords(), &[0.5, 0.0]);
        assert!(s.reuse_flags[1]);
        assert_eq!(s.points[3].coords(), &[-0.5, 0.0]);
        assert!(!s.reuse_flags[3]);
        assert!(s.is_well_poised());
        // remaining direction fills the orthogonal complement at radius delta
        assert!((s.points[2].distance(&[0.0, 0.0]) - 1.0).abs() < 1e-12);
        assert!(s.points[2].coords()[0].abs() < 1e-12);
    }

    #[test]
    fn random_cache_selection_is_well_conditioned() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(11);
        for _ in 0..20 {
            let d = 5;
            let cache: Vec<DesignPoint> = (0..50)
                .map(|_| {
                    // uniform in the ball by rejection
                    loop {
                        let p: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                        if norm(&p) <= 1.0 {
                            break DesignPoint::new(p);
                        }
                    }
                })
                .collect();
            let s = select_hf_design_set(&[0.0; 5], 1.0, &cache, None);
            assert_eq!(s.points.len(), 11);
            let m = DMatrix::from_fn(d, d, |r, c| {
                let o = s.points[1 + r].coords();
                o[c] / norm(o)
            });
            let sv = m.svd(false, false).singular_values;
            assert!(sv.max() / sv.min() <= 1.0 / THETA_GEO);
            for p in &s.points {
                assert!(p.distance(&[0.0; 5]) <= 1.0 + 1e-12);
            }
            assert!(s.reuse_flags[1..=d].iter().any(|f| *f));
        }
    }

    #[test]
    fn rotated_fill_follows_last_step() {
        let s = select_hf_design_set(&[0.0, 0.0, 0.0], 2.0, &[], Some(&[0.0, 3.0, 4.0]));
        let first = s.points[1].coords();
        let expect = [0.0, 1.2, 1.6];
        for (a, b) in first.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{first:?}");
        }
        assert!(s.is_well_poised());
    }

    #[test]
    fn diagonal_rotation_is_as_poised_as_the_axes() {
        // in the axes a 45 degree basis makes the squared-coordinate block
        // singular; in its own frame it is the plain coordinate system
        let s = select_hf_design_set(&[0.0, 0.0], 1.0, &[], Some(&[1.0, 1.0]));
        let h = 0.5f64.sqrt();
        let p = s.points[1].coords();
        assert!((p[0] - h).abs() < 1e-12 && (p[1] - h).abs() < 1e-12, "{p:?}");
        let plain = DesignSet::coordinate(&[0.0, 0.0], 1.0).condition_number();
        assert!((s.condition_number() - plain).abs() < 1e-9);
    }

    #[test]
    fn repair_uses_one_sided_offsets() {
        let s = DesignSet::coordinate(&[0.0, 0.5], 1.0);
        let r = s.repair(|x| x.iter().all(|v| *v >= 0.0)).unwrap();
        assert_eq!(r.points[1].coords(), &[1.0, 0.5]);
        assert_eq!(r.points[3].coords(), &[0.5, 0.5]);
        assert_eq!(r.points[2].coords(), &[0.0, 1.5]);
        assert_eq!(r.points[4].coords(), &[0.0, 1.0]);
        // both sides infeasible at full length, both feasible at half length
        let r = s.repair(|x| x[1] >= -0.1 && x[1] <= 1.2).unwrap();
        assert_eq!(r.points[2].coords(), &[0.0, 1.0]);
        assert_eq!(r.points[4].coords(), &[0.0, 0.0]);
        assert!(s.repair(|x| x[0] > 5.0).is_none());
    }

    proptest! {
        #[test]
        fn mirrored_structure(cx in -5.0f64..5.0, cy in -5.0f64..5.0, delta in 0.01f64..3.0,
                              sx in -1.0f64..1.0, sy in -1.0f64..1.0) {
            let c = [cx, cy];
            let s = select_hf_design_set(&c, delta, &[], Some(&[sx, sy]));
            prop_assert_eq!(s.points.len(), 5);
            prop_assert!(s.is_well_poised());
            for i in 0..2 {
                for k in 0..2 {
                    let mirrored = 2.0 * c[k] - s.points[1 + i].coords()[k];
                    prop_assert!((s.points[3 + i].coords()[k] - mirrored).abs() < 1e-9);
                }
            }
            for p in &s.points {
                prop_assert!(p.distance(&c) <= delta * (1.0 + 1e-12));
            }
        }
    }
}
