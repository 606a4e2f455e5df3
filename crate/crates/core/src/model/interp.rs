//! Quadratic interpolation with a diagonal Hessian.

use serde::{Deserialize, Serialize};

use super::design::{from_frame, solve, to_frame, DesignSet};
use super::ModelError;

/// `m(x) = nu0 + g't + 0.5 t' diag(h) t` with `t = Q (x - c)` for the
/// orthonormal frame `Q` (identity when `frame` is `None`).
///
/// `grad` and `hess_diag` are frame coordinates; [`InterpModel::gradient`]
/// returns the gradient in the original coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpModel {
    pub center: Vec<f64>,
    pub nu0: f64,
    pub grad: Vec<f64>,
    pub hess_diag: Vec<f64>,
    #[serde(default)]
    pub frame: Option<Vec<Vec<f64>>>,
}

impl InterpModel {
    pub fn to_frame(&self, s: &[f64]) -> Vec<f64> {
        to_frame(self.frame.as_deref(), s)
    }

    pub fn from_frame(&self, t: &[f64]) -> Vec<f64> {
        from_frame(self.frame.as_deref(), t)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let s: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        self.value_at_step(&s)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let s: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let t = self.to_frame(&s);
        let gt: Vec<f64> = (0..t.len()).map(|i| self.grad[i] + self.hess_diag[i] * t[i]).collect();
        self.from_frame(&gt)
    }

    /// Model value at `center + step`.
    pub fn value_at_step(&self, step: &[f64]) -> f64 {
        self.nu0
            + self
                .to_frame(step)
                .iter()
                .enumerate()
                .map(|(i, t)| self.grad[i] * t + 0.5 * self.hess_diag[i] * t * t)
                .sum::<f64>()
    }

    pub fn grad_norm(&self) -> f64 {
        self.grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// `max |h_i|`, the spectral norm of the diagonal Hessian.
    pub fn hess_norm(&self) -> f64 {
        self.hess_diag.iter().fold(0.0, |m, h| m.max(h.abs()))
    }
}

/// Solves the `(2d+1)`-square interpolation system for basis
/// `{1, s_i, s_i^2 / 2}` with `s = x - center`.
pub fn fit_interpolation(design: &DesignSet, estimates: &[f64]) -> Result<InterpModel, ModelError> {
    let d = design.dim();
    if estimates.len() != design.points.len() || design.points.len() != 2 * d + 1 {
        return Err(ModelError::Size {
            points: design.points.len(),
            values: estimates.len(),
        });
    }
    if estimates.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite);
    }
    let coef = solve(design, estimates).ok_or_else(|| ModelError::Geometry {
        condition: design.condition_number(),
    })?;
    let delta = design.delta;
    Ok(InterpModel {
        center: design.center.coords().to_vec(),
        nu0: coef[0],
        grad: (0..d).map(|i| coef[1 + i] / delta).collect(),
        hess_diag: (0..d).map(|i| coef[1 + d + i] / (delta * delta)).collect(),
        frame: design.frame.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::design::{select_hf_design_set, DesignSet};
    use crate::oracle::DesignPoint;
    use proptest::prelude::*;

    fn fit_fn(set: &DesignSet, f: impl Fn(&[f64]) -> f64) -> InterpModel {
        let vals: Vec<f64> = set.points.iter().map(|p| f(p.coords())).collect();
        fit_interpolation(set, &vals).unwrap()
    }

    #[test]
    fn recovers_one_dimensional_square() {
        let m = fit_fn(&DesignSet::coordinate(&[0.0], 1.0), |x| x[0] * x[0]);
        assert!(m.nu0.abs() < 1e-14);
        assert!(m.grad[0].abs() < 1e-14);
        assert!((m.hess_diag[0] - 2.0).abs() < 1e-13);
    }

    #[test]
    fn recovers_affine_function() {
        let f = |x: &[f64]| 3.0 + 2.0 * x[0] - x[1];
        let cache = vec![DesignPoint::new(vec![1.6, 1.9])];
        let set = select_hf_design_set(&[1.0, 2.0], 0.7, &cache, Some(&[0.3, -0.2]));
        assert!(set.reuse_flags[1]);
        let m = fit_fn(&set, f);
        let g = m.gradient(&[1.0, 2.0]);
        assert!((g[0] - 2.0).abs() < 1e-10);
        assert!((g[1] + 1.0).abs() < 1e-10);
        assert!(m.hess_diag.iter().all(|h| h.abs() < 1e-9));
        assert!((m.nu0 - f(&[1.0, 2.0])).abs() < 1e-12);
    }

    #[test]
    fn sine_gradient_within_fully_linear_scale() {
        let m = fit_fn(&DesignSet::coordinate(&[0.0], 0.1), |x| x[0].sin());
        // central difference error is Δ²/6 for sin, far inside κΔ with κ = 1
        assert!((m.grad[0] - 1.0).abs() <= 0.1);
        assert!((m.grad[0] - 1.0).abs() <= 0.1f64.powi(2) / 6.0 + 1e-12);
    }

    #[test]
    fn value_and_gradient_by_hand() {
        let m = InterpModel {
            center: vec![0.0],
            nu0: 1.0,
            grad: vec![2.0],
            hess_diag: vec![4.0],
            frame: None,
        };
        assert!((m.value(&[0.5]) - 2.5).abs() < 1e-15);
        assert!((m.gradient(&[0.5])[0] - 4.0).abs() < 1e-15);
        assert_eq!(m.value(&[0.0]), 1.0);
        assert_eq!(m.gradient(&[0.0]), vec![2.0]);
    }

    #[test]
    fn diagonal_rotation_keeps_curvature_sane() {
        // A basis rotated by ~45 degrees makes s_1^2 and s_2^2 nearly equal at
        // every point; fitted in the axes this blew the curvatures up to 1e4.
        let rosen = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let c = [0.700485193117413, 0.28633306492226196];
        let set = select_hf_design_set(&c, 0.15, &[], Some(&[0.25, -0.2]));
        let m = fit_fn(&set, rosen);
        assert!(m.hess_norm() < 1000.0, "{:?}", m.hess_diag);
        let g_true = [-400.0 * c[0] * (c[1] - c[0] * c[0]) - 2.0 * (1.0 - c[0]), 200.0 * (c[1] - c[0] * c[0])];
        let g = m.gradient(&c);
        assert!((g[0] - g_true[0]).hypot(g[1] - g_true[1]) < 0.1 * 70.0, "{g:?}");
    }

    #[test]
    fn singular_design_reports_geometry() {
        let mut set = DesignSet::coordinate(&[0.0, 0.0], 1.0);
        set.points[2] = set.points[1].clone();
        let err = fit_interpolation(&set, &[0.0; 5]).unwrap_err();
        assert!(matches!(err, ModelError::Geometry { .. }));
    }

    #[test]
    fn gradient_perturbation_bounded_by_geometry_constant() {
        // changing the data by at most eps moves the gradient by at most
        // kappa eps / delta; kappa for the coordinate set is 1/2 per axis
        let set = DesignSet::coordinate(&[0.0, 0.0, 0.0], 0.25);
        let base = fit_fn(&set, |_| 0.0);
        let eps = 1e-3;
        let mut worst: f64 = 0.0;
        for mask in 0..(1u32 << 7) {
            let vals: Vec<f64> = (0..7)
                .map(|i| if mask >> i & 1 == 1 { eps } else { -eps })
                .collect();
            let m = fit_interpolation(&set, &vals).unwrap();
            let dg: f64 = m
                .grad
                .iter()
                .zip(&base.grad)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(dg);
        }
        let kappa = worst * set.delta / eps;
        assert!(kappa <= 3f64.sqrt() + 1e-9, "{kappa}");
    }

    proptest! {
        #[test]
        fn model_gradient_matches_finite_differences(
            g in prop::collection::vec(-5.0f64..5.0, 3),
            h in prop::collection::vec(-5.0f64..5.0, 3),
            x in prop::collection::vec(-2.0f64..2.0, 3),
        ) {
            let m = InterpModel { center: vec![0.1, -0.2, 0.3], nu0: 0.7, grad: g, hess_diag: h, frame: None };
            let gr = m.gradient(&x);
            for i in 0..3 {
                let step = 1e-5;
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += step;
                xm[i] -= step;
                let fd = (m.value(&xp) - m.value(&xm)) / (2.0 * step);
                prop_assert!((fd - gr[i]).abs() < 1e-8 * (1.0 + gr[i].abs()) + 1e-8);
            }
        }

        #[test]
        fn exact_for_diagonal_quadratics(
            a in -10.0f64..10.0,
            b in prop::collection::vec(-10.0f64..10.0, 4),
            h in prop::collection::vec(-10.0f64..10.0, 4),
            c in prop::collection::vec(-3.0f64..3.0, 4),
            delta in 0.05f64..2.0,
        ) {
            let f = |x: &[f64]| a + (0..4).map(|i| b[i] * x[i] + 0.5 * h[i] * x[i] * x[i]).sum::<f64>();
            let set = DesignSet::coordinate(&c, delta);
            let m = fit_fn(&set, f);
            let grad_true: Vec<f64> = (0..4).map(|i| b[i] + h[i] * c[i]).collect();
            for i in 0..4 {
                prop_assert!((m.grad[i] - grad_true[i]).abs() < 1e-8 * (1.0 + grad_true[i].abs()));
                prop_assert!((m.hess_diag[i] - h[i]).abs() < 1e-8 * (1.0 + h[i].abs()) / delta.min(1.0).powi(2));
            }
            prop_assert!((m.nu0 - f(&c)).abs() < 1e-8 * (1.0 + f(&c).abs()));
        }

        #[test]
        fn exact_for_quadratics_diagonal_in_the_frame(
            a in -10.0f64..10.0,
            b in prop::collection::vec(-10.0f64..10.0, 3),
            h in prop::collection::vec(-10.0f64..10.0, 3),
            c in prop::collection::vec(-3.0f64..3.0, 3),
            delta in 0.05f64..2.0,
            step in prop::collection::vec(-1.0f64..1.0, 3),
        ) {
            let set = select_hf_design_set(&c, delta, &[], Some(&step));
            let f = |x: &[f64]| {
                let s: Vec<f64> = x.iter().zip(&c).map(|(p, q)| p - q).collect();
                let t = set.to_frame(&s);
                a + (0..3).map(|i| b[i] * t[i] + 0.5 * h[i] * t[i] * t[i]).sum::<f64>()
            };
            let m = fit_fn(&set, f);
            for i in 0..3 {
                prop_assert!((m.grad[i] - b[i]).abs() < 1e-8 * (1.0 + b[i].abs()) / delta.min(1.0));
                prop_assert!((m.hess_diag[i] - h[i]).abs() < 1e-8 * (1.0 + h[i].abs()) / delta.min(1.0).powi(2));
            }
            let x: Vec<f64> = c.iter().zip(&step).map(|(p, q)| p + delta * q / 2.0).collect();
            prop_assert!((m.value(&x) - f(&x)).abs() < 1e-8 * (1.0 + f(&x).abs()) / delta.min(1.0).powi(2));
        }
    }
}
