//! Trust-region subproblem for diagonal quadratic models.

use serde::{Deserialize, Serialize};

use super::InterpModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubproblemResult {
    pub step: Vec<f64>,
    /// `m(0) - m(step)`.
    pub predicted_reduction: f64,
    pub cauchy_reduction: f64,
    /// Lagrange multiplier of the ball constraint (0 for interior steps or
    /// when the Cauchy point was kept).
    pub multiplier: f64,
}

/// `0.5 |g| min(|g| / |H|, delta)` with `|g| / |H| = inf` when `H = 0`.
pub fn cauchy_reduction(model: &InterpModel, delta: f64) -> f64 {
    let g = model.grad_norm();
    let h = model.hess_norm();
    let ratio = if h > 0.0 { g / h } else { f64::INFINITY };
    0.5 * g * ratio.min(delta)
}

// Steps inside the solver are in frame coordinates.
fn reduction(model: &InterpModel, step: &[f64]) -> f64 {
    -step
        .iter()
        .enumerate()
        .map(|(i, s)| model.grad[i] * s + 0.5 * model.hess_diag[i] * s * s)
        .sum::<f64>()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cauchy_step(model: &InterpModel, delta: f64) -> Vec<f64> {
    let gn = model.grad_norm();
    if gn == 0.0 {
        return vec![0.0; model.grad.len()];
    }
    let curv: f64 = model
        .grad
        .iter()
        .zip(&model.hess_diag)
        .map(|(g, h)| g * g * h)
        .sum();
    let tau = if curv <= 0.0 {
        1.0
    } else {
        (gn.powi(3) / (delta * curv)).min(1.0)
    };
    model.grad.iter().map(|g| -tau * delta * g / gn).collect()
}

/// Global minimizer of the model over the ball of radius `delta` around its
/// center.
///
/// For a multiplier `lam >= max(0, -min h)` the stationary step is
/// `s_i = -g_i / (h_i + lam)`; the boundary solution is found by bisection on
/// `|s(lam)| = delta`, with the usual eigenvector completion in the hard
/// case. The Cauchy point is kept if it does better.
pub fn minimize_model(model: &InterpModel, delta: f64) -> SubproblemResult {
    let d = model.grad.len();
    let g = &model.grad;
    let h = &model.hess_diag;
    let cauchy = cauchy_reduction(model, delta);
    let hmin = h.iter().cloned().fold(f64::INFINITY, f64::min);
    let gscale = model.grad_norm().max(f64::MIN_POSITIVE);
    let step_at = |lam: f64| -> Vec<f64> {
        (0..d)
            .map(|i| {
                let den = h[i] + lam;
                if den > 0.0 {
                    -g[i] / den
                } else {
                    0.0
                }
            })
            .collect()
    };

    let mut best_step: Vec<f64>;
    let mut multiplier = 0.0;

    let interior = hmin > 0.0 && {
        let s = step_at(0.0);
        norm(&s) <= delta
    };
    if interior {
        best_step = step_at(0.0);
    } else {
        let lo0 = (-hmin).max(0.0);
        // indices where the shifted Hessian vanishes at lo0
        let tiny = 1e-12 * (1.0 + model.hess_norm());
        let flat: Vec<usize> = (0..d).filter(|&i| (h[i] + lo0).abs() <= tiny).collect();
        let flat_grad = flat.iter().any(|&i| g[i].abs() > 1e-14 * gscale);
        let others_norm = |lam: f64| {
            (0..d)
                .filter(|i| !flat.contains(i))
                .map(|i| (g[i] / (h[i] + lam)).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        if !flat_grad && others_norm(lo0) <= delta {
            // hard case (or a convex model whose minimizer is interior)
            let mut s: Vec<f64> = (0..d)
                .map(|i| if flat.contains(&i) { 0.0 } else { -g[i] / (h[i] + lo0) })
                .collect();
            if lo0 > 0.0 {
                let rem = (delta * delta - norm(&s).powi(2)).max(0.0).sqrt();
                if let Some(&j) = flat.first() {
                    s[j] = rem;
                }
            }
            best_step = s;
            multiplier = lo0;
        } else {
            let mut lo = lo0;
            let mut hi = lo0 + gscale / delta + model.hess_norm() + 1.0;
            while norm(&step_at(hi)) > delta {
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if norm(&step_at(mid)) > delta {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            best_step = step_at(hi);
            multiplier = hi;
        }
    }

    // guard the constraint against round-off
    let n = norm(&best_step);
    if n > delta {
        for s in best_step.iter_mut() {
            *s *= delta / n;
        }
    }
    let mut best_red = reduction(model, &best_step);
    let cs = cauchy_step(model, delta);
    let cred = reduction(model, &cs);
    if !(best_red.is_finite()) || cred > best_red {
        best_step = cs;
        best_red = cred;
        multiplier = 0.0;
    }
    SubproblemResult {
        step: model.from_frame(&best_step),
        predicted_reduction: best_red,
        cauchy_reduction: cauchy,
        multiplier,
    }
}
