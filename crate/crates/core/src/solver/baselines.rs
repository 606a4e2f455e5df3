//! Nelder-Mead and finite-difference ADAM with a fixed number of
//! replications per evaluated point.

use super::{Branch, IterationRecord, PointCache, RunHistory, RunSpec, Solver, SolverConfig, SolverError};
use crate::oracle::SamplingContext;

/// Shared plumbing: cached fixed-size HF means under one ledger.
struct Evaluator<'a> {
    ctx: SamplingContext<'a>,
    cache: PointCache,
    reps: u64,
}

impl<'a> Evaluator<'a> {
    fn new(spec: &RunSpec<'a>, reps: u64, crn: bool) -> Self {
        Evaluator {
            ctx: SamplingContext::new(spec.oracle, spec.stream, spec.budget).with_common_random_numbers(crn),
            cache: PointCache::new(),
            reps,
        }
    }

    fn value(&mut self, x: &[f64]) -> Result<f64, SolverError> {
        let s = self.cache.get_mut(x);
        s.extend(&mut self.ctx, self.reps, 0)?;
        let n = self.reps as usize;
        Ok(s.hf()[..n].iter().sum::<f64>() / n as f64)
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        self.ctx.oracle().project(x)
    }

    fn feasible(&self, x: &[f64]) -> bool {
        self.ctx.oracle().check_domain(x).is_ok()
    }

    fn cost(&self) -> f64 {
        self.ctx.total_cost()
    }

    fn sync(&self, h: &mut RunHistory) {
        let l = self.ctx.ledger();
        h.total_cost = l.total_cost();
        h.hf_calls = l.hf_calls_total;
        h.lf_calls = l.lf_calls_total;
    }
}

fn baseline_record(k: u64, x: &[f64], fx: f64, cost: f64, accepted: bool) -> IterationRecord {
    IterationRecord {
        k,
        branch: Branch::Baseline,
        candidate_source: None,
        accepted,
        rho_hat: None,
        rho_hat_l: None,
        model_grad_norm_h: None,
        model_grad_norm_l: None,
        lf_guard: false,
        hf_guard: false,
        predicted_reduction: None,
        cauchy_reduction: None,
        lf_attempts: 0,
        delta_h_before: 0.0,
        alpha_after: 1.0,
        delta_h_after: 0.0,
        delta_l_after: 0.0,
        incumbent_after: x.to_vec(),
        incumbent_estimate: fx,
        cumulative_cost: cost,
    }
}

/// Iterations in a row without new oracle calls before a baseline stops;
/// past that point it only revisits cached points.
const MAX_IDLE: u32 = 10;

pub struct NelderMead<'a> {
    eval: Evaluator<'a>,
    cfg: SolverConfig,
    x0: Vec<f64>,
    spread: f64,
    simplex: Vec<(Vec<f64>, f64)>,
    history: RunHistory,
    k: u64,
    idle: u32,
    done: bool,
}

impl<'a> NelderMead<'a> {
    pub fn new(spec: RunSpec<'a>, cfg: SolverConfig) -> Result<Self, SolverError> {
        let delta_max = cfg.delta_max.unwrap_or(spec.delta_max);
        let spread = cfg.nelder_mead.initial_spread * delta_max;
        Ok(NelderMead {
            eval: Evaluator::new(&spec, cfg.nelder_mead.reps, cfg.crn),
            history: RunHistory::new("nelder-mead", spec.x0.clone(), spec.budget),
            x0: spec.x0,
            spread,
            simplex: Vec::new(),
            cfg,
            k: 0,
            idle: 0,
            done: false,
        })
    }

    fn init_simplex(&mut self) -> Result<(), SolverError> {
        let d = self.x0.len();
        let f0 = self.eval.value(&self.x0.clone())?;
        self.simplex = vec![(self.x0.clone(), f0)];
        for i in 0..d {
            let mut p = self.x0.clone();
            p[i] += self.spread;
            if !self.eval.feasible(&p) {
                p[i] = self.x0[i] - self.spread;
            }
            let p = self.eval.project(&p);
            let f = self.eval.value(&p)?;
            self.simplex.push((p, f));
        }
        Ok(())
    }

    fn point(&self, c: &[f64], toward: &[f64], t: f64) -> Vec<f64> {
        // c + t (toward - c)
        let raw: Vec<f64> = c.iter().zip(toward).map(|(a, b)| a + t * (b - a)).collect();
        self.eval.project(&raw)
    }

    fn iterate(&mut self) -> Result<(), SolverError> {
        let nm = self.cfg.nelder_mead.clone();
        self.simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let d = self.x0.len();
        let worst = self.simplex[d].clone();
        let mut c = vec![0.0; d];
        for (p, _) in &self.simplex[..d] {
            for (ci, pi) in c.iter_mut().zip(p) {
                *ci += pi / d as f64;
            }
        }
        let f_best = self.simplex[0].1;
        let f_second = self.simplex[d - 1].1;
        let xr = self.point(&c, &worst.0, -nm.reflect);
        let fr = self.eval.value(&xr)?;
        if fr < f_best {
            let xe = self.point(&c, &xr, nm.expand);
            let fe = self.eval.value(&xe)?;
            self.simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
            return Ok(());
        }
        if fr < f_second {
            self.simplex[d] = (xr, fr);
            return Ok(());
        }
        let (xc, fc, ok) = if fr < worst.1 {
            let xc = self.point(&c, &xr, nm.contract);
            let fc = self.eval.value(&xc)?;
            (xc, fc, fc <= fr)
        } else {
            let xc = self.point(&c, &worst.0, nm.contract);
            let fc = self.eval.value(&xc)?;
            (xc, fc, fc < worst.1)
        };
        if ok {
            self.simplex[d] = (xc, fc);
            return Ok(());
        }
        let best = self.simplex[0].0.clone();
        for i in 1..=d {
            let p = self.point(&best, &self.simplex[i].0.clone(), nm.shrink);
            let f = self.eval.value(&p)?;
            self.simplex[i] = (p, f);
        }
        Ok(())
    }

    fn best(&self) -> (Vec<f64>, f64) {
        self.simplex
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .cloned()
            .expect("simplex initialized")
    }
}

impl Solver for NelderMead<'_> {
    fn step(&mut self) -> Result<bool, SolverError> {
        if self.done {
            return Ok(false);
        }
        let before = self.eval.cost();
        let res = if self.simplex.is_empty() {
            self.init_simplex()
        } else {
            self.iterate()
        };
        match res {
            Ok(()) => {}
            Err(SolverError::Budget) => {
                self.done = true;
                self.eval.sync(&mut self.history);
                return Ok(false);
            }
            Err(e) => return Err(e),
        }
        let (bx, bf) = self.best();
        let cost = self.eval.cost();
        let moved = bx != self.history.final_x;
        self.history.move_to(cost, &bx);
        self.history.iterations.push(baseline_record(self.k, &bx, bf, cost, moved));
        self.k += 1;
        self.eval.sync(&mut self.history);
        self.idle = if cost > before { 0 } else { self.idle + 1 };
        if self.idle >= MAX_IDLE {
            self.done = true;
        }
        Ok(!self.done)
    }

    fn history(&self) -> &RunHistory {
        &self.history
    }

    fn into_history(self: Box<Self>) -> RunHistory {
        self.history
    }
}

pub struct AdamFd<'a> {
    eval: Evaluator<'a>,
    cfg: SolverConfig,
    x: Vec<f64>,
    h: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    history: RunHistory,
    idle: u32,
    done: bool,
}

impl<'a> AdamFd<'a> {
    pub fn new(spec: RunSpec<'a>, cfg: SolverConfig) -> Result<Self, SolverError> {
        let delta_max = cfg.delta_max.unwrap_or(spec.delta_max);
        let d = spec.x0.len();
        Ok(AdamFd {
            eval: Evaluator::new(&spec, cfg.adam.reps, cfg.crn),
            h: cfg.adam.fd_step * delta_max,
            history: RunHistory::new("adam-fd", spec.x0.clone(), spec.budget),
            x: spec.x0,
            m: vec![0.0; d],
            v: vec![0.0; d],
            t: 0,
            cfg,
            idle: 0,
            done: false,
        })
    }

    fn gradient(&mut self) -> Result<Vec<f64>, SolverError> {
        let d = self.x.len();
        let mut g = vec![0.0; d];
        for (i, gi) in g.iter_mut().enumerate() {
            let mut xp = self.x.clone();
            let mut xm = self.x.clone();
            xp[i] += self.h;
            xm[i] -= self.h;
            let (p_ok, m_ok) = (self.eval.feasible(&xp), self.eval.feasible(&xm));
            *gi = match (p_ok, m_ok) {
                (true, true) => (self.eval.value(&xp)? - self.eval.value(&xm)?) / (2.0 * self.h),
                (true, false) => (self.eval.value(&xp)? - self.eval.value(&self.x.clone())?) / self.h,
                (false, true) => (self.eval.value(&self.x.clone())? - self.eval.value(&xm)?) / self.h,
                (false, false) => 0.0,
            };
        }
        Ok(g)
    }

    /// One ADAM update for the gradient estimate `g`.
    pub fn update(&mut self, g: &[f64]) -> Vec<f64> {
        let a = &self.cfg.adam;
        self.t += 1;
        let mut step = vec![0.0; g.len()];
        for i in 0..g.len() {
            self.m[i] = a.beta1 * self.m[i] + (1.0 - a.beta1) * g[i];
            self.v[i] = a.beta2 * self.v[i] + (1.0 - a.beta2) * g[i] * g[i];
            let mh = self.m[i] / (1.0 - a.beta1.powi(self.t));
            let vh = self.v[i] / (1.0 - a.beta2.powi(self.t));
            step[i] = -a.learning_rate * mh / (vh.sqrt() + a.epsilon);
        }
        step
    }
}

impl Solver for AdamFd<'_> {
    fn step(&mut self) -> Result<bool, SolverError> {
        if self.done {
            return Ok(false);
        }
        let before = self.eval.cost();
        let g = match self.gradient() {
            Ok(g) => g,
            Err(SolverError::Budget) => {
                self.done = true;
                self.eval.sync(&mut self.history);
                return Ok(false);
            }
            Err(e) => return Err(e),
        };
        let step = self.update(&g);
        let raw: Vec<f64> = self.x.iter().zip(&step).map(|(a, b)| a + b).collect();
        self.x = self.eval.project(&raw);
        let cost = self.eval.cost();
        let moved = self.x != self.history.final_x;
        let x = self.x.clone();
        self.history.move_to(cost, &x);
        let k = self.history.iterations.len() as u64;
        self.history.iterations.push(baseline_record(k, &x, f64::NAN, cost, moved));
        self.eval.sync(&mut self.history);
        self.idle = if cost > before { 0 } else { self.idle + 1 };
        if self.idle >= MAX_IDLE {
            self.done = true;
        }
        Ok(!self.done)
    }

    fn history(&self) -> &RunHistory {
        &self.history
    }

    fn into_history(self: Box<Self>) -> RunHistory {
        self.history
    }
}
