//! Log-barrier interior-point method with damped Newton centering and a
//! slack-minimizing phase I.

use super::newton::Hessian;
use super::program::{Atom, ConvexFn, SmoothConvexProgram};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierOptions {
    pub t0: f64,
    pub mu: f64,
    /// Armijo fraction.
    pub alpha: f64,
    /// Backtracking factor.
    pub beta: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Pick the first barrier weight from the start point (the `t` that best
    /// centers it) instead of `t0`, never going below `t0`.
    pub auto_t0: bool,
    /// Take a step along the central-path tangent after each increase of `t`.
    pub predictor: bool,
    /// Centering tolerance on `lambda^2 / 2` for all but the last stage
    /// (`None`: the solve tolerance).
    pub centering_tol: Option<f64>,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            t0: 1.0,
            mu: 10.0,
            alpha: 0.25,
            beta: 0.5,
            max_outer: 200,
            max_inner: 50,
            auto_t0: false,
            predictor: false,
            centering_tol: None,
        }
    }
}

impl BarrierOptions {
    /// Settings for repeated warm-started solves: weight picked from the
    /// start point, tangent predictor and loose intermediate centering.
    pub fn warm_start() -> Self {
        Self { auto_t0: true, predictor: true, centering_tol: Some(0.1), ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub x_star: Vec<f64>,
    pub objective_value: f64,
    /// Max of the scaled stationarity residual, the duality-gap estimate and
    /// the constraint violation.
    pub kkt_residual: f64,
    pub status: SolveStatus,
    pub newton_steps: usize,
}

/// Outcome of phase I.
#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    /// A point satisfying every atom and box with slack at least `MIN_SLACK`.
    Feasible(Vec<f64>),
    /// Phase I converged without reaching negative slack; carries the best
    /// max-constraint value found.
    Infeasible { best_max_violation: f64 },
}

pub const MIN_SLACK: f64 = 1e-8;

struct Problem<'a> {
    n: usize,
    c: &'a [f64],
    lower: &'a [f64],
    upper: &'a [f64],
    fns: &'a [ConvexFn],
}

struct CoreOutcome {
    x: Vec<f64>,
    t: f64,
    decrement: f64,
    newton_steps: usize,
    converged: bool,
    stopped_early: bool,
}

struct Workspace {
    xl: Vec<f64>,
    gl: Vec<f64>,
    vars: Vec<usize>,
    block: Vec<f64>,
    hess: Hessian,
    grad: Vec<f64>,
}

impl Problem<'_> {
    fn num_barriers(&self) -> usize {
        self.fns.len() + self.lower.iter().chain(self.upper.iter()).filter(|b| b.is_finite()).count()
    }

    /// Barrier objective; `+inf` outside the strict interior.
    fn phi(&self, x: &[f64], t: f64, ws: &mut Workspace) -> f64 {
        let mut v = t * self.c.iter().zip(x).map(|(c, x)| c * x).sum::<f64>();
        for i in 0..self.n {
            if self.lower[i].is_finite() {
                let s = x[i] - self.lower[i];
                if !(s > 0.0) {
                    return f64::INFINITY;
                }
                v -= s.ln();
            }
            if self.upper[i].is_finite() {
                let s = self.upper[i] - x[i];
                if !(s > 0.0) {
                    return f64::INFINITY;
                }
                v -= s.ln();
            }
        }
        for f in self.fns {
            f.gather(x, &mut ws.xl);
            let g = match &f.hyperbolic {
                Some(hb) => {
                    let s: f64 = hb.den.iter().map(|&i| ws.xl[i]).sum();
                    if !(s > 0.0) {
                        return f64::INFINITY;
                    }
                    hb.c - s * ws.xl[hb.bound]
                }
                None => f.value_local(&ws.xl),
            };
            if !(g < 0.0) {
                return f64::INFINITY;
            }
            v -= (-g).ln();
        }
        v
    }

    /// Fills `ws.grad` and `ws.hess` with the barrier gradient and Hessian.
    fn derivatives(&self, x: &[f64], t: f64, ws: &mut Workspace) {
        let n = self.n;
        ws.hess.reset(n);
        for i in 0..n {
            ws.grad[i] = t * self.c[i];
            if self.lower[i].is_finite() {
                let s = x[i] - self.lower[i];
                ws.grad[i] -= 1.0 / s;
                ws.hess.diag[i] += 1.0 / (s * s);
            }
            if self.upper[i].is_finite() {
                let s = self.upper[i] - x[i];
                ws.grad[i] += 1.0 / s;
                ws.hess.diag[i] += 1.0 / (s * s);
            }
        }
        for f in self.fns {
            f.gather(x, &mut ws.xl);
            let sup = &f.support;
            if let Some(hb) = &f.hyperbolic {
                // h = s t - c, barrier -ln h
                let s: f64 = hb.den.iter().map(|&i| ws.xl[i]).sum();
                let tb = ws.xl[hb.bound];
                let inv = 1.0 / (s * tb - hb.c);
                ws.grad[sup[hb.bound]] -= inv * s;
                for &i in &hb.den {
                    ws.grad[sup[i]] -= inv * tb;
                }
                let k = hb.den.len() + 1;
                ws.vars.clear();
                ws.vars.extend(hb.den.iter().map(|&i| sup[i]));
                ws.vars.push(sup[hb.bound]);
                ws.block.clear();
                ws.block.resize(k * k, 0.0);
                let gh = |a: usize| if a + 1 == k { s } else { tb };
                for c in 0..k {
                    for a in 0..k {
                        let cross = if (a + 1 == k) != (c + 1 == k) { inv } else { 0.0 };
                        ws.block[c * k + a] = inv * inv * gh(a) * gh(c) - cross;
                    }
                }
                ws.hess.add_block(&ws.vars, &ws.block);
                continue;
            }
            let g = f.value_local(&ws.xl);
            let inv = -1.0 / g;
            ws.gl.resize(sup.len(), 0.0);
            f.grad_local(&ws.xl, &mut ws.gl);
            for (a, &ga) in ws.gl.iter().enumerate() {
                ws.grad[sup[a]] += inv * ga;
            }
            ws.hess.add_rank_one(inv * inv, ws.gl.iter().enumerate().map(|(a, &ga)| (sup[a], ga)));
            f.add_hessian_terms(&ws.xl, inv, &mut ws.hess);
        }
    }

    /// `argmin_t ||t c + grad phi||` in the barrier Hessian's inverse norm.
    fn centering_weight(&self, x: &[f64], ws: &mut Workspace) -> f64 {
        self.derivatives(x, 0.0, ws);
        let neg_c: Vec<f64> = self.c.iter().map(|c| -c).collect();
        let (Ok(hc), Ok(hg)) = (ws.hess.newton_direction(&neg_c), ws.hess.newton_direction(&ws.grad)) else {
            return 0.0;
        };
        // newton_direction solves H d = -rhs
        let chc: f64 = self.c.iter().zip(&hc).map(|(a, b)| a * b).sum();
        let chg: f64 = self.c.iter().zip(&hg).map(|(a, b)| a * b).sum();
        if chc > 0.0 {
            chg / chc
        } else {
            0.0
        }
    }

    /// Moves `x` along the central-path tangent `dx/dt = -H^{-1} c` towards
    /// the center for `t_next`, keeping the move only if it lowers the new
    /// barrier objective.
    fn predict(&self, x: &mut [f64], t: f64, t_next: f64, ws: &mut Workspace, trial: &mut [f64]) {
        self.derivatives(x, t, ws);
        let Ok(d) = ws.hess.newton_direction(self.c) else {
            return;
        };
        let base = self.phi(x, t_next, ws);
        let mut s = t_next - t;
        for _ in 0..60 {
            for i in 0..self.n {
                trial[i] = x[i] + s * d[i];
            }
            let v = self.phi(trial, t_next, ws);
            if v.is_finite() {
                // pull back from the boundary
                s *= 0.9;
                for i in 0..self.n {
                    trial[i] = x[i] + s * d[i];
                }
                if self.phi(trial, t_next, ws) < base {
                    x.copy_from_slice(trial);
                }
                return;
            }
            s *= 0.5;
        }
    }

    fn run(
        &self,
        x0: &[f64],
        tol: f64,
        opts: &BarrierOptions,
        early_stop: Option<&dyn Fn(&[f64]) -> bool>,
    ) -> Result<CoreOutcome> {
        let n = self.n;
        let mut ws = Workspace {
            xl: Vec::new(),
            gl: Vec::new(),
            vars: Vec::new(),
            block: Vec::new(),
            hess: Hessian::default(),
            grad: vec![0.0; n],
        };
        let mut x = x0.to_vec();
        let mut t = opts.t0;
        let m = self.num_barriers() as f64;
        let mut steps = 0usize;
        let mut trial = vec![0.0; n];
        let mut decrement = f64::INFINITY;
        if !self.phi(&x, t, &mut ws).is_finite() {
            return Err(Error::Solver("start point is not strictly feasible".into()));
        }
        if opts.auto_t0 {
            t = self.centering_weight(&x, &mut ws).clamp(opts.t0, (m / tol).max(opts.t0));
        }
        for _outer in 0..opts.max_outer {
            // a stage that ran out of inner steps while still far from the
            // center is repeated at the same t
            let mut unfinished = true;
            for _inner in 0..opts.max_inner {
                self.derivatives(&x, t, &mut ws);
                let dx = ws.hess.newton_direction(&ws.grad)?;
                let lambda2 = -ws.grad.iter().zip(dx.iter()).map(|(g, d)| g * d).sum::<f64>();
                decrement = lambda2.max(0.0).sqrt();
                let final_stage = m / t <= tol;
                let ctol = if final_stage { tol } else { opts.centering_tol.unwrap_or(tol).max(tol) };
                if lambda2 / 2.0 <= ctol {
                    unfinished = false;
                    break;
                }
                let phi0 = self.phi(&x, t, &mut ws);
                let mut step = 1.0;
                let mut accepted = false;
                for _ in 0..80 {
                    for i in 0..n {
                        trial[i] = x[i] + step * dx[i];
                    }
                    let phi1 = self.phi(&trial, t, &mut ws);
                    if phi1.is_finite() && phi1 <= phi0 - opts.alpha * step * lambda2 {
                        accepted = true;
                        break;
                    }
                    step *= opts.beta;
                }
                steps += 1;
                if !accepted {
                    // no progress possible at this precision
                    unfinished = false;
                    break;
                }
                std::mem::swap(&mut x, &mut trial);
                if let Some(stop) = early_stop {
                    if stop(&x) {
                        return Ok(CoreOutcome { x, t, decrement, newton_steps: steps, converged: false, stopped_early: true });
                    }
                }
            }
            if unfinished && decrement > 1.0 {
                continue;
            }
            if m / t <= tol {
                return Ok(CoreOutcome { x, t, decrement, newton_steps: steps, converged: true, stopped_early: false });
            }
            let t_next = t * opts.mu;
            if opts.predictor {
                self.predict(&mut x, t, t_next, &mut ws, &mut trial);
            }
            t = t_next;
        }
        Ok(CoreOutcome { x, t, decrement, newton_steps: steps, converged: false, stopped_early: false })
    }
}

/// Barrier-side reformulation: every reciprocal term `c / sum(x_S)` of a
/// constraint without a product-form barrier is replaced by an auxiliary
/// variable `e` with the extra constraint `c / sum(x_S) <= e`, so that every
/// barrier term is self-concordant.
struct Lifted {
    n: usize,
    c: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    fns: Vec<ConvexFn>,
    /// Per lifted term: (index of the rewritten constraint, c, global denominator).
    aux: Vec<(usize, f64, Vec<usize>)>,
    /// Number of leading entries of `fns` that come from the program.
    n_orig_fns: usize,
}

impl Lifted {
    fn new(program: &SmoothConvexProgram) -> Result<Self> {
        let n0 = program.n_vars;
        let mut aux = Vec::new();
        for (fi, f) in program.lowered.iter().enumerate() {
            if f.hyperbolic.is_none() {
                for r in &f.recips {
                    aux.push((fi, r.c, r.idx.iter().map(|&i| f.support[i]).collect::<Vec<_>>()));
                }
            }
        }
        let n = n0 + aux.len();
        let mut fns = program.lowered.clone();
        for (j, (fi, _, _)) in aux.iter().enumerate() {
            let f = &mut fns[*fi];
            f.recips.clear();
            *f = f.with_linear(n0 + j, 1.0);
        }
        for (j, (_, c, den)) in aux.iter().enumerate() {
            fns.push(ConvexFn::lower(&Atom::SumRatio { c: *c, den: den.clone(), bound: n0 + j }, n)?);
        }
        let mut c = program.objective.clone();
        let mut lower = program.lower.clone();
        let mut upper = program.upper.clone();
        c.resize(n, 0.0);
        lower.resize(n, f64::NEG_INFINITY);
        upper.resize(n, f64::INFINITY);
        Ok(Self { n, c, lower, upper, fns, aux, n_orig_fns: program.lowered.len() })
    }

    fn problem(&self) -> Problem<'_> {
        Problem { n: self.n, c: &self.c, lower: &self.lower, upper: &self.upper, fns: &self.fns }
    }

    /// Extends a program point with auxiliary values. Each term gets
    /// `c / s + margin / count` where `margin` splits the constraint's slack
    /// (or a unit margin when the point is infeasible).
    fn extend(&self, program: &SmoothConvexProgram, x: &[f64]) -> Option<Vec<f64>> {
        let mut out = x.to_vec();
        let counts = self.aux.iter().fold(vec![0usize; self.n_orig_fns], |mut acc, (fi, _, _)| {
            acc[*fi] += 1;
            acc
        });
        for (fi, c, den) in &self.aux {
            let s: f64 = den.iter().map(|&i| x[i]).sum();
            if !(s > 0.0) {
                return None;
            }
            let g = program.lowered[*fi].value(x);
            let margin = if g < 0.0 { -0.5 * g } else { 1.0 };
            out.push(c / s + margin / counts[*fi] as f64);
        }
        Some(out)
    }
}

/// Solves `min c^T x` from a strictly feasible `start`, stopping once the
/// duality-gap estimate and the Newton decrement are both below `tol`.
pub fn solve(program: &SmoothConvexProgram, start: &[f64], tol: f64) -> Result<SolveReport> {
    solve_with(program, start, tol, &BarrierOptions::default())
}

pub fn solve_with(program: &SmoothConvexProgram, start: &[f64], tol: f64, opts: &BarrierOptions) -> Result<SolveReport> {
    if start.len() != program.n_vars {
        return Err(Error::InvalidInput("start point has the wrong dimension".into()));
    }
    let lifted = Lifted::new(program)?;
    let problem = lifted.problem();
    let start_aug = lifted
        .extend(program, start)
        .ok_or_else(|| Error::Solver("start point is not strictly feasible".into()))?;
    let out = problem.run(&start_aug, tol, opts, None)?;
    let m = problem.num_barriers() as f64;
    let start_obj = program.objective_value(start);
    let mut x = out.x[..program.n_vars].to_vec();
    let mut obj = program.objective_value(&x);
    if start_obj < obj {
        x = start.to_vec();
        obj = start_obj;
    }
    let kkt = (out.decrement / out.t).max(m / out.t).max(program.max_violation(&x));
    let status = if out.converged && kkt <= tol { SolveStatus::Optimal } else { SolveStatus::MaxIter };
    Ok(SolveReport { x_star: x, objective_value: obj, kkt_residual: kkt, status, newton_steps: out.newton_steps })
}

/// Phase I: minimizes a shared slack `s` subject to `g_i(x) <= s` inside the
/// boxes, starting from the box midpoint (or `hint`, if strictly inside).
pub fn find_feasible(program: &SmoothConvexProgram, hint: Option<&[f64]>) -> Result<Feasibility> {
    let n = program.n_vars;
    let x0: Vec<f64> = match hint {
        Some(h) if h.len() == n && (0..n).all(|i| h[i] > program.lower[i] && h[i] < program.upper[i]) => h.to_vec(),
        _ => (0..n)
            .map(|i| {
                let (lo, hi) = (program.lower[i], program.upper[i]);
                match (lo.is_finite(), hi.is_finite()) {
                    (true, true) => 0.5 * (lo + hi),
                    (true, false) => lo + 1.0,
                    (false, true) => hi - 1.0,
                    (false, false) => 0.0,
                }
            })
            .collect(),
    };
    let g0 = program.constraint_values(&x0);
    let worst = g0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !worst.is_finite() && worst > 0.0 {
        return Err(Error::Solver("phase I start lies outside an atom's domain".into()));
    }
    if program.min_slack(&x0) >= MIN_SLACK {
        return Ok(Feasibility::Feasible(x0));
    }
    // the auxiliary constraints are always satisfiable and get no slack
    let lifted = Lifted::new(program)?;
    let Some(mut start) = lifted.extend(program, &x0) else {
        return Err(Error::Solver("phase I start lies outside an atom's domain".into()));
    };
    let na = lifted.n;
    let fns: Vec<ConvexFn> = lifted
        .fns
        .iter()
        .enumerate()
        .map(|(i, f)| if i < lifted.n_orig_fns { f.with_linear(na, -1.0) } else { f.clone() })
        .collect();
    let mut c = vec![0.0; na + 1];
    c[na] = 1.0;
    let mut lower = lifted.lower.clone();
    let mut upper = lifted.upper.clone();
    lower.push(-1.0);
    upper.push(f64::INFINITY);
    let worst_aug = lifted.fns[..lifted.n_orig_fns]
        .iter()
        .map(|f| f.value(&start))
        .fold(f64::NEG_INFINITY, f64::max)
        .max(worst);
    start.push(worst_aug.max(-0.5) + 1.0);
    let problem = Problem { n: na + 1, c: &c, lower: &lower, upper: &upper, fns: &fns };
    let stop = |x: &[f64]| x[na] < -1e-6;
    let out = problem.run(&start, 1e-10, &BarrierOptions::default(), Some(&stop))?;
    let x: Vec<f64> = out.x[..n].to_vec();
    if program.min_slack(&x) >= MIN_SLACK {
        return Ok(Feasibility::Feasible(x));
    }
    let _ = out.stopped_early;
    Ok(Feasibility::Infeasible { best_max_violation: program.max_violation(&x) })
}
