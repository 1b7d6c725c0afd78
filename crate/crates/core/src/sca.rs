//! Short-term subproblem: epigraph form, convex surrogates and the SCA loop.
//!
//! Inside the convex programs rates are in Mbps, frequencies in GHz and
//! times in seconds. The auxiliary `varrho = zeta / R_u` is carried in 1/Mbps
//! and, per UE, rescaled by `s = sqrt(R_u0 / varrho0)` so that the two
//! factors of the bilinear term `varrho R_u` have the same magnitude at the
//! expansion point.

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::link::LinkModel;
use crate::netmodel::SystemParams;
use crate::perfmodel::{latency_terms_with, local_iters, DecisionVars, FlParams, LatencyMode, LatencyTerms};
use crate::solver::{find_feasible, solve_with, Atom, BarrierOptions, Feasibility, QuadForm, SmoothConvexProgram, SolveReport};

const MEGA: f64 = 1e6;
const GIGA: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScaParams {
    pub delta: f64,
    pub eps_inner: f64,
    pub max_inner_iters: usize,
    /// Absolute tolerance handed to the convex solver.
    pub solver_tol: f64,
}

impl Default for ScaParams {
    fn default() -> Self {
        Self { delta: 0.01, eps_inner: 1e-2, max_inner_iters: 50, solver_tol: 1e-5 }
    }
}

impl ScaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.eps_inner > 0.0 && self.solver_tol > 0.0) || self.max_inner_iters == 0 {
            return Err(invalid("SCA parameters must be positive"));
        }
        Ok(())
    }
}

/// Upper bound of `-(x + y)^2` around `(x0, y0)`.
pub fn quad_upper_bound(x: f64, y: f64, x0: f64, y0: f64, delta: f64) -> f64 {
    let s0 = x0 + y0;
    -2.0 * s0 * (x + y) + s0 * s0 + delta * ((x - x0).powi(2) + (y - y0).powi(2))
}

/// `z = 4u^2 - (varrho + R)^2 + (varrho - R)^2`.
pub fn z_exact(u: f64, varrho: f64, r: f64) -> f64 {
    4.0 * u * u - (varrho + r).powi(2) + (varrho - r).powi(2)
}

/// Convex surrogate of [`z_exact`] expanded at `(varrho0, r0)`.
pub fn z_tilde(u: f64, varrho: f64, r: f64, varrho0: f64, r0: f64, delta: f64) -> f64 {
    4.0 * u * u + quad_upper_bound(varrho, r, varrho0, r0, delta) + (varrho - r).powi(2)
}

/// Concave minorant of `ln(1 + x^2 / y)` around `(x0, y0)`, `y, y0 > 0`.
pub fn log_ratio_lower(x: f64, y: f64, x0: f64, y0: f64) -> f64 {
    let r = x0 * x0 / y0;
    r.ln_1p() - r + 2.0 * x0 * x / y0 - x0 * x0 * (x * x + y) / (y0 * (x0 * x0 + y0))
}

/// DL rate lower bound (bit/s) for UE `k` at `w`, expanded at `w0`.
pub fn hd_lower(link: &LinkModel, k: usize, w: &[f64], w0: &[f64]) -> f64 {
    let b = log_ratio_lower(link.upsilon(k, w), link.pi(k, w), link.upsilon(k, w0), link.pi(k, w0));
    link.dl_prefactor / std::f64::consts::LN_2 * b
}

/// UL rate lower bound (bit/s) for UE `k` at `u`, expanded at `u0`.
pub fn hu_lower(link: &LinkModel, k: usize, u: &[f64], u0: &[f64]) -> f64 {
    let b = log_ratio_lower(link.psi(k, u), link.xi(k, u), link.psi(k, u0), link.xi(k, u0));
    link.ul_prefactor / std::f64::consts::LN_2 * b
}

/// Decision vector of the epigraph form in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortTermSolution {
    /// `v = eta^{1/2}`, `M x K` (`1 x K` for a collocated array).
    pub v: DMatrix<f64>,
    /// `u = zeta^{1/2}`.
    pub u: Vec<f64>,
    pub f: Vec<f64>,
    pub r_d: Vec<f64>,
    pub r_u: Vec<f64>,
    pub omega: f64,
    /// `varrho_k >= zeta_k / R_u,k` in 1/(bit/s).
    pub varrho: Vec<f64>,
    pub t_d: f64,
    pub t_c: f64,
    pub t_u: f64,
}

/// One row of the SCA trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaTraceRow {
    pub iter: usize,
    pub objective: f64,
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShortTermOutcome {
    pub solution: ShortTermSolution,
    pub vars: DecisionVars,
    /// Latency terms at the returned rates and frequencies.
    pub latency: LatencyTerms,
    /// `T = T_G / (1 - theta)` (seconds).
    pub time: f64,
    pub trace: Vec<ScaTraceRow>,
    pub iterations: usize,
    pub newton_steps: usize,
}

/// Internal iterate in program units.
#[derive(Debug, Clone, PartialEq)]
struct Iterate {
    w: Vec<f64>,
    u: Vec<f64>,
    f: Vec<f64>,
    rd: Vec<f64>,
    ru: Vec<f64>,
    rho: Vec<f64>,
    omega: f64,
    td: f64,
    tc: f64,
    tu: f64,
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    nw: usize,
    /// 0 when the UL powers are fixed, else `k`.
    nu: usize,
    k: usize,
}

impl Layout {
    fn w(&self, i: usize) -> usize {
        i
    }
    fn u(&self, k: usize) -> usize {
        self.nw + k
    }
    fn f(&self, k: usize) -> usize {
        self.nw + self.nu + k
    }
    fn rd(&self, k: usize) -> usize {
        self.nw + self.nu + self.k + k
    }
    fn ru(&self, k: usize) -> usize {
        self.nw + self.nu + 2 * self.k + k
    }
    fn x(&self, k: usize) -> usize {
        self.nw + self.nu + 3 * self.k + k
    }
    fn omega(&self) -> usize {
        self.nw + self.nu + 4 * self.k
    }
    fn td(&self) -> usize {
        self.omega() + 1
    }
    fn tc(&self) -> usize {
        self.omega() + 2
    }
    fn tu(&self) -> usize {
        self.omega() + 3
    }
    fn n(&self) -> usize {
        self.omega() + 4
    }
}

/// A convex subproblem together with the point it was expanded at.
#[derive(Debug, Clone)]
pub struct Subproblem {
    pub program: SmoothConvexProgram,
    /// The expansion point in program coordinates.
    pub start: Vec<f64>,
    layout: Layout,
    scale: Vec<f64>,
    /// Powers `(w, u)` held fixed outside the program.
    fixed: Option<(Vec<f64>, Vec<f64>)>,
}

/// Short-term problem for one realization at fixed `theta`.
#[derive(Debug, Clone)]
pub struct ShortTermProblem {
    pub link: LinkModel,
    pub flp: FlParams,
    /// UL transmit power `rho_u N_0` in watts.
    pub p_ul_w: f64,
    pub theta: f64,
}

impl ShortTermProblem {
    pub fn new(link: LinkModel, sys: &SystemParams, flp: &FlParams, theta: f64) -> Result<Self> {
        flp.validate()?;
        if !(theta > 0.0 && theta < 1.0) {
            return Err(invalid(format!("local accuracy must lie in (0, 1), got {theta}")));
        }
        Ok(Self { link, flp: *flp, p_ul_w: sys.rho_u * sys.noise_power_w, theta })
    }

    fn k(&self) -> usize {
        self.link.num_ues
    }

    fn layout(&self) -> Layout {
        Layout { nw: self.link.num_w, nu: self.k(), k: self.k() }
    }

    fn sd_mb(&self) -> f64 {
        self.flp.s_d_bits / MEGA
    }

    fn su_mb(&self) -> f64 {
        self.flp.s_u_bits / MEGA
    }

    /// `t_C f` in s*GHz.
    fn compute_coeff(&self) -> f64 {
        local_iters(self.theta, self.flp.nu).unwrap_or(0.0) * self.flp.cycles_per_pass() / GIGA
    }

    /// Computing energy per GHz^2.
    fn energy_coeff(&self) -> f64 {
        local_iters(self.theta, self.flp.nu).unwrap_or(0.0) * 0.5 * self.flp.alpha * self.flp.cycles_per_pass() * GIGA * GIGA
    }

    fn combine(&self, it: impl Iterator<Item = f64>) -> f64 {
        match self.link.latency {
            LatencyMode::Parallel => it.fold(0.0, f64::max),
            LatencyMode::Sequential => it.sum(),
        }
    }

    /// Largest admissible frequency (GHz) given the transmit energy already spent.
    fn frequency_cap(&self, e_t: f64) -> f64 {
        let fmax = self.flp.f_max / GIGA;
        let ec = self.energy_coeff();
        if ec == 0.0 {
            return fmax;
        }
        let room = self.flp.e_max_j - e_t;
        if room <= 0.0 {
            return 0.0;
        }
        (room / ec).sqrt().min(fmax)
    }

    /// Epigraph variables at their implied values, inflated by `slack`.
    fn fill_epigraph(&self, it: &mut Iterate, slack: f64) {
        let k = self.k() as f64;
        it.td = slack * self.combine(it.rd.iter().map(|r| self.sd_mb() / r));
        it.tc = slack * it.f.iter().map(|f| self.compute_coeff() / f).fold(0.0, f64::max);
        it.tu = slack * self.combine(it.ru.iter().map(|r| self.su_mb() / r));
        let sum_d: f64 = it.rd.iter().sum();
        let sum_u: f64 = it.ru.iter().sum();
        it.omega = slack * (k * self.sd_mb() / sum_d + it.td + it.tc + it.tu + k * self.su_mb() / sum_u);
    }

    /// Constructive strictly feasible point: half of every power budget on
    /// the DL, `zeta = 1e-2` on the UL, rates at 99% of their exact value and
    /// the fastest processing the energy budget allows.
    fn initial_iterate(&self) -> Result<Iterate> {
        let w = self.link.uniform_w(0.5);
        let u = vec![0.1; self.k()];
        self.operating_point(w, u, 0.99, 1.01, 0.999)
    }

    fn operating_point(&self, w: Vec<f64>, u: Vec<f64>, rate_frac: f64, slack: f64, f_frac: f64) -> Result<Iterate> {
        let rd: Vec<f64> = self.link.dl_rates(&w).iter().map(|r| rate_frac * r / MEGA).collect();
        let ru: Vec<f64> = self.link.ul_rates(&u).iter().map(|r| rate_frac * r / MEGA).collect();
        if let Some(k) = (0..self.k()).find(|&k| !(rd[k] > 0.0 && ru[k] > 0.0)) {
            return Err(Error::InfeasibleScenario(format!("UE {k} has a zero achievable rate")));
        }
        let rho: Vec<f64> = u.iter().zip(&ru).map(|(u, r)| slack * u * u / r).collect();
        let fmin = self.flp.f_min / GIGA;
        let mut f = Vec::with_capacity(self.k());
        for k in 0..self.k() {
            let e_t = self.p_ul_w * self.su_mb() * rho[k];
            let fk = f_frac * self.frequency_cap(e_t);
            if !(fk > fmin) {
                return Err(Error::InfeasibleScenario(format!(
                    "UE {k}: energy budget cannot be met at the minimum frequency (transmit energy {e_t:.3e} J)"
                )));
            }
            f.push(fk);
        }
        let mut it = Iterate { w, u, f, rd, ru, rho, omega: 0.0, td: 0.0, tc: 0.0, tu: 0.0 };
        self.fill_epigraph(&mut it, slack);
        Ok(it)
    }

    /// The recipe point, or the near-equal-power point at almost full UL
    /// power when that one is faster.
    fn starting_iterate(&self) -> Result<Iterate> {
        let recipe = self.initial_iterate()?;
        let k = self.k();
        match self.operating_point(self.link.uniform_w(0.99), vec![0.99; k], 0.99, 1.01, 0.999) {
            Ok(full) if full.omega < recipe.omega => Ok(full),
            _ => Ok(recipe),
        }
    }

    pub fn initial_point(&self) -> Result<ShortTermSolution> {
        Ok(self.to_solution(&self.initial_iterate()?))
    }

    fn to_solution(&self, it: &Iterate) -> ShortTermSolution {
        ShortTermSolution {
            v: self.link.eta_from_w(&it.w).map(f64::sqrt),
            u: it.u.clone(),
            f: it.f.iter().map(|f| f * GIGA).collect(),
            r_d: it.rd.iter().map(|r| r * MEGA).collect(),
            r_u: it.ru.iter().map(|r| r * MEGA).collect(),
            omega: it.omega,
            varrho: it.rho.iter().map(|p| p / MEGA).collect(),
            t_d: it.td,
            t_c: it.tc,
            t_u: it.tu,
        }
    }

    fn from_solution(&self, s: &ShortTermSolution) -> Result<Iterate> {
        let k = self.k();
        if s.u.len() != k || s.f.len() != k || s.r_d.len() != k || s.r_u.len() != k || s.varrho.len() != k {
            return Err(invalid("solution vectors must have one entry per UE"));
        }
        Ok(Iterate {
            w: self.link.w_from_eta(&s.v.map(|v| v * v))?,
            u: s.u.clone(),
            f: s.f.iter().map(|f| f / GIGA).collect(),
            rd: s.r_d.iter().map(|r| r / MEGA).collect(),
            ru: s.r_u.iter().map(|r| r / MEGA).collect(),
            rho: s.varrho.iter().map(|p| p * MEGA).collect(),
            omega: s.omega,
            td: s.t_d,
            tc: s.t_c,
            tu: s.t_u,
        })
    }

    pub fn decision_vars(&self, s: &ShortTermSolution) -> DecisionVars {
        DecisionVars {
            eta: s.v.map(|v| v * v),
            zeta: s.u.iter().map(|u| u * u).collect(),
            f: s.f.clone(),
            r_d: s.r_d.clone(),
            r_u: s.r_u.clone(),
            theta: self.theta,
        }
    }

    pub fn latency(&self, vars: &DecisionVars) -> Result<LatencyTerms> {
        latency_terms_with(&vars.r_d, &vars.r_u, &vars.f, self.theta, &self.flp, self.link.latency)
    }

    /// Largest exact (nonconvex) constraint value `g(x)` in program units;
    /// negative iff the point is strictly feasible.
    pub fn exact_violation(&self, s: &ShortTermSolution) -> Result<f64> {
        let it = self.from_solution(s)?;
        Ok(self.iterate_violation(&it))
    }

    fn iterate_violation(&self, it: &Iterate) -> f64 {
        let hd = self.link.dl_rates(&it.w);
        let hu = self.link.ul_rates(&it.u);
        let mut v = f64::NEG_INFINITY;
        let fmin = self.flp.f_min / GIGA;
        let fmax = self.flp.f_max / GIGA;
        for k in 0..self.k() {
            v = v.max(it.rd[k] - hd[k] / MEGA).max(it.ru[k] - hu[k] / MEGA);
            v = v.max(it.u[k] * it.u[k] - it.rho[k] * it.ru[k]);
            let energy = self.p_ul_w * self.su_mb() * it.rho[k] + self.energy_coeff() * it.f[k] * it.f[k];
            v = v.max(energy - self.flp.e_max_j);
            v = v.max(fmin - it.f[k]).max(it.f[k] - fmax).max(it.u[k] - 1.0).max(-it.u[k]);
        }
        v = v.max(self.link.max_power_load(&it.w) - 1.0);
        let mut implied = it.clone();
        self.fill_epigraph(&mut implied, 1.0);
        v.max(implied.td - it.td).max(implied.tc - it.tc).max(implied.tu - it.tu).max(implied.omega - it.omega)
    }

    fn push_time_atoms(&self, p: &mut SmoothConvexProgram, l: &Layout, rates: impl Fn(usize) -> usize, bound: usize, c: f64, tag: &str) -> Result<()> {
        let k = self.k();
        match self.link.latency {
            LatencyMode::Parallel => {
                for ki in 0..k {
                    p.push(format!("{tag}[{ki}]"), Atom::Ratio { c, den: rates(ki), bound })?;
                }
            }
            LatencyMode::Sequential => {
                p.push(
                    tag.to_string(),
                    Atom::ReciprocalSum { terms: (0..k).map(|ki| (c, vec![rates(ki)])).collect(), a: vec![(bound, -1.0)], b: 0.0 },
                )?;
            }
        }
        let _ = l;
        Ok(())
    }

    /// Shared part of the full and fixed-power programs: objective, epigraph,
    /// time atoms, frequency and rate boxes.
    fn common_program(&self, l: &Layout) -> Result<SmoothConvexProgram> {
        let k = self.k();
        let mut p = SmoothConvexProgram::new(l.n());
        p.set_objective(l.omega(), 1.0 / (1.0 - self.theta));
        let kf = k as f64;
        p.push(
            "epigraph",
            Atom::ReciprocalSum {
                terms: vec![
                    (kf * self.sd_mb(), (0..k).map(|i| l.rd(i)).collect()),
                    (kf * self.su_mb(), (0..k).map(|i| l.ru(i)).collect()),
                ],
                a: vec![(l.td(), 1.0), (l.tc(), 1.0), (l.tu(), 1.0), (l.omega(), -1.0)],
                b: 0.0,
            },
        )?;
        self.push_time_atoms(&mut p, l, |i| l.rd(i), l.td(), self.sd_mb(), "t_d")?;
        for ki in 0..k {
            p.push(format!("t_C[{ki}]"), Atom::Ratio { c: self.compute_coeff(), den: l.f(ki), bound: l.tc() })?;
        }
        self.push_time_atoms(&mut p, l, |i| l.ru(i), l.tu(), self.su_mb(), "t_u")?;
        for ki in 0..k {
            p.set_bounds(l.f(ki), self.flp.f_min / GIGA, self.flp.f_max / GIGA)?;
            p.set_bounds(l.rd(ki), 0.0, f64::INFINITY)?;
            p.set_bounds(l.ru(ki), 0.0, f64::INFINITY)?;
        }
        Ok(p)
    }

    fn energy_atom(&self, l: &Layout, ki: usize, rho_coef: f64) -> Atom {
        Atom::ConvexQuadratic {
            quad: QuadForm::diagonal(vec![(l.f(ki), self.energy_coeff())]),
            q: vec![(l.x(ki), self.p_ul_w * self.su_mb() * rho_coef)],
            r: -self.flp.e_max_j,
        }
    }

    fn encode(&self, it: &Iterate, l: &Layout, scale: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; l.n()];
        for i in 0..l.nw {
            x[l.w(i)] = it.w[i];
        }
        for k in 0..l.nu {
            x[l.u(k)] = it.u[k];
        }
        for k in 0..self.k() {
            x[l.f(k)] = it.f[k];
            x[l.rd(k)] = it.rd[k];
            x[l.ru(k)] = it.ru[k];
            x[l.x(k)] = scale[k] * it.rho[k];
        }
        x[l.omega()] = it.omega;
        x[l.td()] = it.td;
        x[l.tc()] = it.tc;
        x[l.tu()] = it.tu;
        x
    }

    fn decode(&self, x: &[f64], sub: &Subproblem) -> Iterate {
        let k = self.k();
        let (l, scale) = (&sub.layout, &sub.scale);
        let (w, u) = match &sub.fixed {
            Some((w, u)) => (w.clone(), u.clone()),
            None => (x[..l.nw].to_vec(), (0..k).map(|i| x[l.u(i)]).collect()),
        };
        Iterate {
            w,
            u,
            f: (0..k).map(|i| x[l.f(i)]).collect(),
            rd: (0..k).map(|i| x[l.rd(i)]).collect(),
            ru: (0..k).map(|i| x[l.ru(i)]).collect(),
            rho: (0..k).map(|i| x[l.x(i)] / scale[i]).collect(),
            omega: x[l.omega()],
            td: x[l.td()],
            tc: x[l.tc()],
            tu: x[l.tu()],
        }
    }

    fn subproblem_at(&self, it: &Iterate, sca: &ScaParams) -> Result<Subproblem> {
        let l = self.layout();
        let k = self.k();
        let mut p = self.common_program(&l)?;
        let scale: Vec<f64> = (0..k).map(|i| (it.ru[i] / it.rho[i]).sqrt()).collect();
        if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(invalid("expansion point needs positive UL rates and varrho"));
        }
        for ki in 0..k {
            p.push(format!("energy[{ki}]"), self.energy_atom(&l, ki, 1.0 / scale[ki]))?;
        }
        let delta = sca.delta;
        for ki in 0..k {
            // z~ in the balanced pair (x, y) = (s varrho, R_u / s)
            let s = scale[ki];
            let x0 = s * it.rho[ki];
            let y0 = it.ru[ki] / s;
            let s0 = x0 + y0;
            let (xi, ri) = (l.x(ki), l.ru(ki));
            p.push(
                format!("z[{ki}]"),
                Atom::ConvexQuadratic {
                    quad: QuadForm {
                        diag: vec![(l.u(ki), 4.0), (xi, delta), (ri, delta / (s * s))],
                        rank_one: vec![(1.0, vec![(xi, 1.0), (ri, -1.0 / s)])],
                    },
                    q: vec![(xi, -2.0 * s0 - 2.0 * delta * x0), (ri, (-2.0 * s0 - 2.0 * delta * y0) / s)],
                    r: s0 * s0 + delta * (x0 * x0 + y0 * y0),
                },
            )?;
        }
        let pd = self.link.dl_prefactor / (std::f64::consts::LN_2 * MEGA);
        for ki in 0..k {
            let t = &self.link.dl[ki];
            let x0 = self.link.upsilon(ki, &it.w);
            let y0 = self.link.pi(ki, &it.w);
            let c2 = pd * x0 * x0 / (y0 * (x0 * x0 + y0));
            let ratio = x0 * x0 / y0;
            let c1 = pd * 2.0 * x0 / y0;
            let mut rank_one = vec![(c2, t.upsilon.clone())];
            rank_one.extend(t.contamination.iter().map(|b| (c2, b.clone())));
            let diag = t.diag.iter().map(|&(i, d)| (l.w(i), c2 * d)).collect();
            let mut q: Vec<(usize, f64)> = t.upsilon.iter().map(|&(i, a)| (l.w(i), -c1 * a)).collect();
            q.push((l.rd(ki), 1.0));
            p.push(
                format!("R_d[{ki}]"),
                Atom::ConvexQuadratic {
                    quad: QuadForm { diag, rank_one },
                    q,
                    r: c2 - pd * (ratio.ln_1p() - ratio),
                },
            )?;
        }
        let pu = self.link.ul_prefactor / (std::f64::consts::LN_2 * MEGA);
        for ki in 0..k {
            let t = &self.link.ul[ki];
            let x0 = self.link.psi(ki, &it.u);
            let y0 = self.link.xi(ki, &it.u);
            let c2 = pu * x0 * x0 / (y0 * (x0 * x0 + y0));
            let ratio = x0 * x0 / y0;
            let mut diag: Vec<(usize, f64)> = t.xi.iter().map(|&(j, q)| (l.u(j), c2 * q)).collect();
            diag.push((l.u(ki), c2 * t.psi * t.psi));
            p.push(
                format!("R_u[{ki}]"),
                Atom::ConvexQuadratic {
                    quad: QuadForm::diagonal(diag),
                    q: vec![(l.u(ki), -pu * 2.0 * x0 / y0 * t.psi), (l.ru(ki), 1.0)],
                    r: c2 - pu * (ratio.ln_1p() - ratio),
                },
            )?;
        }
        for (g, group) in self.link.power_groups.iter().enumerate() {
            p.push(
                format!("power[{g}]"),
                Atom::ConvexQuadratic { quad: QuadForm::diagonal(group.iter().map(|&i| (l.w(i), 1.0)).collect()), q: vec![], r: -1.0 },
            )?;
        }
        for i in 0..l.nw {
            p.set_bounds(l.w(i), 0.0, f64::INFINITY)?;
        }
        for ki in 0..k {
            p.set_bounds(l.u(ki), 0.0, 1.0)?;
            p.set_bounds(l.x(ki), 0.0, f64::INFINITY)?;
        }
        let start = self.encode(it, &l, &scale);
        Ok(Subproblem { program: p, start, layout: l, scale, fixed: None })
    }

    /// Convex approximation of the epigraph problem around `state`.
    pub fn build_subproblem(&self, state: &ShortTermSolution, sca: &ScaParams) -> Result<Subproblem> {
        self.subproblem_at(&self.from_solution(state)?, sca)
    }

    pub fn decode_solution(&self, sub: &Subproblem, x: &[f64]) -> ShortTermSolution {
        self.to_solution(&self.decode(x, sub))
    }

    fn solve_from(&self, sub: &Subproblem, tol: f64) -> Result<SolveReport> {
        let p = &sub.program;
        let start = if p.min_slack(&sub.start) > 0.0 {
            sub.start.clone()
        } else {
            match find_feasible(p, Some(&sub.start))? {
                Feasibility::Feasible(x) => x,
                Feasibility::Infeasible { best_max_violation } => {
                    return Err(Error::InfeasibleScenario(format!(
                        "convex subproblem has no strictly feasible point (violation {best_max_violation:.3e})"
                    )))
                }
            }
        };
        solve_with(p, &start, tol, &BarrierOptions::warm_start())
    }

    fn finish(&self, it: &Iterate, trace: Vec<ScaTraceRow>, iterations: usize, newton_steps: usize) -> Result<ShortTermOutcome> {
        let solution = self.to_solution(it);
        let vars = self.decision_vars(&solution);
        let latency = self.latency(&vars)?;
        let time = latency.iteration_time() / (1.0 - self.theta);
        Ok(ShortTermOutcome { solution, vars, latency, time, trace, iterations, newton_steps })
    }

    /// SCA loop from the constructive point (or `start`), stopping once the
    /// relative objective change drops below `eps_inner`.
    pub fn algorithm2(&self, sca: &ScaParams, start: Option<&ShortTermSolution>) -> Result<ShortTermOutcome> {
        sca.validate()?;
        let mut it = match start {
            Some(s) => self.from_solution(s)?,
            None => self.starting_iterate()?,
        };
        let scale = 1.0 / (1.0 - self.theta);
        let mut obj = it.omega * scale;
        let mut trace = vec![ScaTraceRow { iter: 0, objective: obj, max_violation: self.iterate_violation(&it).max(0.0) }];
        let mut steps = 0;
        let mut iterations = 0;
        for n in 1..=sca.max_inner_iters {
            let sub = self.subproblem_at(&it, sca)?;
            let report = self.solve_from(&sub, sca.solver_tol)?;
            steps += report.newton_steps;
            iterations = n;
            let next = self.decode(&report.x_star, &sub);
            let next_obj = next.omega * scale;
            trace.push(ScaTraceRow { iter: n, objective: next_obj, max_violation: self.iterate_violation(&next).max(0.0) });
            let done = (next_obj - obj).abs() <= sca.eps_inner * (1.0 + next_obj.abs());
            it = next;
            obj = next_obj;
            if done {
                break;
            }
        }
        log::debug!("SCA finished after {iterations} iterations ({steps} Newton steps), objective {obj:.6e}");
        self.finish(&it, trace, iterations, steps)
    }

    /// Optimal `(f, R, omega)` for fixed powers: rates at their exact values
    /// and each UE at the fastest frequency its energy budget allows.
    pub fn fixed_power(&self, w: &[f64], u: &[f64]) -> Result<ShortTermOutcome> {
        if w.len() != self.link.num_w || u.len() != self.k() {
            return Err(invalid("fixed powers have the wrong dimension"));
        }
        let mut it = self.operating_point(w.to_vec(), u.to_vec(), 1.0, 1.0, 1.0)?;
        it.f.iter_mut().for_each(|f| *f = f.max(self.flp.f_min / GIGA));
        self.fill_epigraph(&mut it, 1.0);
        let trace = vec![ScaTraceRow { iter: 0, objective: it.omega / (1.0 - self.theta), max_violation: 0.0 }];
        self.finish(&it, trace, 0, 0)
    }

    /// The convex program in `(f, R_d, R_u, varrho, omega, t)` at fixed powers,
    /// with the exact rates as upper bounds. Returns it with a strictly
    /// feasible start.
    pub fn fixed_power_program(&self, w: &[f64], u: &[f64]) -> Result<Subproblem> {
        let k = self.k();
        let l = Layout { nw: 0, nu: 0, k };
        let mut p = self.common_program(&l)?;
        let it = self.operating_point(w.to_vec(), u.to_vec(), 0.99, 1.01, 0.999)?;
        let hd = self.link.dl_rates(w);
        let hu = self.link.ul_rates(u);
        for ki in 0..k {
            p.set_bounds(l.rd(ki), 0.0, hd[ki] / MEGA)?;
            p.set_bounds(l.ru(ki), 0.0, hu[ki] / MEGA)?;
            p.push(format!("energy[{ki}]"), self.energy_atom(&l, ki, 1.0))?;
            p.push(format!("varrho[{ki}]"), Atom::Ratio { c: u[ki] * u[ki], den: l.ru(ki), bound: l.x(ki) })?;
        }
        let scale = vec![1.0; k];
        let start = self.encode(&it, &l, &scale);
        Ok(Subproblem { program: p, start, layout: l, scale, fixed: Some((w.to_vec(), u.to_vec())) })
    }

    /// Solves [`Self::fixed_power_program`] with the barrier method.
    pub fn fixed_power_convex(&self, w: &[f64], u: &[f64], tol: f64) -> Result<ShortTermOutcome> {
        let sub = self.fixed_power_program(w, u)?;
        let report = self.solve_from(&sub, tol)?;
        let it = self.decode(&report.x_star, &sub);
        let trace = vec![ScaTraceRow { iter: 1, objective: report.objective_value, max_violation: self.iterate_violation(&it).max(0.0) }];
        self.finish(&it, trace, 1, report.newton_steps)
    }

    /// Equal DL power (`sum_k sigma^2 eta = 1` per group) and full UL power.
    pub fn equal_power(&self) -> (Vec<f64>, Vec<f64>) {
        (self.link.uniform_w(1.0), vec![1.0; self.k()])
    }

    pub fn w_of(&self, s: &ShortTermSolution) -> Result<Vec<f64>> {
        self.link.w_from_eta(&s.v.map(|v| v * v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{PathLossParams, Scenario};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_bound_by_hand() {
        assert!((quad_upper_bound(2.0, 2.0, 1.0, 1.0, 0.01) + 11.98).abs() < 1e-12);
        assert_eq!(quad_upper_bound(1.5, 0.5, 1.5, 0.5, 0.3), -4.0);
        for i in -20..=20 {
            for j in -20..=20 {
                let (x, y) = (i as f64 * 0.25, j as f64 * 0.25);
                assert!(quad_upper_bound(x, y, 0.7, -0.2, 0.0) >= -(x + y).powi(2) - 1e-12);
            }
        }
    }

    #[test]
    fn z_surrogate_by_hand() {
        assert_eq!(z_exact(1.0, 1.0, 1.0), 0.0);
        assert_eq!(z_tilde(1.0, 1.0, 1.0, 1.0, 1.0, 0.01), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let (u, p, r): (f64, f64, f64) = (rng.random(), 3.0 * rng.random::<f64>(), 3.0 * rng.random::<f64>());
            assert!(z_tilde(u, p, r, 0.4, 1.7, 0.01) >= z_exact(u, p, r) - 1e-12);
        }
    }

    #[test]
    fn log_bound_tight_and_below() {
        let (x0, y0) = (1.3, 0.7);
        let f = |x: f64, y: f64| (x * x / y).ln_1p();
        assert!((log_ratio_lower(x0, y0, x0, y0) - f(x0, y0)).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let x = 4.0 * rng.random::<f64>() - 2.0;
            let y = 0.01 + 3.0 * rng.random::<f64>();
            assert!(log_ratio_lower(x, y, x0, y0) <= f(x, y) + 1e-12);
        }
    }

    fn toy() -> ShortTermProblem {
        let sys = SystemParams::default();
        let sc = Scenario::generate(&sys, &PathLossParams::default(), 8, 3, 11).unwrap();
        ShortTermProblem::new(LinkModel::cell_free(&sc, &sys), &sys, &FlParams::default(), 0.01).unwrap()
    }

    #[test]
    fn initial_point_is_strictly_feasible() {
        let st = toy();
        let s = st.initial_point().unwrap();
        assert!(st.exact_violation(&s).unwrap() < 0.0);
        let w = st.w_of(&s).unwrap();
        assert!((st.link.max_power_load(&w) - 0.5).abs() < 1e-12);
        let sub = st.build_subproblem(&s, &ScaParams::default()).unwrap();
        assert!(sub.program.min_slack(&sub.start) > 0.0);
    }

    #[test]
    fn subproblem_structure() {
        let st = toy();
        let (m, k) = (8, 3);
        let s = st.initial_point().unwrap();
        let sub = st.build_subproblem(&s, &ScaParams::default()).unwrap();
        assert_eq!(sub.program.num_constraints(), 1 + 3 * k + k + k + k + k + m);
        assert_eq!(sub.program.n_vars, m * k + 5 * k + 4);
        let back = st.decode_solution(&sub, &sub.start);
        assert!((back.omega - s.omega).abs() < 1e-15);
        for (a, b) in back.varrho.iter().zip(&s.varrho) {
            assert!((a - b).abs() <= 1e-15 * b);
        }
    }
}
