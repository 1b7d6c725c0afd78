//! Catalog of smooth convex constraint atoms and the program container.
//!
//! Every atom lowers to one internal form,
//! `sum_p c_p / (sum_{i in S_p} x_i) + x^T Q x + q^T x + r <= 0`,
//! with `c_p > 0` and `Q = diag(d) + sum_j w_j a_j a_j^T` positive semidefinite
//! (`d, w >= 0`). The reciprocal terms are convex on their domain
//! `sum_{i in S_p} x_i > 0`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};

use super::newton::Hessian;
use crate::error::{invalid, Result};

/// Tolerance on negative eigenvalues / weights when validating `Q`.
pub const PSD_TOL: f64 = 1e-9;

/// `Q = diag + sum_j w_j a_j a_j^T` over global variable indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuadForm {
    pub diag: Vec<(usize, f64)>,
    pub rank_one: Vec<(f64, Vec<(usize, f64)>)>,
}

impl QuadForm {
    pub fn diagonal(diag: Vec<(usize, f64)>) -> Self {
        Self { diag, rank_one: Vec::new() }
    }

    /// Factors a dense symmetric matrix, rejecting it if its smallest
    /// eigenvalue is below `-PSD_TOL`. `vars[i]` is the variable of row `i`.
    pub fn from_dense(q: &DMatrix<f64>, vars: &[usize]) -> Result<Self> {
        if q.nrows() != q.ncols() || q.nrows() != vars.len() {
            return Err(invalid("quadratic form must be square and match its variable list"));
        }
        let sym = (q + q.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let mut rank_one = Vec::new();
        for (j, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam < -PSD_TOL {
                return Err(invalid(format!("quadratic form is not PSD (eigenvalue {lam:e})")));
            }
            if lam > 0.0 {
                let col = eig.eigenvectors.column(j);
                let a: Vec<(usize, f64)> = vars.iter().zip(col.iter()).map(|(&v, &c)| (v, c)).collect();
                rank_one.push((lam, a));
            }
        }
        Ok(Self { diag: Vec::new(), rank_one })
    }

    fn validate(&self) -> Result<()> {
        if self.diag.iter().any(|(_, d)| *d < -PSD_TOL || !d.is_finite()) {
            return Err(invalid("quadratic form has a negative diagonal term"));
        }
        if self.rank_one.iter().any(|(w, a)| *w < -PSD_TOL || !w.is_finite() || a.iter().any(|(_, v)| !v.is_finite())) {
            return Err(invalid("quadratic form has a negative rank-one weight"));
        }
        Ok(())
    }
}

/// Public constraint atoms. Each is `... <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum Atom {
    /// `a^T x + b <= 0`.
    Affine { a: Vec<(usize, f64)>, b: f64 },
    /// `x^T Q x + q^T x + r <= 0`.
    ConvexQuadratic { quad: QuadForm, q: Vec<(usize, f64)>, r: f64 },
    /// `c / x_den <= x_bound`.
    Ratio { c: f64, den: usize, bound: usize },
    /// `c / sum_{i in den} x_i <= x_bound`.
    SumRatio { c: f64, den: Vec<usize>, bound: usize },
    /// `sum_p c_p / sum_{i in S_p} x_i + a^T x + b <= 0`.
    ReciprocalSum { terms: Vec<(f64, Vec<usize>)>, a: Vec<(usize, f64)>, b: f64 },
}

impl Atom {
    fn kind(&self) -> &'static str {
        match self {
            Atom::Affine { .. } => "affine",
            Atom::ConvexQuadratic { .. } => "convex_quadratic",
            Atom::Ratio { .. } => "ratio",
            Atom::SumRatio { .. } => "sum_ratio",
            Atom::ReciprocalSum { .. } => "reciprocal_sum",
        }
    }
}

/// A constraint together with a label used in debug dumps.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub label: String,
    pub atom: Atom,
}

/// Minimize `c^T x` over box bounds and convex atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothConvexProgram {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub(crate) lowered: Vec<ConvexFn>,
}

impl SmoothConvexProgram {
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            objective: vec![0.0; n_vars],
            lower: vec![f64::NEG_INFINITY; n_vars],
            upper: vec![f64::INFINITY; n_vars],
            constraints: Vec::new(),
            lowered: Vec::new(),
        }
    }

    pub fn set_objective(&mut self, i: usize, c: f64) {
        self.objective[i] = c;
    }

    pub fn set_bounds(&mut self, i: usize, lo: f64, hi: f64) -> Result<()> {
        if !(lo < hi) {
            return Err(invalid(format!("empty box for variable {i}: [{lo}, {hi}]")));
        }
        self.lower[i] = lo;
        self.upper[i] = hi;
        Ok(())
    }

    /// Validates and appends a constraint.
    pub fn push(&mut self, label: impl Into<String>, atom: Atom) -> Result<()> {
        let label = label.into();
        let f = ConvexFn::lower(&atom, self.n_vars).map_err(|e| invalid(format!("{label}: {e}")))?;
        self.lowered.push(f);
        self.constraints.push(Constraint { label, atom });
        Ok(())
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_finite_bounds(&self) -> usize {
        self.lower.iter().chain(self.upper.iter()).filter(|b| b.is_finite()).count()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Constraint values `g_i(x)`; `+inf` outside an atom's domain.
    pub fn constraint_values(&self, x: &[f64]) -> Vec<f64> {
        self.lowered.iter().map(|f| f.value(x)).collect()
    }

    /// Largest violation over atoms and boxes (0 when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let atoms = self.constraint_values(x).into_iter().fold(0.0, f64::max);
        let boxes = (0..self.n_vars)
            .map(|i| (self.lower[i] - x[i]).max(x[i] - self.upper[i]))
            .fold(0.0, f64::max);
        atoms.max(boxes)
    }

    /// Smallest slack over atoms and finite boxes; positive iff strictly feasible.
    pub fn min_slack(&self, x: &[f64]) -> f64 {
        let atoms = self.constraint_values(x).into_iter().map(|g| -g).fold(f64::INFINITY, f64::min);
        let boxes = (0..self.n_vars)
            .map(|i| (x[i] - self.lower[i]).min(self.upper[i] - x[i]))
            .fold(f64::INFINITY, f64::min);
        atoms.min(boxes)
    }

    /// Plain-text description for triage.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "program: {} vars, {} constraints", self.n_vars, self.constraints.len());
        let obj: Vec<String> = self
            .objective
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, c)| format!("{c:+e}*x{i}"))
            .collect();
        let _ = writeln!(out, "minimize {}", obj.join(" "));
        for i in 0..self.n_vars {
            if self.lower[i].is_finite() || self.upper[i].is_finite() {
                let _ = writeln!(out, "bound x{i} in [{:e}, {:e}]", self.lower[i], self.upper[i]);
            }
        }
        for c in &self.constraints {
            let _ = writeln!(out, "{} ({}): {:?}", c.label, c.atom.kind(), c.atom);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Recip {
    pub c: f64,
    pub idx: Vec<usize>,
}

/// Lowered constraint function over its support. All index lists inside are
/// local positions in `support`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ConvexFn {
    pub support: Vec<usize>,
    pub recips: Vec<Recip>,
    pub diag: Vec<(usize, f64)>,
    pub rank_one: Vec<(f64, Vec<(usize, f64)>)>,
    pub linear: Vec<(usize, f64)>,
    pub constant: f64,
    /// Set for ratio atoms `c / sum(den) <= bound`, whose barrier uses the
    /// product form `-ln(sum(den) * bound - c)` instead of `-ln(-g)`.
    pub hyperbolic: Option<Hyperbolic>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Hyperbolic {
    pub c: f64,
    pub den: Vec<usize>,
    pub bound: usize,
}

impl ConvexFn {
    pub fn lower(atom: &Atom, n: usize) -> Result<Self> {
        let mut recips: Vec<(f64, Vec<usize>)> = Vec::new();
        let mut quad = QuadForm::default();
        let mut linear: Vec<(usize, f64)> = Vec::new();
        let constant;
        match atom {
            Atom::Affine { a, b } => {
                linear.extend_from_slice(a);
                constant = *b;
            }
            Atom::ConvexQuadratic { quad: qf, q, r } => {
                qf.validate()?;
                quad = qf.clone();
                linear.extend_from_slice(q);
                constant = *r;
            }
            Atom::Ratio { c, den, bound } => {
                recips.push((*c, vec![*den]));
                linear.push((*bound, -1.0));
                constant = 0.0;
            }
            Atom::SumRatio { c, den, bound } => {
                recips.push((*c, den.clone()));
                linear.push((*bound, -1.0));
                constant = 0.0;
            }
            Atom::ReciprocalSum { terms, a, b } => {
                recips.extend(terms.iter().cloned());
                linear.extend_from_slice(a);
                constant = *b;
            }
        }
        for (c, idx) in &recips {
            if !(*c > 0.0 && c.is_finite()) || idx.is_empty() {
                return Err(invalid("reciprocal terms need c > 0 and a nonempty denominator"));
            }
        }
        if !constant.is_finite() || linear.iter().any(|(_, v)| !v.is_finite()) {
            return Err(invalid("non-finite coefficient"));
        }
        let mut support: Vec<usize> = recips
            .iter()
            .flat_map(|(_, idx)| idx.iter().copied())
            .chain(quad.diag.iter().map(|(i, _)| *i))
            .chain(quad.rank_one.iter().flat_map(|(_, a)| a.iter().map(|(i, _)| *i)))
            .chain(linear.iter().map(|(i, _)| *i))
            .collect();
        support.sort_unstable();
        support.dedup();
        if support.last().is_some_and(|&i| i >= n) {
            return Err(invalid("variable index out of range"));
        }
        let local = |g: usize| support.binary_search(&g).expect("index in support");
        let hyperbolic = match atom {
            Atom::Ratio { c, den, bound } if den != bound => {
                Some(Hyperbolic { c: *c, den: vec![local(*den)], bound: local(*bound) })
            }
            Atom::SumRatio { c, den, bound } if !den.contains(bound) => {
                Some(Hyperbolic { c: *c, den: den.iter().map(|&g| local(g)).collect(), bound: local(*bound) })
            }
            _ => None,
        };
        Ok(Self {
            hyperbolic,
            recips: recips.iter().map(|(c, idx)| Recip { c: *c, idx: idx.iter().map(|&g| local(g)).collect() }).collect(),
            diag: quad.diag.iter().filter(|(_, d)| *d > 0.0).map(|&(g, d)| (local(g), d)).collect(),
            rank_one: quad
                .rank_one
                .iter()
                .filter(|(w, _)| *w > 0.0)
                .map(|(w, a)| (*w, a.iter().map(|&(g, v)| (local(g), v)).collect()))
                .collect(),
            linear: linear.iter().map(|&(g, v)| (local(g), v)).collect(),
            constant,
            support,
        })
    }

    /// Copy with an extra linear term `coef * x_var`.
    pub fn with_linear(&self, var: usize, coef: f64) -> Self {
        let mut f = self.clone();
        f.hyperbolic = None;
        let pos = f.support.partition_point(|&g| g < var);
        if f.support.get(pos) != Some(&var) {
            f.support.insert(pos, var);
            let shift = |i: &mut usize| {
                if *i >= pos {
                    *i += 1
                }
            };
            f.recips.iter_mut().for_each(|r| r.idx.iter_mut().for_each(shift));
            f.diag.iter_mut().for_each(|(i, _)| shift(i));
            f.rank_one.iter_mut().for_each(|(_, a)| a.iter_mut().for_each(|(i, _)| shift(i)));
            f.linear.iter_mut().for_each(|(i, _)| shift(i));
        }
        f.linear.push((pos, coef));
        f
    }

    pub fn gather(&self, x: &[f64], buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend(self.support.iter().map(|&g| x[g]));
    }

    /// Value from gathered local coordinates; `+inf` outside the domain.
    pub fn value_local(&self, xl: &[f64]) -> f64 {
        let mut v = self.constant;
        for r in &self.recips {
            let s: f64 = r.idx.iter().map(|&i| xl[i]).sum();
            if !(s > 0.0) {
                return f64::INFINITY;
            }
            v += r.c / s;
        }
        for &(i, d) in &self.diag {
            v += d * xl[i] * xl[i];
        }
        for (w, a) in &self.rank_one {
            let p: f64 = a.iter().map(|&(i, c)| c * xl[i]).sum();
            v += w * p * p;
        }
        for &(i, c) in &self.linear {
            v += c * xl[i];
        }
        v
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut buf = Vec::with_capacity(self.support.len());
        self.gather(x, &mut buf);
        self.value_local(&buf)
    }

    /// Local gradient; assumes `xl` lies in the domain.
    pub fn grad_local(&self, xl: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for r in &self.recips {
            let s: f64 = r.idx.iter().map(|&i| xl[i]).sum();
            let g = -r.c / (s * s);
            for &i in &r.idx {
                out[i] += g;
            }
        }
        for &(i, d) in &self.diag {
            out[i] += 2.0 * d * xl[i];
        }
        for (w, a) in &self.rank_one {
            let p: f64 = a.iter().map(|&(i, c)| c * xl[i]).sum();
            for &(i, c) in a {
                out[i] += 2.0 * w * p * c;
            }
        }
        for &(i, c) in &self.linear {
            out[i] += c;
        }
    }

    /// Adds `scale * hess g` as diagonal and rank-one terms.
    pub fn add_hessian_terms(&self, xl: &[f64], scale: f64, h: &mut Hessian) {
        let sup = &self.support;
        for r in &self.recips {
            let s: f64 = r.idx.iter().map(|&i| xl[i]).sum();
            h.add_rank_one(scale * 2.0 * r.c / (s * s * s), r.idx.iter().map(|&i| (sup[i], 1.0)));
        }
        for &(i, d) in &self.diag {
            h.diag[sup[i]] += scale * 2.0 * d;
        }
        for (w, a) in &self.rank_one {
            h.add_rank_one(scale * 2.0 * w, a.iter().map(|&(i, c)| (sup[i], c)));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(atom: Atom, x: &[f64]) {
        let f = ConvexFn::lower(&atom, x.len()).unwrap();
        let mut xl = Vec::new();
        f.gather(x, &mut xl);
        let mut g = vec![0.0; xl.len()];
        f.grad_local(&xl, &mut g);
        let n = xl.len();
        // local Hessian through an identity support map
        let local = ConvexFn { support: (0..n).collect(), ..f.clone() };
        let mut hess = Hessian::default();
        hess.reset(n);
        local.add_hessian_terms(&xl, 1.0, &mut hess);
        let mut h = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            hess.apply(&e, &mut h[j * n..(j + 1) * n]);
        }
        for i in 0..n {
            let e = 1e-6 * (1.0 + xl[i].abs());
            let mut p = xl.clone();
            let mut m = xl.clone();
            p[i] += e;
            m[i] -= e;
            let fd = (f.value_local(&p) - f.value_local(&m)) / (2.0 * e);
            assert!((fd - g[i]).abs() < 1e-6 * (1.0 + g[i].abs()), "grad {i}: {fd} vs {}", g[i]);
            let mut gp = vec![0.0; n];
            let mut gm = vec![0.0; n];
            f.grad_local(&p, &mut gp);
            f.grad_local(&m, &mut gm);
            for j in 0..n {
                let fd = (gp[j] - gm[j]) / (2.0 * e);
                assert!((fd - h[i * n + j]).abs() < 1e-5 * (1.0 + fd.abs()), "hess {i},{j}");
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let x = [0.7, 1.3, 2.1];
        fd_check(Atom::Ratio { c: 3.0, den: 0, bound: 2 }, &x);
        fd_check(Atom::SumRatio { c: 2.0, den: vec![0, 1], bound: 2 }, &x);
        fd_check(
            Atom::ConvexQuadratic {
                quad: QuadForm { diag: vec![(0, 1.5), (2, 0.3)], rank_one: vec![(2.0, vec![(0, 1.0), (1, -0.5)])] },
                q: vec![(1, 0.4)],
                r: -1.0,
            },
            &x,
        );
        fd_check(
            Atom::ReciprocalSum { terms: vec![(1.0, vec![0, 1]), (0.5, vec![2])], a: vec![(0, 1.0)], b: 0.2 },
            &x,
        );
    }

    #[test]
    fn rejects_indefinite_quadratics() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-3]);
        assert!(QuadForm::from_dense(&q, &[0, 1]).is_err());
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let f = QuadForm::from_dense(&q, &[0, 1]).unwrap();
        let lowered = ConvexFn::lower(&Atom::ConvexQuadratic { quad: f, q: vec![], r: 0.0 }, 2).unwrap();
        // x^T Q x at (1, 2) = 2 + 4 + 8 = 14
        assert!((lowered.value(&[1.0, 2.0]) - 14.0).abs() < 1e-12);
        let mut p = SmoothConvexProgram::new(2);
        assert!(p
            .push("bad", Atom::ConvexQuadratic { quad: QuadForm::diagonal(vec![(0, -1.0)]), q: vec![], r: 0.0 })
            .is_err());
        assert!(p.push("oob", Atom::Affine { a: vec![(5, 1.0)], b: 0.0 }).is_err());
    }

    #[test]
    fn extra_linear_term_keeps_indices() {
        let f = ConvexFn::lower(&Atom::Ratio { c: 1.0, den: 2, bound: 4 }, 6).unwrap();
        let g = f.with_linear(3, -1.0);
        let x = [0.0, 0.0, 2.0, 5.0, 1.0, 0.0];
        assert!((g.value(&x) - (0.5 - 1.0 - 5.0)).abs() < 1e-15);
        let h = f.with_linear(0, 2.0);
        let x = [1.5, 0.0, 2.0, 0.0, 1.0, 0.0];
        assert!((h.value(&x) - (0.5 - 1.0 + 3.0)).abs() < 1e-15);
    }
}
