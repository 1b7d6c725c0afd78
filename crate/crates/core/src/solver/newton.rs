//! Newton systems for the barrier Hessian.
//!
//! The Hessian is collected as a diagonal, a few small dense blocks and a
//! list of scaled rank-one terms `s v v^T`. Rank-one terms with small support
//! are merged into a block-diagonal part `B`; the rest form `U S U^T` and are
//! handled with the Woodbury identity. When that would not be cheaper than a
//! dense factorization, the full matrix is assembled and factored instead.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use crate::error::{Error, Result};

/// Largest block of the block-diagonal part.
const BLOCK_CAP: usize = 64;

#[derive(Debug, Default, Clone)]
pub(crate) struct Hessian {
    pub n: usize,
    pub diag: Vec<f64>,
    blk_start: Vec<usize>,
    blk_vars: Vec<usize>,
    blk_mat: Vec<f64>,
    blk_mat_start: Vec<usize>,
    ro_scale: Vec<f64>,
    ro_start: Vec<usize>,
    ro_idx: Vec<usize>,
    ro_val: Vec<f64>,
}

impl Hessian {
    pub fn reset(&mut self, n: usize) {
        self.n = n;
        self.diag.clear();
        self.diag.resize(n, 0.0);
        self.blk_start.clear();
        self.blk_start.push(0);
        self.blk_vars.clear();
        self.blk_mat.clear();
        self.blk_mat_start.clear();
        self.blk_mat_start.push(0);
        self.ro_scale.clear();
        self.ro_start.clear();
        self.ro_start.push(0);
        self.ro_idx.clear();
        self.ro_val.clear();
    }

    /// Adds `scale * v v^T` for the sparse vector `v`.
    pub fn add_rank_one(&mut self, scale: f64, v: impl IntoIterator<Item = (usize, f64)>) {
        for (i, x) in v {
            if x != 0.0 {
                self.ro_idx.push(i);
                self.ro_val.push(x);
            }
        }
        if *self.ro_start.last().unwrap() == self.ro_idx.len() {
            return;
        }
        self.ro_scale.push(scale);
        self.ro_start.push(self.ro_idx.len());
    }

    /// Adds a dense symmetric block (column-major over `vars`).
    pub fn add_block(&mut self, vars: &[usize], mat: &[f64]) {
        debug_assert_eq!(mat.len(), vars.len() * vars.len());
        self.blk_vars.extend_from_slice(vars);
        self.blk_start.push(self.blk_vars.len());
        self.blk_mat.extend_from_slice(mat);
        self.blk_mat_start.push(self.blk_mat.len());
    }

    fn n_rank_one(&self) -> usize {
        self.ro_scale.len()
    }

    fn rank_one(&self, j: usize) -> (f64, &[usize], &[f64]) {
        let (a, b) = (self.ro_start[j], self.ro_start[j + 1]);
        (self.ro_scale[j], &self.ro_idx[a..b], &self.ro_val[a..b])
    }

    fn n_blocks(&self) -> usize {
        self.blk_start.len() - 1
    }

    fn block(&self, j: usize) -> (&[usize], &[f64]) {
        (
            &self.blk_vars[self.blk_start[j]..self.blk_start[j + 1]],
            &self.blk_mat[self.blk_mat_start[j]..self.blk_mat_start[j + 1]],
        )
    }

    /// Largest diagonal entry of the assembled matrix.
    fn diag_scale(&self) -> f64 {
        let mut d = self.diag.clone();
        for j in 0..self.n_blocks() {
            let (vars, m) = self.block(j);
            let k = vars.len();
            for (a, &v) in vars.iter().enumerate() {
                d[v] += m[a * k + a];
            }
        }
        for j in 0..self.n_rank_one() {
            let (s, idx, val) = self.rank_one(j);
            for (&i, &x) in idx.iter().zip(val) {
                d[i] += s * x * x;
            }
        }
        d.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300)
    }

    /// `H x` without assembling `H`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            out[i] = self.diag[i] * x[i];
        }
        for j in 0..self.n_blocks() {
            let (vars, m) = self.block(j);
            let k = vars.len();
            for (b, &vb) in vars.iter().enumerate() {
                let xb = x[vb];
                for (a, &va) in vars.iter().enumerate() {
                    out[va] += m[b * k + a] * xb;
                }
            }
        }
        for j in 0..self.n_rank_one() {
            let (s, idx, val) = self.rank_one(j);
            let p: f64 = idx.iter().zip(val).map(|(&i, &v)| v * x[i]).sum();
            let sp = s * p;
            for (&i, &v) in idx.iter().zip(val) {
                out[i] += sp * v;
            }
        }
    }

    /// Solves `H d = -rhs`.
    pub fn newton_direction(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let b: Vec<f64> = rhs.iter().map(|v| -v).collect();
        let mut reg = 0.0;
        let scale = self.diag_scale();
        for _ in 0..12 {
            if let Some(f) = Factor::new(self, reg) {
                let mut d = f.solve(&b);
                if f.low_rank() {
                    // one step of iterative refinement against the exact H
                    let mut hd = vec![0.0; self.n];
                    self.apply(&d, &mut hd);
                    for (i, v) in hd.iter_mut().enumerate() {
                        *v = b[i] - *v - reg * d[i];
                    }
                    let corr = f.solve(&hd);
                    d.iter_mut().zip(&corr).for_each(|(a, c)| *a += c);
                }
                if d.iter().all(|v| v.is_finite()) {
                    return Ok(d);
                }
            }
            reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
        }
        Err(Error::Solver("Newton system is singular".into()))
    }
}

struct Block {
    vars: Vec<usize>,
    /// Lower Cholesky factor, column-major.
    l: Vec<f64>,
}

enum Factor {
    Dense(faer::linalg::solvers::Llt<f64>),
    Structured {
        n: usize,
        blocks: Vec<Block>,
        /// Low-rank columns as (index, value) lists.
        u: Vec<Vec<(usize, f64)>>,
        /// `B^{-1} u_j`.
        z: Vec<Vec<f64>>,
        /// Cholesky factor of `S^{-1} + U^T B^{-1} U`.
        cap: Vec<f64>,
    },
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

impl Factor {
    fn low_rank(&self) -> bool {
        matches!(self, Factor::Structured { u, .. } if !u.is_empty())
    }

    fn new(h: &Hessian, reg: f64) -> Option<Self> {
        let n = h.n;
        let mut parent: Vec<usize> = (0..n).collect();
        let mut size = vec![1usize; n];
        let union = |parent: &mut Vec<usize>, size: &mut Vec<usize>, a: usize, b: usize| {
            let (ra, rb) = (find(parent, a), find(parent, b));
            if ra != rb {
                let (big, small) = if size[ra] >= size[rb] { (ra, rb) } else { (rb, ra) };
                parent[small] = big;
                size[big] += size[small];
            }
        };
        for j in 0..h.n_blocks() {
            let (vars, _) = h.block(j);
            for w in vars.windows(2) {
                union(&mut parent, &mut size, w[0], w[1]);
            }
        }
        let mut order: Vec<usize> = (0..h.n_rank_one()).collect();
        order.sort_by_key(|&j| h.ro_start[j + 1] - h.ro_start[j]);
        let mut in_b = vec![false; h.n_rank_one()];
        let mut mark = vec![usize::MAX; n];
        let mut low_rank = Vec::new();
        for &j in &order {
            let (_, idx, _) = h.rank_one(j);
            let mut total = 0;
            for &i in idx {
                let r = find(&mut parent, i);
                if mark[r] != j {
                    mark[r] = j;
                    total += size[r];
                }
            }
            if total <= BLOCK_CAP {
                in_b[j] = true;
                for w in idx.windows(2) {
                    union(&mut parent, &mut size, w[0], w[1]);
                }
            } else {
                low_rank.push(j);
            }
        }
        let r = low_rank.len();
        let cube: f64 = (0..n).filter(|&i| find(&mut parent, i) == i).map(|i| (size[i] as f64).powi(3)).sum();
        let nf = n as f64;
        let rf = r as f64;
        let structured_cost = cube / 3.0 + rf * nf * (BLOCK_CAP as f64 + rf) + rf.powi(3) / 3.0;
        if structured_cost > nf.powi(3) / 3.0 {
            return Self::dense(h, reg);
        }

        // blocks in order of their smallest variable
        let mut loc = vec![(usize::MAX, 0usize); n];
        let mut blocks: Vec<Block> = Vec::new();
        let mut root_block = vec![usize::MAX; n];
        for i in 0..n {
            let root = find(&mut parent, i);
            if root_block[root] == usize::MAX {
                root_block[root] = blocks.len();
                blocks.push(Block { vars: Vec::new(), l: Vec::new() });
            }
            let b = root_block[root];
            loc[i] = (b, blocks[b].vars.len());
            blocks[b].vars.push(i);
        }
        for b in &mut blocks {
            let k = b.vars.len();
            b.l = vec![0.0; k * k];
            for (a, &v) in b.vars.iter().enumerate() {
                b.l[a * k + a] = h.diag[v] + reg;
            }
        }
        for j in 0..h.n_blocks() {
            let (vars, m) = h.block(j);
            let kb = vars.len();
            let bi = loc[vars[0]].0;
            let k = blocks[bi].vars.len();
            for (c, &vc) in vars.iter().enumerate() {
                let pc = loc[vc].1;
                for (a, &va) in vars.iter().enumerate() {
                    blocks[bi].l[pc * k + loc[va].1] += m[c * kb + a];
                }
            }
        }
        for j in 0..h.n_rank_one() {
            if !in_b[j] {
                continue;
            }
            let (s, idx, val) = h.rank_one(j);
            let bi = loc[idx[0]].0;
            let k = blocks[bi].vars.len();
            let l = &mut blocks[bi].l;
            for (&ic, &vc) in idx.iter().zip(val) {
                let pc = loc[ic].1;
                let svc = s * vc;
                for (&ia, &va) in idx.iter().zip(val) {
                    l[pc * k + loc[ia].1] += svc * va;
                }
            }
        }
        for b in &mut blocks {
            if !cholesky_in_place(&mut b.l, b.vars.len()) {
                return None;
            }
        }
        let mut f = Factor::Structured { n, blocks, u: Vec::new(), z: Vec::new(), cap: Vec::new() };
        if r == 0 {
            return Some(f);
        }
        let mut u = Vec::with_capacity(r);
        let mut z = Vec::with_capacity(r);
        let mut scales = Vec::with_capacity(r);
        for &j in &low_rank {
            let (s, idx, val) = h.rank_one(j);
            let col: Vec<(usize, f64)> = idx.iter().copied().zip(val.iter().copied()).collect();
            let mut dense = vec![0.0; n];
            for &(i, v) in &col {
                dense[i] += v;
            }
            z.push(f.solve_b(&dense));
            u.push(col);
            scales.push(s);
        }
        let mut cap = vec![0.0; r * r];
        for a in 0..r {
            for b in a..r {
                let v: f64 = u[a].iter().map(|&(i, x)| x * z[b][i]).sum();
                cap[b * r + a] = v;
                cap[a * r + b] = v;
            }
            cap[a * r + a] += 1.0 / scales[a];
        }
        if !cholesky_in_place(&mut cap, r) {
            return None;
        }
        if let Factor::Structured { u: fu, z: fz, cap: fc, .. } = &mut f {
            *fu = u;
            *fz = z;
            *fc = cap;
        }
        Some(f)
    }

    fn dense(h: &Hessian, reg: f64) -> Option<Self> {
        let n = h.n;
        let mut m = Mat::<f64>::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = h.diag[i] + reg;
        }
        for j in 0..h.n_blocks() {
            let (vars, blk) = h.block(j);
            let k = vars.len();
            for (c, &vc) in vars.iter().enumerate() {
                for (a, &va) in vars.iter().enumerate() {
                    m[(va, vc)] += blk[c * k + a];
                }
            }
        }
        for j in 0..h.n_rank_one() {
            let (s, idx, val) = h.rank_one(j);
            for (&ic, &vc) in idx.iter().zip(val) {
                let svc = s * vc;
                for (&ia, &va) in idx.iter().zip(val) {
                    m[(ia, ic)] += svc * va;
                }
            }
        }
        m.llt(Side::Lower).ok().map(Factor::Dense)
    }

    /// Solves with the block-diagonal part only.
    fn solve_b(&self, rhs: &[f64]) -> Vec<f64> {
        let Factor::Structured { n, blocks, .. } = self else { unreachable!() };
        let mut out = vec![0.0; *n];
        let mut buf = Vec::new();
        for b in blocks {
            buf.clear();
            buf.extend(b.vars.iter().map(|&v| rhs[v]));
            cholesky_solve(&b.l, b.vars.len(), &mut buf);
            for (&v, &x) in b.vars.iter().zip(&buf) {
                out[v] = x;
            }
        }
        out
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match self {
            Factor::Dense(llt) => {
                let b = Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
                let x = llt.solve(&b);
                (0..rhs.len()).map(|i| x[(i, 0)]).collect()
            }
            Factor::Structured { u, z, cap, .. } => {
                let mut y = self.solve_b(rhs);
                let r = u.len();
                if r > 0 {
                    let mut w: Vec<f64> = u.iter().map(|col| col.iter().map(|&(i, x)| x * y[i]).sum()).collect();
                    cholesky_solve(cap, r, &mut w);
                    for (zj, &c) in z.iter().zip(&w) {
                        y.iter_mut().zip(zj).for_each(|(a, b)| *a -= c * b);
                    }
                }
                y
            }
        }
    }
}

/// Overwrites the lower triangle of the column-major `a` with its Cholesky
/// factor. Returns false if `a` is not numerically positive definite.
fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[k * n + j] * a[k * n + j];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut v = a[j * n + i];
            for k in 0..j {
                v -= a[k * n + i] * a[k * n + j];
            }
            a[j * n + i] = v / d;
        }
    }
    true
}

/// Solves `L L^T x = b` in place.
fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= l[k * n + i] * b[k];
        }
        b[i] = v / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in i + 1..n {
            v -= l[i * n + k] * b[k];
        }
        b[i] = v / l[i * n + i];
    }
}
