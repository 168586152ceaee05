//! Convex QP `min ½ xᵀP x + qᵀx  s.t.  l ≤ A x ≤ u` by a Mehrotra
//! predictor-corrector interior-point method on a Ruiz-equilibrated copy.
//!
//! The reduced KKT matrix `[[P + δI, Aᵀ], [A, −D]]` is quasi-definite. Rows
//! are interleaved with the variables they touch so that stage-structured
//! problems give a narrow band, factored by [`BandedSym`]. A failed solve is
//! followed by an elastic feasibility problem that names the offending rows.

use super::banded::{BandedLdl, BandedSym};
use crate::error::{Error, Result};

/// Row-compressed sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMat {
    pub nrows: usize,
    pub ncols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMat {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        SparseMat { nrows, ncols, rows: vec![Vec::new(); nrows] }
    }

    /// Adds `v` at `(r, c)`, merging with an existing entry.
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        assert!(r < self.nrows && c < self.ncols);
        if let Some(e) = self.rows[r].iter_mut().find(|e| e.0 == c) {
            e.1 += v;
        } else {
            self.rows[r].push((c, v));
        }
    }

    /// Appends a row and returns its index.
    pub fn push_row(&mut self, entries: Vec<(usize, f64)>) -> usize {
        self.rows.push(Vec::new());
        self.nrows += 1;
        let r = self.nrows - 1;
        for (c, v) in entries {
            self.add(r, c, v);
        }
        r
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|row| row.iter().map(|&(c, v)| v * x[c]).sum()).collect()
    }

    pub fn tmul(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for (row, &yi) in self.rows.iter().zip(y) {
            if yi != 0.0 {
                for &(c, v) in row {
                    out[c] += v * yi;
                }
            }
        }
        out
    }

    fn scaled(&self, rs: &[f64], cs: &[f64]) -> SparseMat {
        SparseMat {
            nrows: self.nrows,
            ncols: self.ncols,
            rows: self
                .rows
                .iter()
                .zip(rs)
                .map(|(row, &r)| row.iter().map(|&(c, v)| (c, v * r * cs[c])).collect())
                .collect(),
        }
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// `P` is given in full symmetric storage (both triangles).
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub p: SparseMat,
    pub q: Vec<f64>,
    pub a: SparseMat,
    pub l: Vec<f64>,
    pub u: Vec<f64>,
}

impl QpProblem {
    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn m(&self) -> usize {
        self.l.len()
    }

    fn check(&self) -> Result<()> {
        let (n, m) = (self.n(), self.m());
        if self.p.nrows != n || self.p.ncols != n || self.a.ncols != n || self.a.nrows != m {
            return Err(Error::Domain("QP dimensions do not agree".into()));
        }
        if self.u.len() != m {
            return Err(Error::Domain("QP bound vectors differ in length".into()));
        }
        for i in 0..m {
            if self.l[i] > self.u[i] {
                return Err(Error::Infeasible(format!(
                    "row {i}: lower bound {} exceeds upper bound {}",
                    self.l[i], self.u[i]
                )));
            }
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let px = self.p.mul(x);
        0.5 * px.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            + self.q.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Unscaled primal and dual residuals of `(x, y)`.
    pub fn residuals(&self, x: &[f64], y: &[f64]) -> (f64, f64) {
        let ax = self.a.mul(x);
        let prim = ax
            .iter()
            .enumerate()
            .map(|(i, v)| (self.l[i] - v).max(v - self.u[i]).max(0.0))
            .fold(0.0, f64::max);
        let px = self.p.mul(x);
        let aty = self.a.tmul(y);
        let dual = (0..self.n()).map(|j| (px[j] + self.q[j] + aty[j]).abs()).fold(0.0, f64::max);
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return (f64::INFINITY, f64::INFINITY);
        }
        (prim, dual)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Elastic violation above which a failed solve is reported infeasible.
    pub eps_infeasible: f64,
    pub max_iter: usize,
    pub scaling_iters: usize,
    /// Static regularization of the KKT factorization.
    pub reg: f64,
    /// Iterative-refinement passes per linear solve.
    pub refine: usize,
    /// Fraction of the distance to the boundary taken per step.
    pub step_fraction: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            eps_abs: 1e-8,
            eps_rel: 1e-8,
            eps_infeasible: 1e-6,
            max_iter: 200,
            scaling_iters: 15,
            reg: 1e-10,
            refine: 3,
            step_fraction: 0.99,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Solved,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Multipliers: positive on active upper bounds, negative on lower.
    pub y: Vec<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    pub prim_res: f64,
    pub dual_res: f64,
}

/// Interleaves rows after the last variable they touch, with variables
/// ordered by `keys`.
fn kkt_order_keyed(a: &SparseMat, keys: &[(usize, usize, usize)]) -> Vec<usize> {
    let n = keys.len();
    let m = a.nrows;
    // (key, is_row, index)
    let mut items: Vec<((usize, usize, usize), bool, usize)> = Vec::with_capacity(n + m);
    for (j, k) in keys.iter().enumerate() {
        items.push((*k, false, j));
    }
    for (i, row) in a.rows.iter().enumerate() {
        let k = row.iter().map(|e| keys[e.0]).max().unwrap_or((0, 0, 0));
        items.push((k, true, i));
    }
    items.sort_by(|p, q| {
        // rows without entries go first
        let pe = p.1 && a.rows[p.2].is_empty();
        let qe = q.1 && a.rows[q.2].is_empty();
        qe.cmp(&pe).then(p.cmp(q))
    });
    let mut pos = vec![0usize; n + m];
    for (slot, (_, is_row, idx)) in items.into_iter().enumerate() {
        pos[if is_row { n + idx } else { idx }] = slot;
    }
    pos
}

fn kkt_bandwidth(p: &SparseMat, a: &SparseMat, pos: &[usize]) -> usize {
    let n = p.ncols;
    let mut bw = 0;
    for (i, row) in p.rows.iter().enumerate() {
        for &(j, _) in row {
            bw = bw.max(pos[i].abs_diff(pos[j]));
        }
    }
    for (i, row) in a.rows.iter().enumerate() {
        for &(j, _) in row {
            bw = bw.max(pos[n + i].abs_diff(pos[j]));
        }
    }
    bw
}

/// KKT assembly with per-row diagonal `row_diag`. Rows with `keep[i]`
/// false are decoupled and get `−1` on the diagonal.
fn assemble(
    p: &SparseMat,
    a: &SparseMat,
    pos: &[usize],
    bw: usize,
    var_shift: f64,
    row_diag: &[f64],
    keep: &[bool],
) -> BandedSym {
    let n = p.ncols;
    let mut k = BandedSym::zeros(n + a.nrows, bw);
    for (i, row) in p.rows.iter().enumerate() {
        for &(j, v) in row {
            if j <= i {
                k.add(pos[i], pos[j], v);
            }
        }
        k.add(pos[i], pos[i], var_shift);
    }
    for (i, row) in a.rows.iter().enumerate() {
        if keep[i] {
            for &(j, v) in row {
                k.add(pos[n + i], pos[j], v);
            }
            k.add(pos[n + i], pos[n + i], row_diag[i]);
        } else {
            k.add(pos[n + i], pos[n + i], -1.0);
        }
    }
    k
}

fn permute(pos: &[usize], v: &[f64]) -> Vec<f64> {
    let mut b = vec![0.0; v.len()];
    for (i, x) in v.iter().enumerate() {
        b[pos[i]] = *x;
    }
    b
}

fn solve_permuted(f: &BandedLdl, pos: &[usize], rhs: &[f64]) -> Vec<f64> {
    let mut b = permute(pos, rhs);
    f.solve_in_place(&mut b);
    (0..rhs.len()).map(|i| b[pos[i]]).collect()
}

/// Equilibrated copy of the problem.
struct Scaled {
    p: SparseMat,
    q: Vec<f64>,
    a: SparseMat,
    l: Vec<f64>,
    u: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
}

fn ruiz(prob: &QpProblem, iters: usize) -> Scaled {
    let (n, m) = (prob.n(), prob.m());
    let mut d = vec![1.0; n];
    let mut e = vec![1.0; m];
    let clampn = |v: f64| if v < 1e-4 { 1.0 } else { v.min(1e4) };
    for _ in 0..iters {
        let ps = prob.p.scaled(&d, &d);
        let as_ = prob.a.scaled(&e, &d);
        let mut col = vec![0.0f64; n];
        for row in ps.rows.iter().chain(as_.rows.iter()) {
            for &(c, v) in row {
                col[c] = col[c].max(v.abs());
            }
        }
        for j in 0..n {
            d[j] /= clampn(col[j]).sqrt();
        }
        for (i, row) in as_.rows.iter().enumerate() {
            let r = row.iter().fold(0.0f64, |mm, e| mm.max(e.1.abs()));
            e[i] /= clampn(r).sqrt();
        }
    }
    let p = prob.p.scaled(&d, &d);
    let q: Vec<f64> = prob.q.iter().zip(&d).map(|(a, b)| a * b).collect();
    // cost scaling from the mean column norm of P and the size of q
    let mut col = vec![0.0f64; n];
    for row in &p.rows {
        for &(c, v) in row {
            col[c] = col[c].max(v.abs());
        }
    }
    let mean = if n > 0 { col.iter().sum::<f64>() / n as f64 } else { 1.0 };
    let cs = 1.0 / clampn(mean.max(inf_norm(&q)));
    let scale_bound = |b: f64, s: f64| if b.is_finite() { b * s } else { b };
    Scaled {
        p: SparseMat {
            nrows: n,
            ncols: n,
            rows: p.rows.iter().map(|r| r.iter().map(|&(c, v)| (c, v * cs)).collect()).collect(),
        },
        q: q.iter().map(|v| v * cs).collect(),
        a: prob.a.scaled(&e, &d),
        l: prob.l.iter().zip(&e).map(|(&b, &s)| scale_bound(b, s)).collect(),
        u: prob.u.iter().zip(&e).map(|(&b, &s)| scale_bound(b, s)).collect(),
        d,
        e,
        c: cs,
    }
}

fn is_equality(l: f64, u: f64) -> bool {
    l.is_finite() && u.is_finite() && (u - l).abs() <= 1e-12 * (1.0 + l.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Row {
    Free,
    Eq,
    Ineq { lower: bool, upper: bool },
}

/// Primal-dual iterate in scaled space. Each finite inequality side has a
/// slack and a multiplier; `y` holds equality multipliers.
struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    su: Vec<f64>,
    lu: Vec<f64>,
    sl: Vec<f64>,
    ll: Vec<f64>,
}

impl Iterate {
    fn row_multipliers(&self, kinds: &[Row]) -> Vec<f64> {
        kinds
            .iter()
            .enumerate()
            .map(|(i, k)| match k {
                Row::Free => 0.0,
                Row::Eq => self.y[i],
                Row::Ineq { .. } => self.lu[i] - self.ll[i],
            })
            .collect()
    }
}

/// Residuals `r_d = Px + q + Aᵀy`, per-row primal residuals and the
/// complementarity products.
struct Residuals {
    rd: Vec<f64>,
    /// `Ax − l` on equality rows.
    re: Vec<f64>,
    /// `Ax + s_u − u`.
    ru: Vec<f64>,
    /// `−Ax + s_l + l`.
    rl: Vec<f64>,
    mu: f64,
}

fn residuals(s: &Scaled, kinds: &[Row], it: &Iterate) -> Residuals {
    let m = kinds.len();
    let ax = s.a.mul(&it.x);
    let px = s.p.mul(&it.x);
    let aty = s.a.tmul(&it.row_multipliers(kinds));
    let rd = (0..it.x.len()).map(|j| px[j] + s.q[j] + aty[j]).collect();
    let (mut re, mut ru, mut rl) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let (mut gap, mut count) = (0.0, 0usize);
    for i in 0..m {
        match kinds[i] {
            Row::Free => {}
            Row::Eq => re[i] = ax[i] - s.l[i],
            Row::Ineq { lower, upper } => {
                if upper {
                    ru[i] = ax[i] + it.su[i] - s.u[i];
                    gap += it.su[i] * it.lu[i];
                    count += 1;
                }
                if lower {
                    rl[i] = -ax[i] + it.sl[i] + s.l[i];
                    gap += it.sl[i] * it.ll[i];
                    count += 1;
                }
            }
        }
    }
    Residuals { rd, re, ru, rl, mu: if count > 0 { gap / count as f64 } else { 0.0 } }
}

struct Direction {
    dx: Vec<f64>,
    dy: Vec<f64>,
    dsu: Vec<f64>,
    dlu: Vec<f64>,
    dsl: Vec<f64>,
    dll: Vec<f64>,
}

struct Newton<'a> {
    s: &'a Scaled,
    kinds: &'a [Row],
    pos: &'a [usize],
    fact: BandedLdl,
    exact: BandedSym,
    refine: usize,
}

impl Newton<'_> {
    /// Solves the reduced Newton system for complementarity targets
    /// `rc_u = s_u λ_u − t_u` and `rc_l = s_l λ_l − t_l`.
    fn direction(&self, it: &Iterate, r: &Residuals, rcu: &[f64], rcl: &[f64]) -> Direction {
        let (n, m) = (it.x.len(), self.kinds.len());
        let mut rhs = vec![0.0; n + m];
        for j in 0..n {
            rhs[j] = -r.rd[j];
        }
        let mut w = vec![0.0; m];
        for i in 0..m {
            rhs[n + i] = match self.kinds[i] {
                Row::Free => 0.0,
                Row::Eq => -r.re[i],
                Row::Ineq { lower, upper } => {
                    let mut g = 0.0;
                    if upper {
                        w[i] += it.lu[i] / it.su[i];
                        g += (it.lu[i] * r.ru[i] - rcu[i]) / it.su[i];
                    }
                    if lower {
                        w[i] += it.ll[i] / it.sl[i];
                        g -= (it.ll[i] * r.rl[i] - rcl[i]) / it.sl[i];
                    }
                    -g / w[i]
                }
            };
        }
        let mut sol = solve_permuted(&self.fact, self.pos, &rhs);
        let target = permute(self.pos, &rhs);
        for _ in 0..self.refine {
            let kp = self.exact.mul(&permute(self.pos, &sol));
            let res: Vec<f64> = (0..n + m).map(|i| target[self.pos[i]] - kp[self.pos[i]]).collect();
            let corr = solve_permuted(&self.fact, self.pos, &res);
            for (a, b) in sol.iter_mut().zip(&corr) {
                *a += b;
            }
        }
        let dx = sol[..n].to_vec();
        let adx = self.s.a.mul(&dx);
        let mut d = Direction {
            dx,
            dy: vec![0.0; m],
            dsu: vec![0.0; m],
            dlu: vec![0.0; m],
            dsl: vec![0.0; m],
            dll: vec![0.0; m],
        };
        for i in 0..m {
            match self.kinds[i] {
                Row::Free => {}
                Row::Eq => d.dy[i] = sol[n + i],
                Row::Ineq { lower, upper } => {
                    // The multiplier step comes straight from the solve, which
                    // keeps it consistent with the stationarity block; the
                    // slack step then follows from complementarity.
                    let dy = sol[n + i];
                    let (wu, wl) = (
                        if upper { it.lu[i] / it.su[i] } else { 0.0 },
                        if lower { it.ll[i] / it.sl[i] } else { 0.0 },
                    );
                    if upper && (!lower || wu >= wl) {
                        if lower {
                            d.dsl[i] = -r.rl[i] + adx[i];
                            d.dll[i] = (-it.ll[i] * adx[i] + it.ll[i] * r.rl[i] - rcl[i]) / it.sl[i];
                        }
                        d.dlu[i] = dy + d.dll[i];
                        d.dsu[i] = (-rcu[i] - it.su[i] * d.dlu[i]) / it.lu[i];
                    } else {
                        if upper {
                            d.dsu[i] = -r.ru[i] - adx[i];
                            d.dlu[i] = (it.lu[i] * adx[i] + it.lu[i] * r.ru[i] - rcu[i]) / it.su[i];
                        }
                        d.dll[i] = d.dlu[i] - dy;
                        d.dsl[i] = (-rcl[i] - it.sl[i] * d.dll[i]) / it.ll[i];
                    }
                }
            }
        }
        d
    }
}

/// Largest step in `(0, 1]` keeping all slacks and multipliers positive.
fn max_step(kinds: &[Row], it: &Iterate, d: &Direction) -> f64 {
    let mut a = 1.0f64;
    let mut limit = |v: f64, dv: f64| {
        if dv < 0.0 {
            a = a.min(-v / dv);
        }
    };
    for (i, k) in kinds.iter().enumerate() {
        if let Row::Ineq { lower, upper } = k {
            if *upper {
                limit(it.su[i], d.dsu[i]);
                limit(it.lu[i], d.dlu[i]);
            }
            if *lower {
                limit(it.sl[i], d.dsl[i]);
                limit(it.ll[i], d.dll[i]);
            }
        }
    }
    a
}

fn unscale(s: &Scaled, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (
        x.iter().zip(&s.d).map(|(a, b)| a * b).collect(),
        y.iter().zip(&s.e).map(|(a, b)| a * b / s.c).collect(),
    )
}

fn interior_point(prob: &QpProblem, st: &QpSettings, keys: &[(usize, usize, usize)], warm: Option<&[f64]>) -> Result<QpSolution> {
    let (n, m) = (prob.n(), prob.m());
    let s = ruiz(prob, st.scaling_iters);
    let kinds: Vec<Row> = (0..m)
        .map(|i| {
            let (l, u) = (s.l[i], s.u[i]);
            if is_equality(l, u) {
                Row::Eq
            } else if l.is_finite() || u.is_finite() {
                Row::Ineq { lower: l.is_finite(), upper: u.is_finite() }
            } else {
                Row::Free
            }
        })
        .collect();
    let keep: Vec<bool> = kinds.iter().map(|k| *k != Row::Free).collect();
    let pos = kkt_order_keyed(&s.a, keys);
    let bw = kkt_bandwidth(&s.p, &s.a, &pos);

    let x: Vec<f64> = match warm {
        Some(w) => w.iter().zip(&s.d).map(|(a, b)| a / b).collect(),
        None => vec![0.0; n],
    };
    let ax = s.a.mul(&x);
    let mut it = Iterate {
        x,
        y: vec![0.0; m],
        su: (0..m).map(|i| (s.u[i] - ax[i]).max(1.0)).collect(),
        lu: (0..m).map(|i| if s.u[i].is_finite() { 1.0 } else { 0.0 }).collect(),
        sl: (0..m).map(|i| (ax[i] - s.l[i]).max(1.0)).collect(),
        ll: (0..m).map(|i| if s.l[i].is_finite() { 1.0 } else { 0.0 }).collect(),
    };

    let mut stalled = false;
    let mut small_steps = 0;
    let mut iter = 0;
    let mut last;
    loop {
        let r = residuals(&s, &kinds, &it);
        let (xu, yu) = unscale(&s, &it.x, &it.row_multipliers(&kinds));
        let (ok, prim, dual) = converged(prob, &xu, &yu, r.mu / s.c, st);
        last = (prim, dual);
        if ok {
            return Ok(QpSolution { x: xu, y: yu, status: QpStatus::Solved, iterations: iter, prim_res: prim, dual_res: dual });
        }
        if iter >= st.max_iter || stalled {
            break;
        }
        iter += 1;

        let mut diag = vec![0.0; m];
        let mut exact_diag = vec![0.0; m];
        for i in 0..m {
            match kinds[i] {
                Row::Free => {}
                Row::Eq => diag[i] = -st.reg,
                Row::Ineq { lower, upper } => {
                    let mut w = 0.0;
                    if upper {
                        w += it.lu[i] / it.su[i];
                    }
                    if lower {
                        w += it.ll[i] / it.sl[i];
                    }
                    diag[i] = -1.0 / w.clamp(1e-20, 1e20);
                    exact_diag[i] = diag[i];
                }
            }
        }
        let fact = match assemble(&s.p, &s.a, &pos, bw, st.reg, &diag, &keep).factor() {
            Ok(f) => f,
            Err(_) => {
                stalled = true;
                continue;
            }
        };
        let exact = assemble(&s.p, &s.a, &pos, bw, 0.0, &exact_diag, &keep);
        let newton = Newton { s: &s, kinds: &kinds, pos: &pos, fact, exact, refine: st.refine };

        // predictor
        let rcu: Vec<f64> = (0..m).map(|i| it.su[i] * it.lu[i]).collect();
        let rcl: Vec<f64> = (0..m).map(|i| it.sl[i] * it.ll[i]).collect();
        let aff = newton.direction(&it, &r, &rcu, &rcl);
        let a_aff = max_step(&kinds, &it, &aff);
        let mut mu_aff = 0.0;
        let mut count = 0usize;
        for (i, k) in kinds.iter().enumerate() {
            if let Row::Ineq { lower, upper } = k {
                if *upper {
                    mu_aff += (it.su[i] + a_aff * aff.dsu[i]) * (it.lu[i] + a_aff * aff.dlu[i]);
                    count += 1;
                }
                if *lower {
                    mu_aff += (it.sl[i] + a_aff * aff.dsl[i]) * (it.ll[i] + a_aff * aff.dll[i]);
                    count += 1;
                }
            }
        }
        let sigma = if count > 0 && r.mu > 0.0 { (mu_aff / count as f64 / r.mu).clamp(0.0, 1.0).powi(3) } else { 0.0 };

        // corrector
        let rcu: Vec<f64> =
            (0..m).map(|i| it.su[i] * it.lu[i] + aff.dsu[i] * aff.dlu[i] - sigma * r.mu).collect();
        let rcl: Vec<f64> =
            (0..m).map(|i| it.sl[i] * it.ll[i] + aff.dsl[i] * aff.dll[i] - sigma * r.mu).collect();
        let d = newton.direction(&it, &r, &rcu, &rcl);
        if d.dx.iter().chain(&d.dy).chain(&d.dlu).chain(&d.dll).any(|v| !v.is_finite()) {
            stalled = true;
            continue;
        }
        let alpha = (st.step_fraction * max_step(&kinds, &it, &d)).min(1.0);
        for j in 0..n {
            it.x[j] += alpha * d.dx[j];
        }
        for i in 0..m {
            it.y[i] += alpha * d.dy[i];
            it.su[i] += alpha * d.dsu[i];
            it.lu[i] += alpha * d.dlu[i];
            it.sl[i] += alpha * d.dsl[i];
            it.ll[i] += alpha * d.dll[i];
        }
        small_steps = if alpha < 1e-8 { small_steps + 1 } else { 0 };
        stalled = small_steps >= 5;
    }
    let (xu, yu) = unscale(&s, &it.x, &it.row_multipliers(&kinds));
    Ok(QpSolution { x: xu, y: yu, status: QpStatus::MaxIterations, iterations: iter, prim_res: last.0, dual_res: last.1 })
}

fn converged(prob: &QpProblem, x: &[f64], y: &[f64], gap: f64, st: &QpSettings) -> (bool, f64, f64) {
    let (prim, dual) = prob.residuals(x, y);
    let ax = prob.a.mul(x);
    let px = prob.p.mul(x);
    let aty = prob.a.tmul(y);
    let zn = ax
        .iter()
        .enumerate()
        .map(|(i, v)| v.clamp(prob.l[i], prob.u[i]).abs())
        .fold(0.0, f64::max);
    let ep = st.eps_abs + st.eps_rel * inf_norm(&ax).max(zn);
    let ed = st.eps_abs + st.eps_rel * inf_norm(&px).max(inf_norm(&aty)).max(inf_norm(&prob.q));
    let eg = st.eps_abs + st.eps_rel * inf_norm(&prob.q).max(1.0);
    (prim <= ep && dual <= ed && gap <= eg, prim, dual)
}

/// Smallest violation `v` with `l ≤ Ax + v ≤ u`, from the elastic problem
/// `min ½ε|x|² + ½|v|²`.
fn elastic_violation(prob: &QpProblem, st: &QpSettings) -> Result<Option<Vec<f64>>> {
    let (n, m) = (prob.n(), prob.m());
    let mut p = SparseMat::new(n + m, n + m);
    for j in 0..n {
        p.add(j, j, 1e-8);
    }
    for i in 0..m {
        p.add(n + i, n + i, 1.0);
    }
    let mut a = prob.a.clone();
    a.ncols = n + m;
    for (i, row) in a.rows.iter_mut().enumerate() {
        row.push((n + i, 1.0));
    }
    // each v_i sits next to the last variable of its row
    let mut keys: Vec<(usize, usize, usize)> = (0..n).map(|j| (j, 0, 0)).collect();
    for (i, row) in prob.a.rows.iter().enumerate() {
        keys.push((row.iter().map(|e| e.0).max().unwrap_or(0), 1, i));
    }
    let el = QpProblem { p, q: vec![0.0; n + m], a, l: prob.l.clone(), u: prob.u.clone() };
    let run = interior_point(&el, &QpSettings { eps_abs: 1e-10, eps_rel: 1e-10, ..*st }, &keys, None)?;
    if run.status != QpStatus::Solved {
        return Ok(None);
    }
    Ok(Some(run.x[n..].to_vec()))
}

/// Solves the QP. `warm` seeds the primal iterate.
pub fn solve_qp(prob: &QpProblem, st: &QpSettings, warm: Option<&[f64]>) -> Result<QpSolution> {
    prob.check()?;
    let keys: Vec<_> = (0..prob.n()).map(|j| (j, 0, 0)).collect();
    let run = interior_point(prob, st, &keys, warm)?;
    if run.status == QpStatus::Solved {
        return Ok(run);
    }
    if let Some(v) = elastic_violation(prob, st)? {
        let scale = 1.0
            + prob.l.iter().chain(&prob.u).filter(|b| b.is_finite()).fold(0.0f64, |mm, b| mm.max(b.abs()));
        let nv = inf_norm(&v);
        if nv > st.eps_infeasible * scale {
            let mut rows: Vec<usize> = (0..v.len()).filter(|&i| v[i].abs() > 1e-3 * nv).collect();
            rows.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()));
            rows.truncate(12);
            return Err(Error::Infeasible(format!(
                "QP primal infeasible (violation {nv:.3e}); rows involved: {rows:?}"
            )));
        }
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn diag(n: usize, v: &[f64]) -> SparseMat {
        let mut p = SparseMat::new(n, n);
        for (i, x) in v.iter().enumerate() {
            p.add(i, i, *x);
        }
        p
    }

    #[test]
    fn box_constrained_diagonal() {
        // min ½|x|² − [3, −3]ᵀx, −1 ≤ x ≤ 1  → x = [1, −1]
        let mut a = SparseMat::new(2, 2);
        a.add(0, 0, 1.0);
        a.add(1, 1, 1.0);
        let prob = QpProblem { p: diag(2, &[1.0, 1.0]), q: vec![-3.0, 3.0], a, l: vec![-1.0; 2], u: vec![1.0; 2] };
        let s = solve_qp(&prob, &QpSettings::default(), None).unwrap();
        assert_eq!(s.status, QpStatus::Solved);
        assert!((s.x[0] - 1.0).abs() < 1e-8 && (s.x[1] + 1.0).abs() < 1e-8, "{:?}", s.x);
        assert!((s.y[0] - 2.0).abs() < 1e-6 && (s.y[1] + 2.0).abs() < 1e-6, "{:?}", s.y);
    }

    #[test]
    fn equality_constrained_matches_kkt() {
        // min x² + 2y² s.t. x + y = 1  → x = 2/3, y = 1/3
        let mut a = SparseMat::new(1, 2);
        a.add(0, 0, 1.0);
        a.add(0, 1, 1.0);
        let prob = QpProblem { p: diag(2, &[2.0, 4.0]), q: vec![0.0; 2], a, l: vec![1.0], u: vec![1.0] };
        let s = solve_qp(&prob, &QpSettings::default(), None).unwrap();
        assert!((s.x[0] - 2.0 / 3.0).abs() < 1e-8 && (s.x[1] - 1.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn infeasible_rows_are_reported() {
        // x ≥ 1 and x ≤ −1 through two separate rows
        let mut a = SparseMat::new(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 0, 1.0);
        let prob = QpProblem {
            p: diag(1, &[1.0]),
            q: vec![0.0],
            a,
            l: vec![1.0, f64::NEG_INFINITY],
            u: vec![f64::INFINITY, -1.0],
        };
        match solve_qp(&prob, &QpSettings::default(), None) {
            Err(Error::Infeasible(msg)) => assert!(msg.contains('0') && msg.contains('1'), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    /// Enumerates active sets of a small strictly convex QP with `Ax ≤ b`.
    fn brute_force(p: &DMatrix<f64>, q: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
        let (n, m) = (q.len(), b.len());
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << m) {
            let act: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
            if act.len() > n {
                continue;
            }
            let k = act.len();
            let mut kkt = DMatrix::zeros(n + k, n + k);
            kkt.view_mut((0, 0), (n, n)).copy_from(p);
            let mut rhs = DVector::zeros(n + k);
            rhs.rows_mut(0, n).copy_from(&(-q));
            for (r, &i) in act.iter().enumerate() {
                for j in 0..n {
                    kkt[(n + r, j)] = a[(i, j)];
                    kkt[(j, n + r)] = a[(i, j)];
                }
                rhs[n + r] = b[i];
            }
            if let Some(sol) = kkt.lu().solve(&rhs) {
                let x = sol.rows(0, n).into_owned();
                if (a * &x - b).iter().all(|v| *v <= 1e-9) && sol.rows(n, k).iter().all(|v| *v >= -1e-9) {
                    best = best.min(0.5 * x.dot(&(p * &x)) + q.dot(&x));
                }
            }
        }
        best
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn agrees_with_active_set_enumeration(seed in 0u64..10_000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (n, m) = (3, 5);
            let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let p = &g * g.transpose() + DMatrix::identity(n, n) * 0.1;
            let q = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
            // the origin is strictly feasible
            let b = DVector::from_fn(m, |_, _| rng.random_range(0.1..1.0));
            let mut ps = SparseMat::new(n, n);
            let mut asp = SparseMat::new(m, n);
            for i in 0..n { for j in 0..n { ps.add(i, j, p[(i, j)]); } }
            for i in 0..m { for j in 0..n { asp.add(i, j, a[(i, j)]); } }
            let prob = QpProblem { p: ps, q: q.as_slice().to_vec(), a: asp, l: vec![f64::NEG_INFINITY; m], u: b.as_slice().to_vec() };
            let s = solve_qp(&prob, &QpSettings::default(), None).unwrap();
            prop_assert_eq!(s.status, QpStatus::Solved);
            let oracle = brute_force(&p, &q, &a, &b);
            prop_assert!((prob.objective(&s.x) - oracle).abs() < 1e-6 * (1.0 + oracle.abs()));
        }
    }
}
