//! Small dense semidefinite programs by a primal log-barrier method.
//!
//! Problem form: minimize `cᵀz` subject to `F_i(z) = F_i0 + Σ_j z_j F_ij ⪯ −m_i I`
//! for each block `i` (margin `m_i ≥ 0`) and optional equalities `G z = h`.
//! Equalities are eliminated through a null-space basis; a phase-I problem
//! finds a strictly feasible start.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Affine symmetric block `F0 + Σ z_j F_j`, required to be `⪯ −margin·I`.
#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub name: String,
    pub f0: DMatrix<f64>,
    pub fj: Vec<DMatrix<f64>>,
    pub margin: f64,
}

impl LmiBlock {
    pub fn new(name: impl Into<String>, f0: DMatrix<f64>, fj: Vec<DMatrix<f64>>, margin: f64) -> Self {
        LmiBlock { name: name.into(), f0, fj, margin }
    }

    pub fn dim(&self) -> usize {
        self.f0.nrows()
    }

    pub fn eval(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut f = self.f0.clone();
        for (j, fj) in self.fj.iter().enumerate() {
            if z[j] != 0.0 {
                f += fj * z[j];
            }
        }
        f
    }
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub c: DVector<f64>,
    pub blocks: Vec<LmiBlock>,
    pub eq_a: Option<DMatrix<f64>>,
    pub eq_b: Option<DVector<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct SdpOptions {
    /// Target duality-gap bound `Σ dim / t`, relative to `max(1, |cᵀz|)`.
    pub gap_tol: f64,
    pub mu: f64,
    pub max_newton: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions { gap_tol: 1e-10, mu: 20.0, max_newton: 5000 }
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub z: DVector<f64>,
    pub objective: f64,
    /// Largest eigenvalue of each `F_i(z)` (without margin).
    pub max_eigs: Vec<f64>,
    pub newton_steps: usize,
}

fn max_eig(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().max()
}

/// Reduced problem in the free coordinates `y`, with `z = z0 + N y`.
struct Reduced {
    z0: DVector<f64>,
    basis: DMatrix<f64>,
    c: DVector<f64>,
    blocks: Vec<LmiBlock>,
}

fn reduce(p: &SdpProblem) -> Result<Reduced> {
    let m = p.c.len();
    for b in &p.blocks {
        if b.fj.len() != m {
            return Err(Error::Domain(format!(
                "block {} has {} coefficient matrices for {m} variables",
                b.name,
                b.fj.len()
            )));
        }
    }
    let (z0, basis) = match (&p.eq_a, &p.eq_b) {
        (Some(a), Some(b)) if a.nrows() > 0 => {
            let svd = a.clone().svd(true, true);
            let smax = svd.singular_values.max();
            let rank = svd.singular_values.iter().filter(|&&s| s > 1e-12 * smax.max(1e-300)).count();
            let z0 = svd
                .solve(b, 1e-12 * smax)
                .map_err(|e| Error::Numerical(format!("equality constraints: {e}")))?;
            if (a * &z0 - b).norm() > 1e-9 * (1.0 + b.norm()) {
                return Err(Error::Infeasible("inconsistent equality constraints".into()));
            }
            // null space from the full right singular basis of the padded matrix
            let mut padded = DMatrix::zeros(m.max(a.nrows()), m);
            padded.view_mut((0, 0), (a.nrows(), m)).copy_from(a);
            let full = padded.svd(false, true);
            let vt = full.v_t.ok_or_else(|| Error::Numerical("SVD failed".into()))?;
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&i, &j| full.singular_values[j].total_cmp(&full.singular_values[i]));
            let null: Vec<usize> = order[rank..].to_vec();
            let basis = DMatrix::from_fn(m, null.len(), |r, c| vt[(null[c], r)]);
            (z0, basis)
        }
        _ => (DVector::zeros(m), DMatrix::identity(m, m)),
    };
    let k = basis.ncols();
    let blocks = p
        .blocks
        .iter()
        .map(|b| {
            let f0 = b.eval(&z0);
            let fj = (0..k)
                .map(|c| {
                    let mut acc = DMatrix::zeros(b.dim(), b.dim());
                    for (j, fj) in b.fj.iter().enumerate() {
                        let w = basis[(j, c)];
                        if w != 0.0 {
                            acc += fj * w;
                        }
                    }
                    acc
                })
                .collect();
            LmiBlock { name: b.name.clone(), f0, fj, margin: b.margin }
        })
        .collect();
    Ok(Reduced { c: basis.transpose() * &p.c, z0, basis, blocks })
}

/// Inverses of `S_i = −F_i(y) − m_i I`, or `None` if some block is not
/// strictly inside.
fn slack_inverses(blocks: &[LmiBlock], y: &DVector<f64>) -> Option<(Vec<DMatrix<f64>>, f64)> {
    let mut invs = Vec::with_capacity(blocks.len());
    let mut logdet = 0.0;
    for b in blocks {
        let mut s = -b.eval(y);
        for d in 0..b.dim() {
            s[(d, d)] -= b.margin;
        }
        let s = (&s + s.transpose()) * 0.5;
        let ch = s.cholesky()?;
        logdet += 2.0 * ch.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        invs.push(ch.inverse());
    }
    Some((invs, logdet))
}

fn barrier_value(blocks: &[LmiBlock], c: &DVector<f64>, t: f64, y: &DVector<f64>) -> Option<f64> {
    let (_, logdet) = slack_inverses(blocks, y)?;
    Some(t * c.dot(y) - logdet)
}

/// Gradient and Hessian of `−Σ log det S_i(y)`.
fn barrier_derivatives(blocks: &[LmiBlock], y: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let k = y.len();
    let (invs, _) = slack_inverses(blocks, y)
        .ok_or_else(|| Error::Numerical("iterate left the feasible region".into()))?;
    let mut g = DVector::zeros(k);
    let mut h = DMatrix::zeros(k, k);
    for (b, sinv) in blocks.iter().zip(&invs) {
        let prods: Vec<DMatrix<f64>> = b.fj.iter().map(|fj| sinv * fj).collect();
        for a in 0..k {
            g[a] += prods[a].trace();
            for bb in 0..=a {
                let v = (prods[a].component_mul(&prods[bb].transpose())).sum();
                h[(a, bb)] += v;
                if a != bb {
                    h[(bb, a)] += v;
                }
            }
        }
    }
    Ok((g, h))
}

/// Solves `H x = r` after symmetric diagonal scaling, with a tiny ridge.
fn scaled_solve(h: &DMatrix<f64>, r: &DVector<f64>) -> Result<DVector<f64>> {
    let n = h.nrows();
    let d = DVector::from_fn(n, |i, _| {
        let v = h[(i, i)];
        if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 }
    });
    let mut hs = DMatrix::from_fn(n, n, |i, j| h[(i, j)] * d[i] * d[j]);
    for i in 0..n {
        hs[(i, i)] += 1e-14;
    }
    let rs = r.component_mul(&d);
    let xs = match hs.clone().cholesky() {
        Some(ch) => ch.solve(&rs),
        None => hs.lu().solve(&rs).ok_or_else(|| Error::Numerical("singular barrier Hessian".into()))?,
    };
    Ok(xs.component_mul(&d))
}

/// Newton centering of `t cᵀy − Σ log det S_i(y)`. When `stop` returns
/// true for an iterate the centering ends early.
fn center(
    blocks: &[LmiBlock],
    c: &DVector<f64>,
    t: f64,
    y: &mut DVector<f64>,
    budget: &mut usize,
    stop: &dyn Fn(&DVector<f64>) -> bool,
) -> Result<bool> {
    loop {
        if stop(y) {
            return Ok(true);
        }
        if *budget == 0 {
            return Err(Error::NotConverged("SDP Newton iteration budget exhausted".into()));
        }
        *budget -= 1;
        let (gb, h) = barrier_derivatives(blocks, y)?;
        let g = c * t + gb;
        let step = -scaled_solve(&h, &g)?;
        let dec2 = -g.dot(&step);
        if !dec2.is_finite() {
            return Err(Error::Numerical("non-finite Newton decrement".into()));
        }
        if dec2 < 1e-10 {
            return Ok(false);
        }
        let f0 = barrier_value(blocks, c, t, y).unwrap_or(f64::INFINITY);
        // damped Newton phase for self-concordant barriers
        let lam = dec2.sqrt();
        let mut s = if lam > 0.25 { 1.0 / (1.0 + lam) } else { 1.0 };
        loop {
            let trial = &*y + &step * s;
            if let Some(fv) = barrier_value(blocks, c, t, &trial) {
                if fv <= f0 - 0.25 * s * dec2 {
                    if (&step * s).norm() <= 1e-14 * (1.0 + y.norm()) {
                        // step below rounding level
                        return Ok(false);
                    }
                    *y = trial;
                    break;
                }
            }
            s *= 0.5;
            if s < 1e-16 {
                // no progress possible at this precision
                return Ok(false);
            }
        }
    }
}

/// Phase I: find `y` with every block strictly inside its margin.
fn phase_one(r: &Reduced, opts: &SdpOptions, budget: &mut usize) -> Result<DVector<f64>> {
    let k = r.c.len();
    let y0 = DVector::zeros(k);
    let inside = |y: &DVector<f64>| slack_inverses(&r.blocks, y).is_some();
    if inside(&y0) {
        return Ok(y0);
    }
    // variables (y, s): F_i(y) + m_i I − s I ⪯ 0
    let worst = r
        .blocks
        .iter()
        .map(|b| max_eig(&b.eval(&y0)) + b.margin)
        .fold(f64::NEG_INFINITY, f64::max);
    let blocks: Vec<LmiBlock> = r
        .blocks
        .iter()
        .map(|b| {
            let n = b.dim();
            let mut f0 = b.f0.clone();
            for d in 0..n {
                f0[(d, d)] += b.margin;
            }
            let mut fj = b.fj.clone();
            fj.push(-DMatrix::identity(n, n));
            LmiBlock { name: b.name.clone(), f0, fj, margin: 0.0 }
        })
        .collect();
    // a box on y and a floor on s keep the auxiliary problem bounded
    let radius = 1e8;
    let mut blocks = blocks;
    for j in 0..=k {
        for sign in [1.0, -1.0] {
            if j == k && sign > 0.0 {
                continue;
            }
            let mut fj = vec![DMatrix::zeros(1, 1); k + 1];
            fj[j][(0, 0)] = sign;
            let bound = if j == k { 1.0 } else { radius };
            blocks.push(LmiBlock::new("phase1:box", DMatrix::from_element(1, 1, -bound), fj, 0.0));
        }
    }
    let mut c = DVector::zeros(k + 1);
    c[k] = 1.0;
    let mut y = DVector::zeros(k + 1);
    y[k] = worst.abs() + worst + 1.0;
    let total: usize = blocks.iter().map(|b| b.dim()).sum();
    let mut t = 1.0;
    let stop = |v: &DVector<f64>| {
        let yy = v.rows(0, k).into_owned();
        inside(&yy)
    };
    loop {
        if center(&blocks, &c, t, &mut y, budget, &stop)? {
            return Ok(y.rows(0, k).into_owned());
        }
        if total as f64 / t < 1e-13 * y[k].abs().max(1.0) {
            return Err(Error::Infeasible(format!(
                "no strictly feasible point (phase-I optimum {:.3e} ≥ 0)",
                y[k]
            )));
        }
        if y[k] > 0.0 && total as f64 / t < 1e-3 * y[k] {
            // the phase-I optimum is certainly positive
            return Err(Error::Infeasible(format!(
                "no strictly feasible point (phase-I optimum ≥ {:.3e})",
                y[k] - total as f64 / t
            )));
        }
        t *= opts.mu;
    }
}

/// Barrier weight whose central-path gradient condition is best met at `y`.
fn initial_t(r: &Reduced, y: &DVector<f64>, total: f64) -> Result<f64> {
    let floor = total / r.c.dot(y).abs().max(1.0);
    if r.c.norm() == 0.0 {
        return Ok(floor);
    }
    let (g, h) = barrier_derivatives(&r.blocks, y)?;
    let Ok(hc) = scaled_solve(&h, &r.c) else { return Ok(floor) };
    let t = -g.dot(&hc) / r.c.dot(&hc);
    Ok(if t.is_finite() && t > floor { t } else { floor })
}

pub fn sdp_solve(p: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution> {
    let r = reduce(p)?;
    let mut budget = opts.max_newton;
    let mut y = phase_one(&r, opts, &mut budget)?;
    let total: usize = r.blocks.iter().map(|b| b.dim()).sum();
    let never = |_: &DVector<f64>| false;
    let mut t = initial_t(&r, &y, total as f64)?;
    loop {
        center(&r.blocks, &r.c, t, &mut y, &mut budget, &never)?;
        let obj = r.c.dot(&y);
        if total as f64 / t <= opts.gap_tol * obj.abs().max(1.0) {
            break;
        }
        t *= opts.mu;
    }
    let z = &r.z0 + &r.basis * &y;
    let max_eigs = p.blocks.iter().map(|b| max_eig(&b.eval(&z))).collect();
    Ok(SdpSolution {
        objective: p.c.dot(&z),
        z,
        max_eigs,
        newton_steps: opts.max_newton - budget,
    })
}
