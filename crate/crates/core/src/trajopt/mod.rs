//! Offline optimal opening maneuver by direct multiple shooting.
//!
//! The plant is augmented with the converter voltage as a fourth state,
//! `x = [i_a, θ_m, ω_m, u]`, driven by its rate `v = u̇`. Each shooting
//! interval holds `v` and the soft-constraint slack `ε` constant and is
//! integrated with RK4. The resulting NLP is solved by SQP with the
//! Gauss-Newton Hessian of the least-squares cost, an interior-point QP
//! kernel and an ℓ1 merit line search.

pub mod banded;
pub mod qp;

use std::io::Write;

use nalgebra::{Matrix4, SMatrix, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::drive::DriveParams;
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::plant::{dynamics, dynamics_jacobian, PlantParams};
use qp::{solve_qp, QpProblem, QpSettings, QpStatus, SparseMat};

/// Number of rows of `ψ`.
pub const PSI_ROWS: usize = 6;
/// Rows of `ψ` imposed at the final node (input band and current cap).
pub const TERMINAL_PSI_ROWS: [usize; 3] = [0, 1, 3];
/// Largest `h R_a / L_a` accepted for the shooting integrator (RK4 is
/// stable on the negative real axis up to about 2.785).
pub const RK4_STEP_LIMIT: f64 = 2.5;
/// Fraction of `i_aM` used by the soft lower current bound.
pub const SOFT_CURRENT_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub max_iter: usize,
    pub kkt_tol: f64,
    pub qp_tol: f64,
    /// Largest shooting defect accepted at convergence.
    pub defect_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { max_iter: 200, kkt_tol: 1e-6, qp_tol: 1e-8, defect_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcpConfig {
    pub t0: f64,
    pub tf: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T_s")]
    pub t_s: f64,
    pub theta0: f64,
    pub thetaf: f64,
    /// Armature current at `t0`; the barrier itself starts at rest.
    pub i_a0: f64,
    /// Stage weights on `[i_a, θ − θ_f, v, ε]`.
    #[serde(rename = "W")]
    pub w: [f64; 4],
    /// Terminal weights on `[i_a, θ − θ_f]`.
    #[serde(rename = "W_f")]
    pub w_f: [f64; 2],
    #[serde(rename = "i_aM")]
    pub i_a_max: f64,
    /// Input-band tightening as a fraction of `ū_M − ū_m`.
    pub margin: f64,
    /// RK4 steps per shooting interval.
    pub substeps: usize,
    pub solver: SolverSettings,
}

impl Default for OcpConfig {
    fn default() -> Self {
        OcpConfig {
            t0: 0.0,
            tf: 5.0,
            n: 500,
            t_s: 0.01,
            theta0: 0.0,
            thetaf: std::f64::consts::FRAC_PI_2,
            i_a0: 0.0,
            w: [1e-1, 1e2, 1e-3, 1e7],
            w_f: [1e-1, 1e2],
            i_a_max: 12.0,
            margin: 0.05,
            substeps: 25,
            solver: SolverSettings::default(),
        }
    }
}

impl OcpConfig {
    /// Default task with `n` intervals over the same horizon and the same
    /// RK4 step length.
    pub fn with_intervals(n: usize) -> Self {
        let d = OcpConfig::default();
        let t_s = (d.tf - d.t0) / n as f64;
        let h = d.t_s / d.substeps as f64;
        OcpConfig { n, t_s, substeps: ((t_s / h).round() as usize).max(1), ..d }
    }

    /// Rejects RK4 steps beyond the stability limit of the electrical pole.
    pub fn check_step(&self, p: &PlantParams) -> Result<()> {
        let h = self.t_s / self.substeps as f64;
        let z = h * p.motor.r_a / p.motor.l_a;
        if z > RK4_STEP_LIMIT {
            return Err(Error::Config(format!(
                "RK4 step {h} s gives h·R_a/L_a = {z:.3}, above {RK4_STEP_LIMIT}; raise substeps"
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let horizon = self.tf - self.t0;
        if self.n == 0 || !(self.t_s > 0.0) || !(horizon > 0.0) {
            return Err(Error::Config("need N ≥ 1, T_s > 0 and tf > t0".into()));
        }
        if (self.n as f64 * self.t_s - horizon).abs() > 1e-9 * horizon.max(1.0) {
            return Err(Error::Config(format!(
                "N·T_s = {} does not match tf − t0 = {horizon}",
                self.n as f64 * self.t_s
            )));
        }
        if self.w.iter().chain(&self.w_f).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("weights must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.margin) {
            return Err(Error::Config(format!("margin {} outside [0, 0.5)", self.margin)));
        }
        if !(self.i_a_max > 0.0) || self.substeps == 0 {
            return Err(Error::Config("need i_aM > 0 and at least one RK4 step".into()));
        }
        let s = &self.solver;
        if s.max_iter == 0 || !(s.kkt_tol > 0.0 && s.qp_tol > 0.0 && s.defect_tol > 0.0) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        if ![self.t0, self.tf, self.theta0, self.thetaf, self.i_a0].iter().all(|v| v.is_finite()) {
            return Err(Error::Config("non-finite times or angles".into()));
        }
        Ok(())
    }
}

/// Stage and terminal cost evaluated at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcpCost {
    pub stage: f64,
    pub terminal: f64,
}

/// `h(x, v, ε) = [i_a, θ − θ_f, v, ε]` with `θ = N_g θ_m`.
pub fn stage_residual(x: &[f64; 4], v: f64, eps: f64, cfg: &OcpConfig, n_g: f64) -> [f64; 4] {
    [x[0], n_g * x[1] - cfg.thetaf, v, eps]
}

pub fn ocp_cost(x: &[f64; 4], v: f64, eps: f64, cfg: &OcpConfig, n_g: f64) -> OcpCost {
    let h = stage_residual(x, v, eps, cfg, n_g);
    let stage = (0..4).map(|i| cfg.w[i] * h[i] * h[i]).sum();
    let terminal = cfg.w_f[0] * h[0] * h[0] + cfg.w_f[1] * h[1] * h[1];
    OcpCost { stage, terminal }
}

/// Tightened input band `[ū_m + μ, ū_M − μ]` at back-EMF `e_a` and its
/// slopes in `e_a`. The back-EMF is clamped to the converter's domain,
/// where the slopes vanish.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputBand {
    pub lo: f64,
    pub hi: f64,
    pub dlo: f64,
    pub dhi: f64,
}

pub fn input_band(drv: &DriveParams, e_a: f64, margin: f64) -> Result<InputBand> {
    let clamped = drv.clamp_bemf(e_a);
    let ext = drv.duty_extrema(clamped)?;
    let mu = margin * ext.range();
    // dū_m/de_a = 1 − δ_m and dū_M/de_a = δ_m
    let (dm, inside) = (ext.delta_min, clamped == e_a);
    let dmu = margin * (2.0 * dm - 1.0);
    let (dlo, dhi) = if inside { (1.0 - dm + dmu, dm - dmu) } else { (0.0, 0.0) };
    Ok(InputBand { lo: ext.u_min + mu, hi: ext.u_max - mu, dlo, dhi })
}

/// `ψ(x, u, ε)`; feasible iff every row is `≤ 0`. `x[3]` is the voltage `u`.
pub fn ocp_constraints(
    x: &[f64; 4],
    eps: f64,
    e_a: f64,
    drv: &DriveParams,
    cfg: &OcpConfig,
) -> Result<[f64; PSI_ROWS]> {
    let band = input_band(drv, e_a, cfg.margin)?;
    let im = cfg.i_a_max;
    let soft = SOFT_CURRENT_FRACTION * im;
    Ok([
        band.lo - x[3],
        x[3] - band.hi,
        soft - eps - x[0],
        x[0] - 0.5 * im,
        -eps,
        eps - soft,
    ])
}

fn augmented_rhs(p: &PlantParams, x: &Vector4<f64>, v: f64) -> Result<Vector4<f64>> {
    let f = dynamics(&Vector3::new(x[0], x[1], x[2]), x[3], p)?;
    Ok(Vector4::new(f[0], f[1], f[2], v))
}

fn augmented_jacobian(p: &PlantParams, x: &Vector4<f64>) -> Result<Matrix4<f64>> {
    let (a, b) = dynamics_jacobian(&Vector3::new(x[0], x[1], x[2]), p)?;
    let mut j = Matrix4::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&a);
    j.fixed_view_mut::<3, 1>(0, 3).copy_from(&b);
    Ok(j)
}

/// Integrates one shooting interval and returns the end state with its
/// sensitivity to `[x (4), v]`, differentiated through the RK4 scheme.
pub fn shoot(
    p: &PlantParams,
    x: &[f64; 4],
    v: f64,
    t_s: f64,
    substeps: usize,
) -> Result<(Vector4<f64>, SMatrix<f64, 4, 5>)> {
    let h = t_s / substeps as f64;
    let mut xs = Vector4::from_column_slice(x);
    let mut s = SMatrix::<f64, 4, 5>::zeros();
    s.fixed_view_mut::<4, 4>(0, 0).fill_with_identity();
    let mut bv = SMatrix::<f64, 4, 5>::zeros();
    bv[(3, 4)] = 1.0;
    for _ in 0..substeps {
        let k1 = augmented_rhs(p, &xs, v)?;
        let d1 = augmented_jacobian(p, &xs)? * s + bv;
        let x2 = xs + k1 * (0.5 * h);
        let s2 = s + d1 * (0.5 * h);
        let k2 = augmented_rhs(p, &x2, v)?;
        let d2 = augmented_jacobian(p, &x2)? * s2 + bv;
        let x3 = xs + k2 * (0.5 * h);
        let s3 = s + d2 * (0.5 * h);
        let k3 = augmented_rhs(p, &x3, v)?;
        let d3 = augmented_jacobian(p, &x3)? * s3 + bv;
        let x4 = xs + k3 * h;
        let s4 = s + d3 * h;
        let k4 = augmented_rhs(p, &x4, v)?;
        let d4 = augmented_jacobian(p, &x4)? * s4 + bv;
        xs += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        s += (d1 + d2 * 2.0 + d3 * 2.0 + d4) * (h / 6.0);
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(Error::BlowUp { t: f64::NAN, what: "shooting interval diverged".into() });
    }
    Ok((xs, s))
}

/// Decision-vector layout: per interval `[x_k (4), v_k, ε_k]`, then `x_N`.
#[derive(Debug, Clone, Copy)]
struct Layout {
    n: usize,
}

impl Layout {
    fn x(&self, k: usize, c: usize) -> usize {
        6 * k + c
    }
    fn v(&self, k: usize) -> usize {
        6 * k + 4
    }
    fn eps(&self, k: usize) -> usize {
        6 * k + 5
    }
    fn len(&self) -> usize {
        6 * self.n + 4
    }
    fn state(&self, z: &[f64], k: usize) -> [f64; 4] {
        let b = 6 * k;
        [z[b], z[b + 1], z[b + 2], z[b + 3]]
    }
}

/// Constraint values and Jacobians at one iterate.
struct Linearization {
    /// Equalities: initial state (3 rows), then 4 defect rows per interval.
    c_eq: Vec<f64>,
    /// Inequalities `≤ 0`.
    c_in: Vec<f64>,
    /// Jacobian of `[c_eq; c_in]`.
    jac: SparseMat,
}

struct Transcription<'a> {
    p: &'a PlantParams,
    drv: &'a DriveParams,
    cfg: &'a OcpConfig,
    lay: Layout,
    x0: [f64; 3],
}

impl Transcription<'_> {
    fn n_g(&self) -> f64 {
        self.p.trans.n_g
    }

    fn objective(&self, z: &[f64]) -> f64 {
        let n = self.lay.n;
        let mut f = 0.0;
        for k in 0..n {
            f += ocp_cost(&self.lay.state(z, k), z[self.lay.v(k)], z[self.lay.eps(k)], self.cfg, self.n_g()).stage;
        }
        f + ocp_cost(&self.lay.state(z, n), 0.0, 0.0, self.cfg, self.n_g()).terminal
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let (lay, cfg, ng) = (self.lay, self.cfg, self.n_g());
        let mut g = vec![0.0; lay.len()];
        for k in 0..=lay.n {
            let (wi, wt) = if k < lay.n { (cfg.w[0], cfg.w[1]) } else { (cfg.w_f[0], cfg.w_f[1]) };
            g[lay.x(k, 0)] = 2.0 * wi * z[lay.x(k, 0)];
            g[lay.x(k, 1)] = 2.0 * wt * ng * (ng * z[lay.x(k, 1)] - cfg.thetaf);
            if k < lay.n {
                g[lay.v(k)] = 2.0 * cfg.w[2] * z[lay.v(k)];
                g[lay.eps(k)] = 2.0 * cfg.w[3] * z[lay.eps(k)];
            }
        }
        g
    }

    /// Gauss-Newton Hessian; exact here since `h` is affine.
    fn hessian(&self) -> SparseMat {
        let (lay, cfg, ng) = (self.lay, self.cfg, self.n_g());
        let mut p = SparseMat::new(lay.len(), lay.len());
        for k in 0..=lay.n {
            let (wi, wt) = if k < lay.n { (cfg.w[0], cfg.w[1]) } else { (cfg.w_f[0], cfg.w_f[1]) };
            p.add(lay.x(k, 0), lay.x(k, 0), 2.0 * wi);
            p.add(lay.x(k, 1), lay.x(k, 1), 2.0 * wt * ng * ng);
            if k < lay.n {
                p.add(lay.v(k), lay.v(k), 2.0 * cfg.w[2]);
                p.add(lay.eps(k), lay.eps(k), 2.0 * cfg.w[3]);
            }
        }
        p
    }

    fn psi_rows(&self, k: usize) -> &'static [usize] {
        if k < self.lay.n {
            &[0, 1, 2, 3, 4, 5]
        } else {
            &TERMINAL_PSI_ROWS
        }
    }

    fn linearize(&self, z: &[f64]) -> Result<Linearization> {
        let (lay, cfg) = (self.lay, self.cfg);
        let nz = lay.len();
        let mut c_eq = Vec::with_capacity(3 + 4 * lay.n);
        let mut jac = SparseMat::new(0, nz);
        for c in 0..3 {
            c_eq.push(z[lay.x(0, c)] - self.x0[c]);
            jac.push_row(vec![(lay.x(0, c), 1.0)]);
        }
        for k in 0..lay.n {
            let (xe, s) = shoot(self.p, &lay.state(z, k), z[lay.v(k)], cfg.t_s, cfg.substeps)?;
            for r in 0..4 {
                c_eq.push(xe[r] - z[lay.x(k + 1, r)]);
                let mut row: Vec<(usize, f64)> = (0..4).map(|c| (lay.x(k, c), s[(r, c)])).collect();
                row.push((lay.v(k), s[(r, 4)]));
                row.push((lay.x(k + 1, r), -1.0));
                jac.push_row(row);
            }
        }
        let kt = self.p.motor.k_t;
        let mut c_in = Vec::with_capacity(PSI_ROWS * lay.n + 3);
        for k in 0..=lay.n {
            let x = lay.state(z, k);
            let eps = if k < lay.n { z[lay.eps(k)] } else { 0.0 };
            let psi = ocp_constraints(&x, eps, kt * x[2], self.drv, cfg)?;
            let band = input_band(self.drv, kt * x[2], cfg.margin)?;
            for &r in self.psi_rows(k) {
                c_in.push(psi[r]);
                let (iu, iw, ii) = (lay.x(k, 3), lay.x(k, 2), lay.x(k, 0));
                let row = match r {
                    0 => vec![(iw, band.dlo * kt), (iu, -1.0)],
                    1 => vec![(iu, 1.0), (iw, -band.dhi * kt)],
                    2 => vec![(lay.eps(k), -1.0), (ii, -1.0)],
                    3 => vec![(ii, 1.0)],
                    4 => vec![(lay.eps(k), -1.0)],
                    _ => vec![(lay.eps(k), 1.0)],
                };
                jac.push_row(row);
            }
        }
        Ok(Linearization { c_eq, c_in, jac })
    }

    fn initial_guess(&self) -> Result<Vec<f64>> {
        let (lay, cfg, p) = (self.lay, self.cfg, self.p);
        let mut z = vec![0.0; lay.len()];
        let th: Vec<f64> = (0..=lay.n)
            .map(|k| p.motor_angle(cfg.theta0 + (cfg.thetaf - cfg.theta0) * k as f64 / lay.n as f64))
            .collect();
        for k in 0..=lay.n {
            let kk = k.min(lay.n - 1);
            let omega = (th[kk + 1] - th[kk]) / cfg.t_s;
            let band = input_band(self.drv, p.motor.k_t * omega, cfg.margin)?;
            z[lay.x(k, 0)] = 0.0;
            z[lay.x(k, 1)] = th[k];
            z[lay.x(k, 2)] = omega;
            z[lay.x(k, 3)] = 0.5 * (band.lo + band.hi);
            if k < lay.n {
                z[lay.eps(k)] = SOFT_CURRENT_FRACTION * cfg.i_a_max;
            }
        }
        for c in 0..3 {
            z[lay.x(0, c)] = self.x0[c];
        }
        for k in 0..lay.n {
            z[lay.v(k)] = (z[lay.x(k + 1, 3)] - z[lay.x(k, 3)]) / cfg.t_s;
        }
        Ok(z)
    }
}

fn l1_violation(lin: &Linearization) -> f64 {
    lin.c_eq.iter().map(|v| v.abs()).sum::<f64>() + lin.c_in.iter().map(|v| v.max(0.0)).sum::<f64>()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Optimality measures at an iterate with multipliers `y` (`[λ_eq; μ_in]`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktMeasures {
    /// `‖∇f + Jᵀy‖∞ / max(1, ‖∇f‖∞, ‖Jᵀy‖∞)`.
    pub stationarity: f64,
    pub max_defect: f64,
    pub max_psi: f64,
    /// `max |μ_i min(c_i, 0)|` with the stationarity scale.
    pub complementarity: f64,
}

impl KktMeasures {
    /// Scaled KKT residual: the largest of the four measures.
    pub fn residual(&self) -> f64 {
        self.stationarity.max(self.max_defect).max(self.max_psi.max(0.0)).max(self.complementarity)
    }
}

fn kkt_measures(grad: &[f64], lin: &Linearization, y: &[f64]) -> KktMeasures {
    let jty = lin.jac.tmul(y);
    let scale = inf_norm(grad).max(inf_norm(&jty)).max(1.0);
    let stat = grad.iter().zip(&jty).map(|(g, j)| (g + j).abs()).fold(0.0, f64::max) / scale;
    let m_eq = lin.c_eq.len();
    let comp = lin
        .c_in
        .iter()
        .zip(&y[m_eq..])
        .map(|(c, mu)| (mu.max(0.0) * c.min(0.0)).abs() + (mu.min(0.0)).abs())
        .fold(0.0, f64::max)
        / scale;
    KktMeasures {
        stationarity: stat,
        max_defect: inf_norm(&lin.c_eq),
        max_psi: lin.c_in.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        complementarity: comp,
    }
}

/// Result of the opening-maneuver optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedTrajectory {
    pub times: Vec<f64>,
    /// Optimal augmented states `[i_a, θ_m, ω_m, u]` at the N + 1 nodes.
    pub states: Vec<[f64; 4]>,
    /// Voltage rate per interval.
    pub v: Vec<f64>,
    /// Soft-constraint slack per interval.
    pub eps: Vec<f64>,
    /// Speed reference `ω_m*` at the nodes.
    pub r: Vec<f64>,
    /// Feedforward voltage `u*` at the nodes.
    pub u_ff: Vec<f64>,
    pub kkt_residual: f64,
    pub kkt: KktMeasures,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// ℓ1 merit before and after each accepted step, at that step's penalty.
    pub merit_steps: Vec<[f64; 2]>,
    pub objective_history: Vec<f64>,
    pub substeps: usize,
    pub t_s: f64,
}

impl PlannedTrajectory {
    pub const CSV_HEADER: [&'static str; 8] = ["t", "i_a", "theta_m", "omega_m", "u_ff", "v", "eps", "r"];

    /// `v` and `ε` of interval `k` are written on row `k`; the final row
    /// repeats the last interval's values.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER.join(","))?;
        let n = self.v.len();
        for k in 0..self.times.len() {
            let j = k.min(n.saturating_sub(1));
            let x = self.states[k];
            let cells = [self.times[k], x[0], x[1], x[2], self.u_ff[k], self.v[j], self.eps[j], self.r[k]];
            let text: Vec<String> = cells.iter().map(|v| fmt_f64(*v)).collect();
            writeln!(w, "{}", text.join(","))?;
        }
        Ok(())
    }

    /// Reads a table written by [`write_csv`](Self::write_csv). Only the
    /// trajectory is stored there: solver diagnostics come back as NaN or
    /// empty, and `substeps` is set for the default RK4 step length.
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let cols: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if cols != Self::CSV_HEADER {
            return Err(Error::Parse(format!("plan CSV header {cols:?}, expected {:?}", Self::CSV_HEADER)));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let v: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}"))))
                .collect::<Result<_>>()?;
            if v.len() != 8 {
                return Err(Error::Parse(format!("plan CSV row with {} cells", v.len())));
            }
            rows.push(v);
        }
        if rows.len() < 2 {
            return Err(Error::Parse("plan CSV needs at least two nodes".into()));
        }
        let n = rows.len() - 1;
        let t_s = (rows[n][0] - rows[0][0]) / n as f64;
        if !(t_s > 0.0) || rows.windows(2).any(|w| ((w[1][0] - w[0][0]) - t_s).abs() > 1e-9 * t_s.max(1.0)) {
            return Err(Error::Parse("plan CSV times are not uniformly spaced".into()));
        }
        let d = OcpConfig::default();
        let h = d.t_s / d.substeps as f64;
        let nan = f64::NAN;
        Ok(PlannedTrajectory {
            times: rows.iter().map(|r| r[0]).collect(),
            states: rows.iter().map(|r| [r[1], r[2], r[3], r[4]]).collect(),
            v: rows[..n].iter().map(|r| r[5]).collect(),
            eps: rows[..n].iter().map(|r| r[6]).collect(),
            r: rows.iter().map(|r| r[7]).collect(),
            u_ff: rows.iter().map(|r| r[4]).collect(),
            kkt_residual: nan,
            kkt: KktMeasures { stationarity: nan, max_defect: nan, max_psi: nan, complementarity: nan },
            objective: nan,
            iterations: 0,
            converged: false,
            merit_steps: vec![],
            objective_history: vec![],
            substeps: ((t_s / h).round() as usize).max(1),
            t_s,
        })
    }

    /// Voltage at time `t`, linear between nodes as in the optimization model.
    pub fn feedforward_at(&self, t: f64) -> f64 {
        let n = self.v.len();
        if n == 0 {
            return self.u_ff[0];
        }
        let k = (((t - self.times[0]) / self.t_s).floor().max(0.0) as usize).min(n - 1);
        self.u_ff[k] + self.v[k] * (t - self.times[k])
    }

    /// Speed reference at `t`, linear between nodes.
    pub fn reference_at(&self, t: f64) -> f64 {
        let n = self.v.len();
        if n == 0 {
            return self.r[0];
        }
        let k = (((t - self.times[0]) / self.t_s).floor().max(0.0) as usize).min(n - 1);
        let a = ((t - self.times[k]) / self.t_s).clamp(0.0, 1.0);
        self.r[k] * (1.0 - a) + self.r[k + 1] * a
    }

    pub fn max_rate(&self) -> f64 {
        inf_norm(&self.v)
    }
}

/// Forward simulation of the planned input from the initial state, with
/// `refine` times more RK4 steps than the optimization used. Returns the
/// largest absolute deviation from the planned states over all nodes.
pub fn resimulate(p: &PlantParams, plan: &PlannedTrajectory, refine: usize) -> Result<f64> {
    let steps = plan.substeps * refine.max(1);
    let mut x = plan.states[0];
    let mut worst = 0.0f64;
    for k in 0..plan.v.len() {
        // the voltage is driven by v from its own simulated value
        let (xe, _) = shoot(p, &x, plan.v[k], plan.t_s, steps)?;
        x = [xe[0], xe[1], xe[2], xe[3]];
        for c in 0..4 {
            worst = worst.max((x[c] - plan.states[k + 1][c]).abs());
        }
    }
    Ok(worst)
}

/// Solves the opening-maneuver OCP from rest at `θ0`.
pub fn solve_ocp(p: &PlantParams, drv: &DriveParams, cfg: &OcpConfig) -> Result<PlannedTrajectory> {
    p.validate()?;
    drv.validate()?;
    cfg.validate()?;
    cfg.check_step(p)?;
    let lay = Layout { n: cfg.n };
    let tr = Transcription { p, drv, cfg, lay, x0: [cfg.i_a0, p.motor_angle(cfg.theta0), 0.0] };
    let hess = tr.hessian();
    let qp_settings = QpSettings { eps_abs: cfg.solver.qp_tol, eps_rel: cfg.solver.qp_tol, ..QpSettings::default() };

    let mut z = tr.initial_guess()?;
    let mut y = vec![0.0; 3 + 4 * lay.n + PSI_ROWS * lay.n + TERMINAL_PSI_ROWS.len()];
    let mut nu = 1.0f64;
    let mut merit_steps = Vec::new();
    let mut objective_history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut lin = tr.linearize(&z)?;
    let mut grad = tr.gradient(&z);
    let mut f = tr.objective(&z);
    let mut kkt = kkt_measures(&grad, &lin, &y);

    while iterations < cfg.solver.max_iter {
        let m_eq = lin.c_eq.len();
        let m = m_eq + lin.c_in.len();
        let mut l = vec![f64::NEG_INFINITY; m];
        let mut u = vec![0.0; m];
        for i in 0..m_eq {
            l[i] = -lin.c_eq[i];
            u[i] = -lin.c_eq[i];
        }
        for (i, c) in lin.c_in.iter().enumerate() {
            u[m_eq + i] = -c;
        }
        let prob = QpProblem { p: hess.clone(), q: grad.clone(), a: lin.jac.clone(), l, u };
        let zero = vec![0.0; z.len()];
        let sol = solve_qp(&prob, &qp_settings, Some(&zero)).map_err(|e| match e {
            Error::Infeasible(msg) => Error::Infeasible(format!("{msg} (SQP iteration {iterations})")),
            other => other,
        })?;
        if sol.status != QpStatus::Solved {
            return Err(Error::NotConverged(format!(
                "QP subproblem stopped after {} iterations (primal {:.3e}, dual {:.3e})",
                sol.iterations, sol.prim_res, sol.dual_res
            )));
        }
        y = sol.y.clone();
        let dz = sol.x;
        // the cost is quadratic, so the QP multipliers are stationary at the
        // full step rather than at z
        let full: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a + b).collect();
        if let Ok(fl) = tr.linearize(&full) {
            let fg = tr.gradient(&full);
            let fk = kkt_measures(&fg, &fl, &y);
            if fk.residual() <= cfg.solver.kkt_tol && fk.max_defect <= cfg.solver.defect_tol {
                let ft = tr.objective(&full);
                merit_steps.push([f + nu * l1_violation(&lin), ft + nu * l1_violation(&fl)]);
                objective_history.push(ft);
                iterations += 1;
                z = full;
                f = ft;
                kkt = fk;
                converged = true;
                break;
            }
        }
        kkt = kkt_measures(&grad, &lin, &y);
        iterations += 1;

        nu = nu.max(1.1 * inf_norm(&y));
        let viol = l1_violation(&lin);
        let merit0 = f + nu * viol;
        let gd = grad.iter().zip(&dz).map(|(a, b)| a * b).sum::<f64>();
        let dpd = hess.mul(&dz).iter().zip(&dz).map(|(a, b)| a * b).sum::<f64>();
        let slope = gd - nu * viol;
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a + alpha * b).collect();
            if let Ok(tl) = tr.linearize(&trial) {
                // the cost is quadratic, so its change is exact without
                // differencing two large values
                let df = alpha * gd + 0.5 * alpha * alpha * dpd;
                let dm = df + nu * (l1_violation(&tl) - viol);
                if dm <= 1e-4 * alpha * slope.min(0.0) || (slope >= 0.0 && dm <= 0.0) {
                    let ft = tr.objective(&trial);
                    accepted = Some((trial, tl, ft, merit0 + dm));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((trial, tl, ft, mt)) = accepted else {
            break;
        };
        z = trial;
        lin = tl;
        f = ft;
        grad = tr.gradient(&z);
        merit_steps.push([merit0, mt]);
        objective_history.push(f);
    }

    let states: Vec<[f64; 4]> = (0..=lay.n).map(|k| lay.state(&z, k)).collect();
    Ok(PlannedTrajectory {
        times: (0..=lay.n).map(|k| cfg.t0 + k as f64 * cfg.t_s).collect(),
        r: states.iter().map(|x| x[2]).collect(),
        u_ff: states.iter().map(|x| x[3]).collect(),
        states,
        v: (0..lay.n).map(|k| z[lay.v(k)]).collect(),
        eps: (0..lay.n).map(|k| z[lay.eps(k)]).collect(),
        kkt_residual: kkt.residual(),
        kkt,
        objective: f,
        iterations,
        converged,
        merit_steps,
        objective_history,
        substeps: cfg.substeps,
        t_s: cfg.t_s,
    })
}
