//! Closed-loop simulation of the tracking architecture: planned feedforward
//! plus PD feedback on the speed error, the approximate drive inverse, and
//! the full nonlinear plant driven by the averaged converter voltage.

use nalgebra::{Matrix4, SVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::drive::{DriveParams, MISMATCH_BOUND};
use crate::error::{Error, Result};
use crate::integrators::{rk4_step, Trajectory};
use crate::io::fmt_f64;
use crate::lmisyn::ErrorModel;
use crate::plant::{dynamics, PlantParams};
use crate::trajopt::PlannedTrajectory;

/// How `e_θ` is obtained at a control tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorSource {
    /// Trapezoidal integral of `r − ω_m` over the control ticks.
    #[default]
    IntegratedSpeed,
    /// `θ_m* − θ_m` from the planned angle and the simulated shaft angle.
    Encoder,
}

/// Treatment of requests outside the admissible voltage band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaturationMode {
    #[default]
    Clamp,
    /// Abort the run with a domain error.
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// `[k_p, k_d]` in V/rad and V·s/rad on the motor side.
    pub k: [f64; 2],
    pub t_ctrl: f64,
    pub saturation: SaturationMode,
    pub error_source: ErrorSource,
    /// RK4 steps per control period.
    pub inner_steps: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            k: [0.0, 0.0],
            t_ctrl: 0.01,
            saturation: SaturationMode::Clamp,
            error_source: ErrorSource::IntegratedSpeed,
            inner_steps: 20,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_ctrl > 0.0 && self.t_ctrl.is_finite()) {
            return Err(Error::Config(format!("T_ctrl = {} must be positive", self.t_ctrl)));
        }
        if self.inner_steps == 0 {
            return Err(Error::Config("need at least one inner step".into()));
        }
        if !self.k.iter().all(|v| v.is_finite()) {
            return Err(Error::Config(format!("non-finite gains {:?}", self.k)));
        }
        Ok(())
    }
}

/// External load torque `w(t)` (N·m, motor side) added to the speed equation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Disturbance {
    #[default]
    None,
    Step { at: f64, torque: f64 },
    Sine { amplitude: f64, frequency: f64 },
}

impl Disturbance {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Disturbance::None => 0.0,
            Disturbance::Step { at, torque } => {
                if t >= at {
                    torque
                } else {
                    0.0
                }
            }
            Disturbance::Sine { amplitude, frequency } => {
                amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin()
            }
        }
    }
}

/// Mismatch between the plant used for planning and the simulated one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantPerturbation {
    /// Factor on `J_mg`.
    pub inertia_scale: f64,
    /// Added to `b_mg` (N·m·s). The sum may be negative.
    pub extra_damping: f64,
    /// Factor on `k_t`.
    pub torque_constant_scale: f64,
}

impl Default for PlantPerturbation {
    fn default() -> Self {
        PlantPerturbation { inertia_scale: 1.0, extra_damping: 0.0, torque_constant_scale: 1.0 }
    }
}

impl PlantPerturbation {
    pub fn apply(&self, p: &PlantParams) -> Result<PlantParams> {
        let mut q = *p;
        q.trans.j_mg *= self.inertia_scale;
        q.trans.b_mg += self.extra_damping;
        q.motor.k_t *= self.torque_constant_scale;
        let mut check = q;
        check.trans.b_mg = check.trans.b_mg.max(0.0);
        check.validate()?;
        if !(self.inertia_scale > 0.0 && self.torque_constant_scale > 0.0) || !q.trans.b_mg.is_finite() {
            return Err(Error::Config(format!("invalid perturbation {self:?}")));
        }
        Ok(q)
    }

    /// Perturbation whose reduced error model at `theta_lin` has the `a22`
    /// and `b2` of `target`. `J_mg` and `b_mg` move first. Targets with
    /// `|a22| < k_t |b2|` would then need `b_mg < 0`; for those `b_mg` is set
    /// to zero and `k_t` is lowered to the largest value that still matches.
    pub fn matching(p: &PlantParams, theta_lin: f64, target: &ErrorModel) -> Result<Self> {
        let (r, k) = (p.motor.r_a, p.motor.k_t);
        let (a22, b2) = (target.a22(), target.b2());
        if !(a22 < 0.0 && b2 < 0.0) {
            return Err(Error::Domain(format!("target a22 = {a22}, b2 = {b2} must both be negative")));
        }
        let j_load = p.total_inertia() - p.trans.j_mg;
        let b_load = p.total_damping(p.motor_angle(theta_lin))? - p.trans.b_mg;
        // a22 = −(k² + b R)/(R J), b2 = −k/(R J)  ⇒  a22/b2 = k + b R/k
        let ratio = a22 / b2;
        let mut k_new = k;
        let mut b_mg = (ratio * k - k * k) / r - b_load;
        if b_mg < 0.0 {
            let disc = ratio * ratio - 4.0 * b_load * r;
            if disc < 0.0 {
                return Err(Error::Domain(format!(
                    "target a22 = {a22}, b2 = {b2} is not reachable with non-negative friction"
                )));
            }
            k_new = 0.5 * (ratio + disc.sqrt());
            b_mg = 0.0;
        }
        let j_mg = -k_new / (r * b2) - j_load;
        if !(j_mg > 0.0) {
            return Err(Error::Domain(format!("target b2 = {b2} needs J_mg = {j_mg} ≤ 0")));
        }
        Ok(PlantPerturbation {
            inertia_scale: j_mg / p.trans.j_mg,
            extra_damping: b_mg - p.trans.b_mg,
            torque_constant_scale: k_new / k,
        })
    }
}

/// Controller signals at one tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: f64,
    pub r: f64,
    pub omega_m: f64,
    pub i_a: f64,
    pub theta_m: f64,
    pub e_theta: f64,
    pub e_omega: f64,
    pub u_ff: f64,
    pub u_fb: f64,
    /// `u_ff + u_fb` before clamping.
    pub u: f64,
    pub delta: f64,
    pub clamped: bool,
    /// Averaged voltage `ū_a(δ, e_a)` at the tick's back-EMF.
    pub applied: f64,
    /// Width `ū_M − ū_m` of the admissible band at the tick.
    pub band: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub nrmse: f64,
    pub peak_e_omega: f64,
    /// Planned minus simulated load angle at the end (rad).
    pub terminal_theta_error: f64,
    pub terminal_omega: f64,
    pub peak_omega: f64,
    pub saturation_fraction: f64,
    /// Largest `|ū_a − u| / (ū_M − ū_m)` over ticks that were not clamped.
    pub max_unclamped_mismatch: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    /// Plant state at every inner step; `inputs` holds the duty cycle.
    pub trajectory: Trajectory<3>,
    /// One record per control tick plus the final sample, which carries
    /// no control action.
    pub ticks: Vec<TickRecord>,
    pub metrics: RunMetrics,
}

impl RunReport {
    pub const CSV_HEADER: &'static str = "t,r,omega_m,i_a,u_ff,u_fb,u,delta,clamped";

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for k in &self.ticks {
            let cells = [k.t, k.r, k.omega_m, k.i_a, k.u_ff, k.u_fb, k.u, k.delta];
            let text: Vec<String> = cells.iter().map(|v| fmt_f64(*v)).collect();
            writeln!(w, "{},{}", text.join(","), k.clamped as u8)?;
        }
        Ok(())
    }
}

/// `‖r − y‖ / ‖r − mean(r)‖` over the samples with `r ≠ 0`, the mean taken
/// over the same samples.
pub fn nrmse(r: &[f64], y: &[f64]) -> Result<f64> {
    if r.len() != y.len() {
        return Err(Error::Domain(format!("{} reference samples vs {} outputs", r.len(), y.len())));
    }
    let idx: Vec<usize> = (0..r.len()).filter(|&i| r[i] != 0.0).collect();
    if idx.is_empty() {
        return Err(Error::UndefinedMetric("reference is zero everywhere".into()));
    }
    let mean = idx.iter().map(|&i| r[i]).sum::<f64>() / idx.len() as f64;
    let num = idx.iter().map(|&i| (r[i] - y[i]).powi(2)).sum::<f64>().sqrt();
    let den = idx.iter().map(|&i| (r[i] - mean).powi(2)).sum::<f64>().sqrt();
    if !(den > 0.0) {
        return Err(Error::UndefinedMetric("reference is constant on its support".into()));
    }
    Ok(num / den)
}

/// Planned motor angle at `t`, cubic Hermite between nodes using the planned speed.
fn planned_angle(plan: &PlannedTrajectory, t: f64) -> f64 {
    let n = plan.v.len();
    if n == 0 {
        return plan.states[0][1];
    }
    let h = plan.t_s;
    let k = (((t - plan.times[0]) / h).floor().max(0.0) as usize).min(n - 1);
    let s = ((t - plan.times[k]) / h).clamp(0.0, 1.0);
    let (a, b) = (plan.states[k], plan.states[k + 1]);
    let (s2, s3) = (s * s, s * s * s);
    (2.0 * s3 - 3.0 * s2 + 1.0) * a[1]
        + (s3 - 2.0 * s2 + s) * h * a[2]
        + (-2.0 * s3 + 3.0 * s2) * b[1]
        + (s3 - s2) * h * b[2]
}

struct Sim<'a> {
    p: &'a PlantParams,
    drv: &'a DriveParams,
    j_tot: f64,
}

impl Sim<'_> {
    fn e_a(&self, omega: f64) -> f64 {
        self.drv.clamp_bemf(self.p.bemf(omega))
    }

    /// Plant field with the duty cycle held and the voltage following the back-EMF.
    fn rhs(&self, x: &Vector3<f64>, dw: &[f64; 2]) -> Result<Vector3<f64>> {
        let u_a = self.drv.average_voltage(dw[0], self.e_a(x[2]))?;
        let mut f = dynamics(x, u_a, self.p)?;
        f[2] += dw[1] / self.j_tot;
        Ok(f)
    }
}

fn check_grid(plan: &PlannedTrajectory, ctrl: &ControllerConfig) -> Result<usize> {
    let t0 = plan.times[0];
    let tf = *plan.times.last().unwrap();
    let periods = (tf - t0) / ctrl.t_ctrl;
    if !(periods >= 1.0) || (periods - periods.round()).abs() > 1e-9 * periods {
        return Err(Error::Config(format!(
            "plan horizon {} is not a whole number of control periods {}",
            tf - t0,
            ctrl.t_ctrl
        )));
    }
    Ok(periods.round() as usize)
}

/// Which signals drive the input at a tick.
enum Law {
    Feedback,
    FeedforwardOnly,
}

/// Simulates the tracking loop over the plan horizon. The feedforward is
/// sampled at the middle of each control period so that the held value
/// equals the planned voltage averaged over the period; the reference and
/// the errors are taken at the tick itself.
pub fn run_closed_loop(
    p: &PlantParams,
    drv: &DriveParams,
    plan: &PlannedTrajectory,
    ctrl: &ControllerConfig,
    w: &Disturbance,
    perturbation: &PlantPerturbation,
) -> Result<RunReport> {
    run(p, drv, plan, ctrl, w, perturbation, Law::Feedback)
}

/// The same loop with the feedback path removed.
pub fn run_feedforward(
    p: &PlantParams,
    drv: &DriveParams,
    plan: &PlannedTrajectory,
    ctrl: &ControllerConfig,
    w: &Disturbance,
    perturbation: &PlantPerturbation,
) -> Result<RunReport> {
    run(p, drv, plan, ctrl, w, perturbation, Law::FeedforwardOnly)
}

fn run(
    p_nominal: &PlantParams,
    drv: &DriveParams,
    plan: &PlannedTrajectory,
    ctrl: &ControllerConfig,
    w: &Disturbance,
    perturbation: &PlantPerturbation,
    law: Law,
) -> Result<RunReport> {
    ctrl.validate()?;
    drv.validate()?;
    if plan.times.len() < 2 || plan.states.len() != plan.times.len() {
        return Err(Error::Config("plan needs at least two nodes".into()));
    }
    let p = perturbation.apply(p_nominal)?;
    let sim = Sim { p: &p, drv, j_tot: p.total_inertia() };
    let periods = check_grid(plan, ctrl)?;
    let m = ctrl.inner_steps;
    let dt = ctrl.t_ctrl / m as f64;
    let t0 = plan.times[0];
    let s0 = plan.states[0];

    let mut x = Vector3::new(s0[0], s0[1], s0[2]);
    let mut traj = Trajectory::<3> {
        times: Vec::with_capacity(periods * m + 1),
        states: Vec::with_capacity(periods * m + 1),
        inputs: Vec::with_capacity(periods * m + 1),
    };
    let mut ticks = Vec::with_capacity(periods + 1);
    let mut e_theta = 0.0;
    let mut prev_e_omega = 0.0;

    let errors = |k: usize, t: f64, x: &Vector3<f64>, e_theta: f64, prev: f64| {
        let r = plan.reference_at(t);
        let e_omega = r - x[2];
        let e_th = match ctrl.error_source {
            ErrorSource::IntegratedSpeed if k == 0 => 0.0,
            ErrorSource::IntegratedSpeed => e_theta + 0.5 * ctrl.t_ctrl * (prev + e_omega),
            ErrorSource::Encoder => planned_angle(plan, t) - x[1],
        };
        (r, e_th, e_omega)
    };

    for k in 0..periods {
        let t = t0 + k as f64 * ctrl.t_ctrl;
        let (r, e_th, e_omega) = errors(k, t, &x, e_theta, prev_e_omega);
        e_theta = e_th;
        prev_e_omega = e_omega;
        let u_ff = plan.feedforward_at(t + 0.5 * ctrl.t_ctrl);
        let (u_fb, u) = match law {
            Law::Feedback => {
                let u_fb = ctrl.k[0] * e_theta + ctrl.k[1] * e_omega;
                (u_fb, u_ff + u_fb)
            }
            Law::FeedforwardOnly => (0.0, u_ff),
        };
        let e_a = sim.e_a(x[2]);
        let inv = drv.invert(u, e_a).map_err(|e| stamp(e, t))?;
        if inv.saturated && ctrl.saturation == SaturationMode::Reject {
            return Err(Error::Domain(format!(
                "request {u} V outside the admissible band at t = {t} (e_a = {e_a})"
            )));
        }
        let ext = drv.duty_extrema(e_a)?;
        ticks.push(TickRecord {
            t,
            r,
            omega_m: x[2],
            i_a: x[0],
            theta_m: x[1],
            e_theta,
            e_omega,
            u_ff,
            u_fb,
            u,
            delta: inv.delta,
            clamped: inv.saturated,
            applied: drv.average_voltage(inv.delta, e_a)?,
            band: ext.range(),
        });
        for j in 0..m {
            let ts = t + j as f64 * dt;
            traj.times.push(ts);
            traj.states.push(x);
            traj.inputs.push(inv.delta);
            let input = [inv.delta, w.eval(ts)];
            x = rk4_step(&|x: &Vector3<f64>, dw: &[f64; 2]| sim.rhs(x, dw), &x, &input, dt)
                .map_err(|e| stamp(e, ts))?;
            if !x.iter().all(|v| v.abs() < 1e12) {
                return Err(Error::BlowUp { t: ts + dt, what: format!("state {x:?} diverged") });
            }
        }
    }
    let tf = t0 + periods as f64 * ctrl.t_ctrl;
    traj.times.push(tf);
    traj.states.push(x);
    traj.inputs.push(traj.inputs.last().copied().unwrap_or(0.0));
    let (r, e_th, e_omega) = errors(periods, tf, &x, e_theta, prev_e_omega);
    let held = traj.inputs[traj.inputs.len() - 1];
    let e_a = sim.e_a(x[2]);
    ticks.push(TickRecord {
        t: tf,
        r,
        omega_m: x[2],
        i_a: x[0],
        theta_m: x[1],
        e_theta: e_th,
        e_omega,
        u_ff: plan.feedforward_at(tf),
        u_fb: 0.0,
        u: plan.feedforward_at(tf),
        delta: held,
        clamped: false,
        applied: drv.average_voltage(held, e_a)?,
        band: drv.duty_extrema(e_a)?.range(),
    });

    let metrics = metrics(&p, plan, &ticks, periods)?;
    Ok(RunReport { trajectory: traj, ticks, metrics })
}

fn stamp(e: Error, t: f64) -> Error {
    match e {
        Error::BlowUp { what, .. } => Error::BlowUp { t, what },
        Error::Domain(msg) => Error::Domain(format!("{msg} (t = {t})")),
        other => other,
    }
}

fn metrics(p: &PlantParams, plan: &PlannedTrajectory, ticks: &[TickRecord], periods: usize) -> Result<RunMetrics> {
    let r: Vec<f64> = ticks.iter().map(|k| k.r).collect();
    let y: Vec<f64> = ticks.iter().map(|k| k.omega_m).collect();
    let controlled = &ticks[..periods];
    let last = ticks[ticks.len() - 1];
    let planned_end = plan.states[plan.states.len() - 1][1];
    Ok(RunMetrics {
        nrmse: nrmse(&r, &y)?,
        peak_e_omega: ticks.iter().map(|k| k.e_omega.abs()).fold(0.0, f64::max),
        terminal_theta_error: p.load_angle(planned_end - last.theta_m),
        terminal_omega: last.omega_m,
        peak_omega: y.iter().map(|v| v.abs()).fold(0.0, f64::max),
        saturation_fraction: controlled.iter().filter(|k| k.clamped).count() as f64 / periods as f64,
        max_unclamped_mismatch: controlled
            .iter()
            .filter(|k| !k.clamped)
            .map(|k| (k.applied - k.u).abs() / k.band)
            .fold(0.0, f64::max),
    })
}

/// Step response comparison of the three-state error model (with `L_a`)
/// against its reduction with the electrical dynamics removed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub l_a: f64,
    /// Largest `|e_ω|` difference over the horizon.
    pub max_speed_deviation: f64,
    pub max_angle_deviation: f64,
    /// Steady-state `e_ω / u_fb` of each model.
    pub dc_gain_full: f64,
    pub dc_gain_reduced: f64,
}

/// Augmented generator `[[A, b], [0, 0]]` of `[ĩ, e_θ, e_ω]` (or its reduced
/// counterpart padded with a dummy current) with a constant input as last state.
fn error_generators(p: &PlantParams, theta_lin: f64) -> Result<(Matrix4<f64>, Matrix4<f64>)> {
    let (r, k, l) = (p.motor.r_a, p.motor.k_t, p.motor.l_a);
    let j = p.total_inertia();
    let b = p.total_damping(p.motor_angle(theta_lin))?;
    let reduced = Matrix4::new(
        0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, -(k * k + b * r) / (r * j), -k / (r * j),
        0.0, 0.0, 0.0, 0.0,
    );
    let full = if l > 0.0 {
        Matrix4::new(
            -r / l, 0.0, -k / l, -1.0 / l,
            0.0, 0.0, 1.0, 0.0,
            k / j, 0.0, -b / j, 0.0,
            0.0, 0.0, 0.0, 0.0,
        )
    } else {
        // ĩ = −(u_fb + k e_ω)/R substituted into the speed row
        let mut m = Matrix4::zeros();
        m[(1, 2)] = 1.0;
        m[(2, 2)] = -b / j + (k / j) * (-k / r);
        m[(2, 3)] = (k / j) * (-1.0 / r);
        m
    };
    Ok((full, reduced))
}

/// Unit-step responses of both error models from rest, compared on
/// `samples` equally spaced points of `[0, horizon]`.
pub fn reduce_error_model_check(
    p: &PlantParams,
    theta_lin: f64,
    horizon: f64,
    samples: usize,
) -> Result<ReductionReport> {
    if !(horizon > 0.0) || samples == 0 {
        return Err(Error::Config("need a positive horizon and samples".into()));
    }
    if !(p.motor.l_a >= 0.0) {
        return Err(Error::Config(format!("L_a = {} must be ≥ 0", p.motor.l_a)));
    }
    let (full, reduced) = error_generators(p, theta_lin)?;
    let h = horizon / samples as f64;
    let (pf, pr) = ((full * h).exp(), (reduced * h).exp());
    let (mut xf, mut xr) = (Vector4::new(0.0, 0.0, 0.0, 1.0), Vector4::new(0.0, 0.0, 0.0, 1.0));
    let (mut dw, mut dth) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        xf = pf * xf;
        xr = pr * xr;
        dw = dw.max((xf[2] - xr[2]).abs());
        dth = dth.max((xf[1] - xr[1]).abs());
    }
    let dc = |g: &Matrix4<f64>| -> Result<f64> {
        // steady state of the (ĩ, e_ω) block, or of e_ω alone when ĩ is absent
        if g[(0, 0)] != 0.0 {
            let a = nalgebra::Matrix2::new(g[(0, 0)], g[(0, 2)], g[(2, 0)], g[(2, 2)]);
            let bb = nalgebra::Vector2::new(g[(0, 3)], g[(2, 3)]);
            let x = a.lu().solve(&(-bb)).ok_or_else(|| Error::Numerical("singular error model".into()))?;
            Ok(x[1])
        } else {
            Ok(-g[(2, 3)] / g[(2, 2)])
        }
    };
    Ok(ReductionReport {
        l_a: p.motor.l_a,
        max_speed_deviation: dw,
        max_angle_deviation: dth,
        dc_gain_full: dc(&full)?,
        dc_gain_reduced: dc(&reduced)?,
    })
}

/// Slope of a least-squares line through the log of the upper envelope of
/// `‖e(t)‖` for `ė = (A + BK) e` from `e0`, fitted until the norm has
/// dropped by `1e-10` or `horizon` is reached.
pub fn decay_envelope_slope(model: &ErrorModel, k: [f64; 2], e0: [f64; 2], horizon: f64, samples: usize) -> Result<f64> {
    if !(horizon > 0.0) || samples < 3 {
        return Err(Error::Config("need a positive horizon and at least three samples".into()));
    }
    let step = (model.closed_loop(k) * (horizon / samples as f64)).exp();
    let mut e = SVector::<f64, 2>::new(e0[0], e0[1]);
    let n0 = e.norm();
    if !(n0 > 0.0) {
        return Err(Error::Domain("zero initial error".into()));
    }
    let mut norms = vec![n0];
    for _ in 0..samples {
        e = step * e;
        let n = e.norm();
        if !n.is_finite() {
            return Err(Error::BlowUp { t: norms.len() as f64 * horizon / samples as f64, what: "error diverged".into() });
        }
        norms.push(n);
        if n < 1e-10 * n0 {
            break;
        }
    }
    let mut env = norms.clone();
    for i in (0..env.len() - 1).rev() {
        env[i] = env[i].max(env[i + 1]);
    }
    let dt = horizon / samples as f64;
    let pts: Vec<(f64, f64)> = env.iter().enumerate().map(|(i, v)| (i as f64 * dt, v.ln())).collect();
    if pts.len() < 3 {
        return Err(Error::Config("horizon too short to resolve the decay".into()));
    }
    let nf = pts.len() as f64;
    let (mt, my) = (pts.iter().map(|p| p.0).sum::<f64>() / nf, pts.iter().map(|p| p.1).sum::<f64>() / nf);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Ticks where an unclamped request missed the averaged voltage by more
/// than the certified share of the band.
pub fn mismatch_violations(report: &RunReport) -> usize {
    report.ticks[..report.ticks.len() - 1]
        .iter()
        .filter(|k| !k.clamped && (k.applied - k.u).abs() > MISMATCH_BOUND * k.band)
        .count()
}
