//! Gearmotor, transmission and barrier mechanics.
//!
//! The augmented state is `x = [i_a, θ_m, ω_m]` (armature current, motor
//! shaft angle, motor shaft speed). The load angle is `θ = N_g θ_m`.
//! Coulomb friction uses a smoothed sign `tanh(ω / ω_eps)` so the vector
//! field stays differentiable.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard gravity (m/s²).
pub const STANDARD_GRAVITY: f64 = 9.80665;

/// Smallest admissible spring length over the working range (m).
pub const MIN_SPRING_LENGTH: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorParams {
    /// Armature resistance (Ω).
    pub r_a: f64,
    /// Armature inductance (H).
    pub l_a: f64,
    /// Torque / back-EMF constant (N·m/A).
    pub k_t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionParams {
    /// Gear ratio, `θ = N_g θ_m`.
    pub n_g: f64,
    /// Gear efficiency in (0, 1].
    pub eta: f64,
    /// Gearmotor inertia (kg·m²).
    pub j_mg: f64,
    /// Gearmotor viscous friction (N·m·s).
    pub b_mg: f64,
    /// Coulomb friction torque at the motor shaft (N·m).
    pub tau_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierMechanics {
    pub m_a: f64,
    pub l_a: f64,
    pub k_s: f64,
    pub b_s: f64,
    /// Lever length (m).
    pub l_lever: f64,
    /// Spring natural length (m).
    pub l_s0: f64,
    /// Spring pre-compression (m).
    pub s_0: f64,
    /// Hinge-to-anchor distance (m).
    pub d: f64,
    pub beta: f64,
    pub phi: f64,
    /// Design equilibrium angle (rad).
    pub theta_e: f64,
    pub g: f64,
}

/// Complete physical parameter record.
///
/// Serialized as a flat JSON object whose keys mirror the usual symbols
/// (`R_a`, `L_a`, `k_t`, `N_g`, `eta`, ...). When `s_0` is absent the
/// pre-compression is recomputed from `theta_e` at load time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlantParamsDoc", into = "PlantParamsDoc")]
pub struct PlantParams {
    pub motor: MotorParams,
    pub trans: TransmissionParams,
    pub mech: BarrierMechanics,
    /// Speed scale of the smoothed Coulomb sign (rad/s).
    pub omega_eps: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParamsDoc {
    #[serde(rename = "R_a")]
    pub resistance: f64,
    #[serde(rename = "L_a")]
    pub inductance: f64,
    pub k_t: f64,
    #[serde(rename = "N_g")]
    pub n_g: f64,
    pub eta: f64,
    #[serde(rename = "J_mg")]
    pub j_mg: f64,
    pub b_mg: f64,
    pub tau_c: f64,
    pub m_a: f64,
    pub l_a: f64,
    pub k_s: f64,
    pub b_s: f64,
    pub l_lever: f64,
    pub l_s0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_0: Option<f64>,
    pub d: f64,
    pub beta: f64,
    pub phi: f64,
    #[serde(default = "default_theta_e")]
    pub theta_e: f64,
    #[serde(default = "default_gravity")]
    pub g: f64,
    pub omega_eps: f64,
}

fn default_theta_e() -> f64 {
    PI / 4.0
}

fn default_gravity() -> f64 {
    STANDARD_GRAVITY
}

impl TryFrom<PlantParamsDoc> for PlantParams {
    type Error = Error;

    fn try_from(doc: PlantParamsDoc) -> Result<Self> {
        let mut p = PlantParams {
            motor: MotorParams { r_a: doc.resistance, l_a: doc.inductance, k_t: doc.k_t },
            trans: TransmissionParams {
                n_g: doc.n_g,
                eta: doc.eta,
                j_mg: doc.j_mg,
                b_mg: doc.b_mg,
                tau_c: doc.tau_c,
            },
            mech: BarrierMechanics {
                m_a: doc.m_a,
                l_a: doc.l_a,
                k_s: doc.k_s,
                b_s: doc.b_s,
                l_lever: doc.l_lever,
                l_s0: doc.l_s0,
                s_0: doc.s_0.unwrap_or(0.0),
                d: doc.d,
                beta: doc.beta,
                phi: doc.phi,
                theta_e: doc.theta_e,
                g: doc.g,
            },
            omega_eps: doc.omega_eps,
        };
        if doc.s_0.is_none() {
            p.mech.s_0 = solve_precompression(&p.mech, p.mech.theta_e)?;
        }
        p.validate()?;
        Ok(p)
    }
}

impl From<PlantParams> for PlantParamsDoc {
    fn from(p: PlantParams) -> Self {
        PlantParamsDoc {
            resistance: p.motor.r_a,
            inductance: p.motor.l_a,
            k_t: p.motor.k_t,
            n_g: p.trans.n_g,
            eta: p.trans.eta,
            j_mg: p.trans.j_mg,
            b_mg: p.trans.b_mg,
            tau_c: p.trans.tau_c,
            m_a: p.mech.m_a,
            l_a: p.mech.l_a,
            k_s: p.mech.k_s,
            b_s: p.mech.b_s,
            l_lever: p.mech.l_lever,
            l_s0: p.mech.l_s0,
            s_0: Some(p.mech.s_0),
            d: p.mech.d,
            beta: p.mech.beta,
            phi: p.mech.phi,
            theta_e: p.mech.theta_e,
            g: p.mech.g,
            omega_eps: p.omega_eps,
        }
    }
}

impl Default for PlantParams {
    /// Representative 24 V gearmotor driving a 3 m, 2 kg boom balanced at
    /// 45°. These numbers are a consistent working configuration, not
    /// measured data.
    fn default() -> Self {
        let mut mech = BarrierMechanics {
            m_a: 2.0,
            l_a: 3.0,
            k_s: 4000.0,
            b_s: 200.0,
            l_lever: 0.1,
            l_s0: 0.25,
            s_0: 0.0,
            d: 0.3,
            beta: 0.2,
            phi: 1.7,
            theta_e: PI / 4.0,
            g: STANDARD_GRAVITY,
        };
        mech.s_0 = solve_precompression(&mech, mech.theta_e)
            .expect("default geometry is non-degenerate");
        PlantParams {
            motor: MotorParams { r_a: 1.0, l_a: 2e-3, k_t: 0.06 },
            trans: TransmissionParams {
                n_g: 1.0 / 400.0,
                eta: 0.7,
                j_mg: 2e-4,
                b_mg: 6e-4,
                tau_c: 0.15,
            },
            mech,
            omega_eps: 1.0,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let m = &self.motor;
        let t = &self.trans;
        let b = &self.mech;
        let all = [
            m.r_a, m.l_a, m.k_t, t.n_g, t.eta, t.j_mg, t.b_mg, t.tau_c, b.m_a, b.l_a, b.k_s,
            b.b_s, b.l_lever, b.l_s0, b.s_0, b.d, b.beta, b.phi, b.theta_e, b.g, self.omega_eps,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("plant parameters must be finite".into()));
        }
        if !(m.r_a > 0.0 && m.l_a > 0.0 && m.k_t > 0.0) {
            return Err(Error::Config("R_a, L_a and k_t must be strictly positive".into()));
        }
        if !(t.eta > 0.0 && t.eta <= 1.0) {
            return Err(Error::Config(format!("eta = {} outside (0, 1]", t.eta)));
        }
        if !(t.n_g > 0.0) {
            return Err(Error::Config("N_g must be positive".into()));
        }
        if !(t.j_mg > 0.0 && t.b_mg >= 0.0 && t.tau_c >= 0.0) {
            return Err(Error::Config("need J_mg > 0, b_mg >= 0, tau_c >= 0".into()));
        }
        if !(b.m_a > 0.0 && b.l_a > 0.0 && b.l_lever > 0.0 && b.d > 0.0 && b.l_s0 > 0.0) {
            return Err(Error::Config("masses and lengths must be strictly positive".into()));
        }
        if b.k_s < 0.0 || b.b_s < 0.0 {
            return Err(Error::Config("k_s and b_s must be non-negative".into()));
        }
        if !(self.omega_eps > 0.0) {
            return Err(Error::Config("omega_eps must be positive".into()));
        }
        b.check_geometry()
    }

    /// `J_tot = J_mg + J_a N_g² / η`.
    pub fn total_inertia(&self) -> f64 {
        self.trans.j_mg + self.mech.bar_inertia() * self.trans.n_g.powi(2) / self.trans.eta
    }

    /// `b_tot(θ_m) = b_mg + b(N_g θ_m) N_g² / η`.
    pub fn total_damping(&self, theta_m: f64) -> Result<f64> {
        let n = self.trans.n_g;
        Ok(self.trans.b_mg + nonlinear_damping(n * theta_m, &self.mech)? * n * n / self.trans.eta)
    }

    /// Motor-shaft angle corresponding to a load angle.
    pub fn motor_angle(&self, theta: f64) -> f64 {
        theta / self.trans.n_g
    }

    pub fn load_angle(&self, theta_m: f64) -> f64 {
        theta_m * self.trans.n_g
    }

    /// Back-EMF `e_a = k_t ω_m`.
    pub fn bemf(&self, omega_m: f64) -> f64 {
        self.motor.k_t * omega_m
    }
}

impl BarrierMechanics {
    /// Rod inertia about the hinge, `m_a l_a² / 3`.
    pub fn bar_inertia(&self) -> f64 {
        self.m_a * self.l_a * self.l_a / 3.0
    }

    /// Rejects layouts where the spring length nearly vanishes on `[0, π/2]`.
    pub fn check_geometry(&self) -> Result<()> {
        // l_s(θ)² = d² + l² − 2 d l cos(β + α(θ)); its minimum over the
        // working range is attained where cos(β + α) is largest.
        let q_hi = self.beta + PI - self.phi;
        let q_lo = q_hi - PI / 2.0;
        let two_pi = 2.0 * PI;
        let contains_zero = (q_lo / two_pi).ceil() <= (q_hi / two_pi).floor();
        let max_cos = if contains_zero { 1.0 } else { q_lo.cos().max(q_hi.cos()) };
        let min_sq = self.d * self.d + self.l_lever * self.l_lever
            - 2.0 * self.d * self.l_lever * max_cos;
        let min_len = min_sq.max(0.0).sqrt();
        if min_len < MIN_SPRING_LENGTH {
            return Err(Error::Config(format!(
                "spring length drops to {min_len:e} m on [0, pi/2]"
            )));
        }
        Ok(())
    }
}

/// Lever angle, spring length and spring compression at load angle `θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpringGeometry {
    pub alpha: f64,
    pub l_s: f64,
    pub s: f64,
}

pub fn spring_geometry(theta: f64, mech: &BarrierMechanics) -> Result<SpringGeometry> {
    if !theta.is_finite() {
        return Err(Error::Domain(format!("non-finite angle {theta}")));
    }
    let alpha = PI - mech.phi - theta;
    let q = mech.beta + alpha;
    let sq = mech.d * mech.d + mech.l_lever * mech.l_lever
        - 2.0 * mech.d * mech.l_lever * q.cos();
    let l_s = sq.max(0.0).sqrt();
    Ok(SpringGeometry { alpha, l_s, s: mech.l_s0 - l_s + mech.s_0 })
}

/// Effective lever arm `l_ℓ d sin(β + α) / l_s` and its derivative in `θ`.
fn lever_arm(theta: f64, mech: &BarrierMechanics) -> Result<(f64, f64, SpringGeometry)> {
    let geo = spring_geometry(theta, mech)?;
    if geo.l_s == 0.0 {
        return Err(Error::Geometry(format!("spring length vanishes at theta = {theta}")));
    }
    let q = mech.beta + geo.alpha;
    let (sq, cq) = q.sin_cos();
    let ld = mech.l_lever * mech.d;
    let arm = ld * sq / geo.l_s;
    // dq/dθ = −1, dl_s/dθ = −l d sin q / l_s
    let dls = -ld * sq / geo.l_s;
    let darm = ld * (-cq / geo.l_s - sq * dls / (geo.l_s * geo.l_s));
    Ok((arm, darm, geo))
}

/// Reaction torque of spring and bar about the hinge (N·m).
pub fn reaction_torque(theta: f64, mech: &BarrierMechanics) -> Result<f64> {
    let (arm, _, geo) = lever_arm(theta, mech)?;
    Ok(-mech.k_s * geo.s * arm + 0.5 * mech.g * mech.m_a * mech.l_a * theta.cos())
}

/// `dτ_r/dθ`.
pub fn reaction_torque_slope(theta: f64, mech: &BarrierMechanics) -> Result<f64> {
    let (arm, darm, geo) = lever_arm(theta, mech)?;
    // ds/dθ = −dl_s/dθ
    let q = mech.beta + geo.alpha;
    let ds = mech.l_lever * mech.d * q.sin() / geo.l_s;
    Ok(-mech.k_s * (ds * arm + geo.s * darm) - 0.5 * mech.g * mech.m_a * mech.l_a * theta.sin())
}

/// Spring pre-compression that balances the barrier at `theta_e`.
pub fn solve_precompression(mech: &BarrierMechanics, theta_e: f64) -> Result<f64> {
    let mut m = *mech;
    m.s_0 = 0.0;
    let (arm, _, geo) = lever_arm(theta_e, &m)?;
    // τ_r(θ_e) = −k_s (s|_{s0=0} + s_0) arm + bar = 0 is linear in s_0.
    let coef = mech.k_s * arm;
    if coef.abs() < 1e-300 || !coef.is_finite() {
        return Err(Error::Geometry(format!(
            "spring torque coefficient vanishes at theta_e = {theta_e}"
        )));
    }
    let bar = 0.5 * m.g * m.m_a * m.l_a * theta_e.cos();
    Ok(bar / coef - geo.s)
}

/// Angle-dependent damping reflected at the hinge (N·m·s).
pub fn nonlinear_damping(theta: f64, mech: &BarrierMechanics) -> Result<f64> {
    let (arm, _, _) = lever_arm(theta, mech)?;
    Ok(mech.b_s * arm)
}

pub fn nonlinear_damping_slope(theta: f64, mech: &BarrierMechanics) -> Result<f64> {
    let (_, darm, _) = lever_arm(theta, mech)?;
    Ok(mech.b_s * darm)
}

/// Smoothed sign used for Coulomb friction.
pub fn smooth_sign(omega: f64, omega_eps: f64) -> f64 {
    (omega / omega_eps).tanh()
}

/// Load torque at the motor shaft, `τ_r(N_g θ_m) N_g/η + τ_c sgn(ω_m)`.
pub fn load_torque(theta_m: f64, omega_m: f64, p: &PlantParams) -> Result<f64> {
    let n = p.trans.n_g;
    Ok(reaction_torque(n * theta_m, &p.mech)? * n / p.trans.eta
        + p.trans.tau_c * smooth_sign(omega_m, p.omega_eps))
}

/// Plant state `[i_a, θ_m, ω_m]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub i_a: f64,
    pub theta_m: f64,
    pub omega_m: f64,
}

impl State {
    pub fn new(i_a: f64, theta_m: f64, omega_m: f64) -> Self {
        State { i_a, theta_m, omega_m }
    }

    /// Barrier at rest at load angle `theta`.
    pub fn at_rest(theta: f64, p: &PlantParams) -> Self {
        State { i_a: 0.0, theta_m: p.motor_angle(theta), omega_m: 0.0 }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.i_a, self.theta_m, self.omega_m)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        State { i_a: v[0], theta_m: v[1], omega_m: v[2] }
    }

    pub fn is_finite(&self) -> bool {
        self.i_a.is_finite() && self.theta_m.is_finite() && self.omega_m.is_finite()
    }
}

/// Net torque on the motor shaft excluding inertia:
/// `k_t i_a − b_tot(θ_m) ω_m − τ_ℓ(θ_m, ω_m)`.
pub fn shaft_torque(x: &Vector3<f64>, p: &PlantParams) -> Result<f64> {
    Ok(p.motor.k_t * x[0] - p.total_damping(x[1])? * x[2] - load_torque(x[1], x[2], p)?)
}

/// Augmented plant vector field `ẋ = f(x, u_a)`.
pub fn dynamics(x: &Vector3<f64>, u_a: f64, p: &PlantParams) -> Result<Vector3<f64>> {
    let m = &p.motor;
    Ok(Vector3::new(
        (-m.r_a * x[0] - m.k_t * x[2] + u_a) / m.l_a,
        x[2],
        shaft_torque(x, p)? / p.total_inertia(),
    ))
}

/// Analytic Jacobians `(∂f/∂x, ∂f/∂u_a)`.
pub fn dynamics_jacobian(
    x: &Vector3<f64>,
    p: &PlantParams,
) -> Result<(Matrix3<f64>, Vector3<f64>)> {
    let m = &p.motor;
    let n = p.trans.n_g;
    let eta = p.trans.eta;
    let j = p.total_inertia();
    let theta = n * x[1];
    let b_tot = p.total_damping(x[1])?;
    let db = nonlinear_damping_slope(theta, &p.mech)?;
    let dtau = reaction_torque_slope(theta, &p.mech)?;
    let sech2 = 1.0 - smooth_sign(x[2], p.omega_eps).powi(2);
    let d3_d2 = (-db * n.powi(3) / eta * x[2] - dtau * n * n / eta) / j;
    let d3_d3 = (-b_tot - p.trans.tau_c * sech2 / p.omega_eps) / j;
    let a = Matrix3::new(
        -m.r_a / m.l_a, 0.0, -m.k_t / m.l_a,
        0.0, 0.0, 1.0,
        m.k_t / j, d3_d2, d3_d3,
    );
    Ok((a, Vector3::new(1.0 / m.l_a, 0.0, 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mech() -> BarrierMechanics {
        PlantParams::default().mech
    }

    #[test]
    fn spring_length_closed_forms() {
        let m = mech();
        // β + α = π/2
        let theta = m.beta + PI - m.phi - PI / 2.0;
        let g = spring_geometry(theta, &m).unwrap();
        assert_relative_eq!(g.l_s, (m.d * m.d + m.l_lever * m.l_lever).sqrt(), epsilon = 1e-14);
        // β + α = 0, collinear
        let theta = m.beta + PI - m.phi;
        let g = spring_geometry(theta, &m).unwrap();
        assert_relative_eq!(g.l_s, (m.d - m.l_lever).abs(), epsilon = 1e-12);
    }

    #[test]
    fn spring_geometry_matches_hand_evaluation() {
        // Frozen from an independent evaluation of the geometry formulas
        // (numpy, default configuration, θ = 0.3).
        let m = mech();
        let g = spring_geometry(0.3, &m).unwrap();
        assert_relative_eq!(g.alpha, 1.1415926535897931, epsilon = 1e-14);
        assert_relative_eq!(g.l_s, 0.293884117159153, epsilon = 1e-13);
        assert_relative_eq!(g.s, m.l_s0 - 0.293884117159153 + m.s_0, epsilon = 1e-13);
    }

    #[test]
    fn non_finite_angle_is_a_domain_error() {
        assert!(matches!(spring_geometry(f64::NAN, &mech()), Err(Error::Domain(_))));
    }

    #[test]
    fn bar_torque_vanishes_at_vertical() {
        let m = mech();
        let g = spring_geometry(PI / 2.0, &m).unwrap();
        let q = m.beta + g.alpha;
        let spring = -m.k_s * g.s * m.l_lever * m.d / g.l_s * q.sin();
        assert_relative_eq!(reaction_torque(PI / 2.0, &m).unwrap(), spring, epsilon = 1e-12);
    }

    #[test]
    fn equilibrium_from_precompression() {
        let m = mech();
        assert!(reaction_torque(m.theta_e, &m).unwrap().abs() < 1e-12);
    }

    #[test]
    fn weightless_bar_relaxes_spring() {
        let mut m = mech();
        m.m_a = 0.0;
        let s0 = solve_precompression(&m, m.theta_e).unwrap();
        m.s_0 = s0;
        let g = spring_geometry(m.theta_e, &m).unwrap();
        assert!(g.s.abs() < 1e-15);
        assert_relative_eq!(s0, g.l_s - m.l_s0, epsilon = 1e-15);
    }

    #[test]
    fn doubling_mass_doubles_spring_torque_at_equilibrium() {
        let m1 = mech();
        let mut m2 = m1;
        m2.m_a *= 2.0;
        m2.s_0 = solve_precompression(&m2, m2.theta_e).unwrap();
        let spring = |m: &BarrierMechanics| {
            let g = spring_geometry(m.theta_e, m).unwrap();
            -m.k_s * g.s * m.l_lever * m.d / g.l_s * (m.beta + g.alpha).sin()
        };
        assert_relative_eq!(spring(&m2), 2.0 * spring(&m1), max_relative = 1e-12);
    }

    #[test]
    fn single_zero_crossing_over_working_range() {
        let m = mech();
        let n = 20_000;
        let mut changes = Vec::new();
        let mut prev = reaction_torque(0.0, &m).unwrap();
        assert!(prev > 0.0);
        for k in 1..=n {
            let th = PI / 2.0 * k as f64 / n as f64;
            let v = reaction_torque(th, &m).unwrap();
            if v.signum() != prev.signum() && v != 0.0 {
                changes.push(th);
            }
            if v != 0.0 {
                prev = v;
            }
        }
        assert_eq!(changes.len(), 1, "{changes:?}");
        assert!((changes[0] - m.theta_e).abs() < 1e-3);
    }

    #[test]
    fn damping_closed_forms() {
        let mut m = mech();
        let theta = m.beta + PI - m.phi - PI / 2.0;
        let expect = m.b_s * m.l_lever * m.d / (m.d * m.d + m.l_lever * m.l_lever).sqrt();
        assert_relative_eq!(nonlinear_damping(theta, &m).unwrap(), expect, epsilon = 1e-12);
        m.b_s = 0.0;
        for k in 0..10 {
            assert_eq!(nonlinear_damping(0.15 * k as f64, &m).unwrap(), 0.0);
        }
    }

    #[test]
    fn damping_matches_hand_evaluation() {
        // numpy oracle, default configuration
        let m = mech();
        assert_relative_eq!(nonlinear_damping(0.3, &m).unwrap(), 19.88227823181355, max_relative = 1e-12);
        assert_relative_eq!(nonlinear_damping(1.2, &m).unwrap(), 11.987892970072945, max_relative = 1e-12);
    }

    #[test]
    fn load_torque_cases() {
        let p = PlantParams::default();
        let th_m = 300.0;
        let tr = reaction_torque(p.trans.n_g * th_m, &p.mech).unwrap() * p.trans.n_g / p.trans.eta;
        assert_eq!(load_torque(th_m, 0.0, &p).unwrap(), tr);

        let mut q = p;
        q.trans.tau_c = 0.0;
        let th_e = q.motor_angle(q.mech.theta_e);
        assert!(load_torque(th_e, 5.0, &q).unwrap().abs() < 1e-12);

        let w = 40.0 * p.omega_eps;
        let hard = tr + p.trans.tau_c;
        assert!((load_torque(th_m, w, &p).unwrap() - hard).abs() <= 1e-6 * p.trans.tau_c);
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let mut p = PlantParams::default();
        p.trans.tau_c = 0.0;
        let x = State::at_rest(p.mech.theta_e, &p).to_vector();
        let dx = dynamics(&x, 0.0, &p).unwrap();
        assert!(dx.norm() < 1e-12, "{dx}");
    }

    #[test]
    fn origin_substitution() {
        let p = PlantParams::default();
        let u = 7.5;
        let dx = dynamics(&Vector3::zeros(), u, &p).unwrap();
        assert_relative_eq!(dx[0], u / p.motor.l_a, max_relative = 1e-15);
        assert_eq!(dx[1], 0.0);
        let tl = load_torque(0.0, 0.0, &p).unwrap();
        assert_relative_eq!(dx[2], -tl / p.total_inertia(), max_relative = 1e-14);
    }

    #[test]
    fn inertia_and_damping_positive() {
        let p = PlantParams::default();
        assert!(p.total_inertia() > 0.0);
        for k in 0..=100 {
            let th = PI / 2.0 * k as f64 / 100.0;
            assert!(p.total_damping(p.motor_angle(th)).unwrap() > 0.0);
        }
    }

    #[test]
    fn geometry_guard_rejects_degenerate_layout() {
        let mut p = PlantParams::default();
        p.mech.d = p.mech.l_lever;
        // collinear configuration inside [0, π/2]
        p.mech.phi = p.mech.beta + PI - 0.5;
        assert!(matches!(p.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn json_round_trip_and_precompression_recompute() {
        let p = PlantParams::default();
        let text = serde_json::to_string(&p).unwrap();
        for key in ["\"R_a\"", "\"L_a\"", "\"N_g\"", "\"J_mg\"", "\"tau_c\"", "\"l_lever\"", "\"omega_eps\""] {
            assert!(text.contains(key), "{key}");
        }
        let back: PlantParams = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);

        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v.as_object_mut().unwrap().remove("s_0");
        let recomputed: PlantParams = serde_json::from_value(v).unwrap();
        assert_relative_eq!(recomputed.mech.s_0, p.mech.s_0, epsilon = 1e-15);
    }

    #[test]
    fn invalid_efficiency_rejected() {
        let mut doc = PlantParamsDoc::from(PlantParams::default());
        doc.eta = 1.5;
        assert!(PlantParams::try_from(doc).is_err());
    }

    proptest::proptest! {
        #[test]
        fn jacobian_matches_central_differences(
            i_a in -12.0f64..12.0,
            theta in 0.0f64..1.57,
            omega in -400.0f64..400.0,
        ) {
            let p = PlantParams::default();
            let x = Vector3::new(i_a, p.motor_angle(theta), omega);
            let (a, b) = dynamics_jacobian(&x, &p).unwrap();
            for c in 0..3 {
                let h = 1e-5 * x[c].abs().max(1.0);
                let (mut xp, mut xm) = (x, x);
                xp[c] += h;
                xm[c] -= h;
                let fd = (dynamics(&xp, 3.0, &p).unwrap() - dynamics(&xm, 3.0, &p).unwrap()) / (2.0 * h);
                proptest::prop_assert!((fd - a.column(c)).norm() <= 1e-6 * a.column(c).norm().max(1e-12));
            }
            let fd = (dynamics(&x, 3.5, &p).unwrap() - dynamics(&x, 2.5, &p).unwrap()) / 1.0;
            proptest::prop_assert!((fd - b).norm() <= 1e-9 * b.norm());
        }
    }
}
