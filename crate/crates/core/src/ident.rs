//! ARX identification of the gearmotor with an acquisition delay, and grid
//! calibration of Coulomb friction and spring damping against a log.
//!
//! Sample convention: `u[k]` is the voltage held on `(t_{k-1}, t_k]` and
//! `y[k]` is the signal measured at `t_k − Δ`. With this convention a
//! first-order system `ẏ = −a y + g a u` satisfies
//! `y[k+1] = Φ y[k] + Γ0 u[k+1] + Γ1 u[k]`.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::drive::DriveParams;
use crate::error::{Error, Result};
use crate::integrators::{rk4_step, Trajectory};
use crate::plant::{dynamics, PlantParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionParams {
    pub t_s: f64,
    #[serde(rename = "Delta")]
    pub delta: f64,
    pub n: usize,
}

impl AcquisitionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_s > 0.0 && self.t_s.is_finite()) {
            return Err(Error::Config(format!("sampling period {} must be positive", self.t_s)));
        }
        if !(self.delta >= 0.0 && self.delta < self.t_s) {
            return Err(Error::Config(format!(
                "acquisition delay {} outside [0, t_s = {})",
                self.delta, self.t_s
            )));
        }
        if self.n < 3 {
            return Err(Error::Config(format!("need at least 3 samples, got {}", self.n)));
        }
        Ok(())
    }
}

/// Coefficients of `y[k+1] = Φ y[k] + Γ0 u[k+1] + Γ1 u[k]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArxFit {
    pub phi: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub residual_rms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectricalEstimate {
    pub r_a: f64,
    pub l_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanicalEstimate {
    pub b_mg: f64,
    pub j_mg: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub warning: Option<String>,
}

/// Least-squares fit of the delayed first-order ARX structure.
pub fn fit_arx(u: &[f64], y: &[f64]) -> Result<ArxFit> {
    if u.len() != y.len() {
        return Err(Error::Domain(format!(
            "input has {} samples, output has {}",
            u.len(),
            y.len()
        )));
    }
    if u.len() < 3 {
        return Err(Error::Domain(format!("need at least 3 samples, got {}", u.len())));
    }
    if u.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite identification sample".into()));
    }
    let m = u.len() - 1;
    let a = DMatrix::from_fn(m, 3, |r, c| match c {
        0 => y[r],
        1 => u[r + 1],
        _ => u[r],
    });
    let b = DVector::from_fn(m, |r, _| y[r + 1]);

    // scale columns so the rank test is unit-independent
    let norms: Vec<f64> = (0..3).map(|c| a.column(c).norm()).collect();
    if norms.contains(&0.0) {
        return Err(Error::Identifiability("regressor has an all-zero column".into()));
    }
    let scaled = DMatrix::from_fn(m, 3, |r, c| a[(r, c)] / norms[c]);
    let svd = scaled.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if m < 3 || smin <= 1e-10 * smax {
        return Err(Error::Identifiability(format!(
            "regressor is rank deficient (singular values {:?})",
            svd.singular_values.as_slice()
        )));
    }
    let theta = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::Numerical(format!("least squares: {e}")))?;
    let phi = theta[0] / norms[0];
    let gamma0 = theta[1] / norms[1];
    let gamma1 = theta[2] / norms[2];
    let ss: f64 = (0..m)
        .map(|r| (y[r + 1] - phi * y[r] - gamma0 * u[r + 1] - gamma1 * u[r]).powi(2))
        .sum();
    Ok(ArxFit { phi, gamma0, gamma1, residual_rms: (ss / m as f64).sqrt() })
}

fn check_fit(fit: &ArxFit) -> Result<()> {
    if !(fit.phi > 0.0 && fit.phi < 1.0) {
        return Err(Error::NonPhysical(format!("pole Φ = {} outside (0, 1)", fit.phi)));
    }
    if !(fit.gamma0 + fit.gamma1 > 0.0) {
        return Err(Error::NonPhysical(format!(
            "static gain numerator Γ0 + Γ1 = {} is not positive",
            fit.gamma0 + fit.gamma1
        )));
    }
    Ok(())
}

/// Recovers `R_a`, `L_a` from a locked-rotor current fit.
pub fn electrical_params(fit: &ArxFit, acq: &AcquisitionParams) -> Result<ElectricalEstimate> {
    check_fit(fit)?;
    let r_a = (1.0 - fit.phi) / (fit.gamma0 + fit.gamma1);
    let l_a = -r_a * acq.t_s / fit.phi.ln();
    Ok(ElectricalEstimate { r_a, l_a })
}

/// Recovers `b_mg`, `J_mg` from a speed fit given `k_t` and `R_a`.
pub fn mechanical_params(
    fit: &ArxFit,
    acq: &AcquisitionParams,
    k_t: f64,
    r_a: f64,
) -> Result<MechanicalEstimate> {
    check_fit(fit)?;
    if !(k_t > 0.0 && r_a > 0.0) {
        return Err(Error::Domain(format!("k_t = {k_t} and R_a = {r_a} must be positive")));
    }
    let b_mg = (k_t * (1.0 - fit.phi) / (fit.gamma0 + fit.gamma1) - k_t * k_t) / r_a;
    let j_mg = -(b_mg * r_a + k_t * k_t) * acq.t_s / (r_a * fit.phi.ln());
    let warning = (b_mg < 0.0).then(|| format!("negative viscous friction estimate b_mg = {b_mg}"));
    Ok(MechanicalEstimate { b_mg, j_mg, warning })
}

/// Exact ARX coefficients of `ẏ = −a (y − g u)` sampled with delay `Δ`.
pub fn first_order_coefficients(a: f64, gain: f64, acq: &AcquisitionParams) -> ArxFit {
    let phi = (-a * acq.t_s).exp();
    let mid = (-a * (acq.t_s - acq.delta)).exp();
    ArxFit { phi, gamma0: gain * (1.0 - mid), gamma1: gain * (mid - phi), residual_rms: 0.0 }
}

pub fn electrical_coefficients(r_a: f64, l_a: f64, acq: &AcquisitionParams) -> ArxFit {
    first_order_coefficients(r_a / l_a, 1.0 / r_a, acq)
}

pub fn mechanical_coefficients(
    b_mg: f64,
    j_mg: f64,
    k_t: f64,
    r_a: f64,
    acq: &AcquisitionParams,
) -> ArxFit {
    let den = b_mg * r_a + k_t * k_t;
    first_order_coefficients(den / (j_mg * r_a), k_t / den, acq)
}

/// Pseudo-random binary excitation: `±amplitude` with a level held for a
/// random run of 1..=`max_run` samples. The first sample is zero (at rest).
pub fn prbs_input(n: usize, amplitude: f64, max_run: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    out.push(0.0);
    let mut level = amplitude;
    while out.len() < n {
        let run = rng.random_range(1..=max_run.max(1));
        for _ in 0..run {
            if out.len() == n {
                break;
            }
            out.push(level);
        }
        if rng.random_bool(0.5) {
            level = -level;
        }
    }
    out
}

/// Samples of a first-order system started at rest, computed exactly with
/// the delayed ZOH recursion, plus optional Gaussian measurement noise.
pub fn synth_first_order(
    coeffs: &ArxFit,
    u: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Vec<f64> {
    let mut y = vec![0.0; u.len()];
    for k in 1..u.len() {
        y[k] = coeffs.phi * y[k - 1] + coeffs.gamma0 * u[k] + coeffs.gamma1 * u[k - 1];
    }
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut y {
            *v += noise_sigma * gaussian(&mut rng);
        }
    }
    y
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Locked-rotor current record for the given motor.
pub fn synth_locked_rotor(
    p: &PlantParams,
    acq: &AcquisitionParams,
    u: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Vec<f64> {
    synth_first_order(&electrical_coefficients(p.motor.r_a, p.motor.l_a, acq), u, noise_sigma, seed)
}

/// Delayed speed record of the unloaded gearmotor with negligible inductance.
pub fn synth_speed(
    p: &PlantParams,
    acq: &AcquisitionParams,
    u: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Vec<f64> {
    let c = mechanical_coefficients(p.trans.b_mg, p.trans.j_mg, p.motor.k_t, p.motor.r_a, acq);
    synth_first_order(&c, u, noise_sigma, seed)
}

/// Speed record from RK4 integration of
/// `J ω̇ = −b ω + k_t (u − k_t ω)/R_a` with `substeps` steps per sample;
/// `Δ` must be a whole number of steps.
pub fn simulate_reduced_motor(
    p: &PlantParams,
    acq: &AcquisitionParams,
    u: &[f64],
    substeps: usize,
) -> Result<Vec<f64>> {
    acq.validate()?;
    let h = acq.t_s / substeps as f64;
    let lag = acq.delta / h;
    if (lag - lag.round()).abs() > 1e-9 {
        return Err(Error::Config(format!("delay {} is not a multiple of the step {h}", acq.delta)));
    }
    let lag = lag.round() as usize;
    let (k, r, b, j) = (p.motor.k_t, p.motor.r_a, p.trans.b_mg, p.trans.j_mg);
    let f = |x: &nalgebra::Vector1<f64>, v: &f64| {
        Ok(nalgebra::Vector1::new((-b * x[0] + k * (v - k * x[0]) / r) / j))
    };
    // fine-grid history of ω, index m ↔ time m·h
    let mut hist = vec![0.0];
    let mut x = nalgebra::Vector1::new(0.0);
    for &uk in u.iter().skip(1) {
        for _ in 0..substeps {
            x = rk4_step(&f, &x, &uk, h)?;
            hist.push(x[0]);
        }
    }
    Ok((0..u.len())
        .map(|kk| {
            let m = kk * substeps;
            if m >= lag { hist[m - lag] } else { 0.0 }
        })
        .collect())
}

/// Grid over Coulomb friction and spring damping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationGrid {
    pub tau_c: Vec<f64>,
    pub b_s: Vec<f64>,
}

impl CalibrationGrid {
    /// `n` evenly spaced values per axis spanning `±rel` around the nominal.
    pub fn around(p: &PlantParams, rel: f64, n: usize) -> Self {
        let axis = |v: f64| -> Vec<f64> {
            if n <= 1 {
                return vec![v];
            }
            (0..n).map(|i| v * (1.0 - rel + 2.0 * rel * i as f64 / (n - 1) as f64)).collect()
        };
        CalibrationGrid { tau_c: axis(p.trans.tau_c), b_s: axis(p.mech.b_s) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub params: PlantParams,
    pub tau_c: f64,
    pub b_s: f64,
    pub objective: f64,
    /// Another grid point attains exactly the same objective.
    pub tie: bool,
    pub grid: CalibrationGrid,
    /// Objective per grid point, row-major in (`tau_c`, `b_s`); `null` if
    /// the simulation failed.
    pub objectives: Vec<Vec<Option<f64>>>,
    pub weighting: String,
}

pub const CALIBRATION_WEIGHTING: &str = "rms(i_a)/std(i_a) + rms(omega_m)/std(omega_m)";

const LOG_MAX_STEP: f64 = 5e-4;

/// Replays a duty-cycle log through the plant: the duty `inputs[k]` is held
/// on `[t_k, t_{k+1})` and converted to the averaged drive voltage with the
/// back-EMF sampled at `t_k`.
pub fn simulate_duty_log(
    p: &PlantParams,
    drv: &DriveParams,
    x0: Vector3<f64>,
    times: &[f64],
    duties: &[f64],
) -> Result<Trajectory> {
    if times.len() != duties.len() || times.is_empty() {
        return Err(Error::Domain("log times and duties must be non-empty and equal length".into()));
    }
    let mut x = x0;
    let mut traj = Trajectory { times: vec![], states: vec![], inputs: vec![] };
    for k in 0..times.len() {
        traj.times.push(times[k]);
        traj.states.push(x);
        traj.inputs.push(duties[k]);
        if k + 1 == times.len() {
            break;
        }
        let span = times[k + 1] - times[k];
        let steps = (span / LOG_MAX_STEP).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        let e_a = drv.clamp_bemf(p.bemf(x[2]));
        let v = drv.average_voltage(duties[k].clamp(0.0, 1.0), e_a)?;
        let f = |s: &Vector3<f64>, u: &f64| dynamics(s, *u, p);
        for _ in 0..steps {
            x = rk4_step(&f, &x, &v, h).map_err(|e| match e {
                Error::BlowUp { what, .. } => Error::BlowUp { t: times[k], what },
                other => other,
            })?;
        }
    }
    Ok(traj)
}

fn rms(a: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in a {
        s += v * v;
        n += 1;
    }
    (s / n.max(1) as f64).sqrt()
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len().max(1) as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Combined normalized RMS error between a simulated and a logged record.
pub fn calibration_objective(sim: &Trajectory, log: &Trajectory) -> f64 {
    let i_log: Vec<f64> = log.states.iter().map(|s| s[0]).collect();
    let w_log: Vec<f64> = log.states.iter().map(|s| s[2]).collect();
    let si = std_dev(&i_log).max(f64::MIN_POSITIVE);
    let sw = std_dev(&w_log).max(f64::MIN_POSITIVE);
    let ri = rms(sim.states.iter().zip(&log.states).map(|(a, b)| a[0] - b[0]));
    let rw = rms(sim.states.iter().zip(&log.states).map(|(a, b)| a[2] - b[2]));
    ri / si + rw / sw
}

/// Selects the `(τ_c, b_s)` grid point whose simulated response best matches
/// the log. Ties go to the first point in row-major order.
pub fn calibrate(
    params0: &PlantParams,
    drv: &DriveParams,
    log: &Trajectory,
    grid: &CalibrationGrid,
) -> Result<CalibrationResult> {
    if grid.tau_c.is_empty() || grid.b_s.is_empty() {
        return Err(Error::Config("calibration grid is empty".into()));
    }
    if log.len() < 2 {
        return Err(Error::Domain("calibration log needs at least two samples".into()));
    }
    let x0 = log.states[0];
    let mut objectives = Vec::with_capacity(grid.tau_c.len());
    let mut best: Option<(f64, usize, usize)> = None;
    let mut tie = false;
    for (a, &tc) in grid.tau_c.iter().enumerate() {
        let mut row = Vec::with_capacity(grid.b_s.len());
        for (b, &bs) in grid.b_s.iter().enumerate() {
            let mut p = *params0;
            p.trans.tau_c = tc;
            p.mech.b_s = bs;
            let obj = p
                .validate()
                .and_then(|_| simulate_duty_log(&p, drv, x0, &log.times, &log.inputs))
                .map(|sim| calibration_objective(&sim, log))
                .ok()
                .filter(|v| v.is_finite());
            if let Some(v) = obj {
                match best {
                    None => best = Some((v, a, b)),
                    Some((bv, _, _)) if v < bv => {
                        best = Some((v, a, b));
                        tie = false;
                    }
                    Some((bv, _, _)) if v == bv => tie = true,
                    _ => {}
                }
            }
            row.push(obj);
        }
        objectives.push(row);
    }
    let (objective, a, b) =
        best.ok_or_else(|| Error::Numerical("every calibration simulation failed".into()))?;
    let mut params = *params0;
    params.trans.tau_c = grid.tau_c[a];
    params.mech.b_s = grid.b_s[b];
    Ok(CalibrationResult {
        params,
        tau_c: grid.tau_c[a],
        b_s: grid.b_s[b],
        objective,
        tie,
        grid: grid.clone(),
        objectives,
        weighting: CALIBRATION_WEIGHTING.to_string(),
    })
}

/// Duty staircase: `levels[j]` held for `hold` seconds each, sampled every `t_s`.
pub fn staircase(levels: &[f64], hold: f64, t_s: f64) -> (Vec<f64>, Vec<f64>) {
    let per = (hold / t_s).round().max(1.0) as usize;
    let n = per * levels.len() + 1;
    let times: Vec<f64> = (0..n).map(|k| k as f64 * t_s).collect();
    let duties: Vec<f64> = (0..n).map(|k| levels[(k / per).min(levels.len() - 1)]).collect();
    (times, duties)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn acq() -> AcquisitionParams {
        AcquisitionParams { t_s: 0.001, delta: 0.0002, n: 400 }
    }

    #[test]
    fn exact_arx_data_is_recovered() {
        let c = ArxFit { phi: 0.8, gamma0: 0.3, gamma1: -0.05, residual_rms: 0.0 };
        let u = prbs_input(300, 2.0, 5, 1);
        let y = synth_first_order(&c, &u, 0.0, 0);
        let f = fit_arx(&u, &y).unwrap();
        assert!((f.phi - c.phi).abs() < 1e-10);
        assert!((f.gamma0 - c.gamma0).abs() < 1e-10);
        assert!((f.gamma1 - c.gamma1).abs() < 1e-10);
        assert!(f.residual_rms <= 1e-10);
    }

    #[test]
    fn constant_data_is_not_identifiable() {
        let u = vec![1.0; 50];
        let y = vec![2.0; 50];
        assert!(matches!(fit_arx(&u, &y), Err(Error::Identifiability(_))));
        assert!(matches!(fit_arx(&[1.0, 2.0], &[0.0, 1.0]), Err(Error::Domain(_))));
        assert!(matches!(fit_arx(&[1.0; 4], &[0.0; 5]), Err(Error::Domain(_))));
    }

    #[test]
    fn paper_example_electrical() {
        let a = AcquisitionParams { t_s: 0.001, delta: 0.0002, n: 100 };
        let c = electrical_coefficients(2.0, 0.02, &a);
        assert_relative_eq!(c.phi, (-0.1f64).exp(), max_relative = 1e-15);
        let e = electrical_params(&c, &a).unwrap();
        assert_relative_eq!(e.r_a, 2.0, max_relative = 1e-9);
        assert_relative_eq!(e.l_a, 0.02, max_relative = 1e-9);
    }

    #[test]
    fn delay_free_limit() {
        let a = AcquisitionParams { t_s: 0.001, delta: 0.0, n: 100 };
        let c = electrical_coefficients(2.0, 0.02, &a);
        assert_eq!(c.gamma1, 0.0);
        assert_relative_eq!(c.gamma0, (1.0 - (-0.1f64).exp()) / 2.0, max_relative = 1e-15);
    }

    #[test]
    fn synthetic_zoh_delay_data_matches_closed_forms() {
        let p = PlantParams::default();
        let a = acq();
        let u = prbs_input(a.n, 12.0, 8, 7);
        let y = synth_locked_rotor(&p, &a, &u, 0.0, 0);
        let f = fit_arx(&u, &y).unwrap();
        let c = electrical_coefficients(p.motor.r_a, p.motor.l_a, &a);
        assert!((f.phi - c.phi).abs() < 1e-8);
        assert!((f.gamma0 - c.gamma0).abs() < 1e-8);
        assert!((f.gamma1 - c.gamma1).abs() < 1e-8);
    }

    #[test]
    fn non_physical_fits_rejected() {
        let a = acq();
        for phi in [0.0, -0.2, 1.0, 1.3] {
            let f = ArxFit { phi, gamma0: 0.1, gamma1: 0.1, residual_rms: 0.0 };
            assert!(matches!(electrical_params(&f, &a), Err(Error::NonPhysical(_))));
        }
        let f = ArxFit { phi: 0.5, gamma0: -0.1, gamma1: 0.05, residual_rms: 0.0 };
        assert!(matches!(mechanical_params(&f, &a, 0.06, 1.0), Err(Error::NonPhysical(_))));
    }

    #[test]
    fn zero_viscous_friction_boundary() {
        let a = acq();
        let c = mechanical_coefficients(0.0, 2e-4, 0.06, 1.0, &a);
        let m = mechanical_params(&c, &a, 0.06, 1.0).unwrap();
        assert!(m.b_mg.abs() < 1e-9);
        assert_relative_eq!(m.j_mg, 2e-4, max_relative = 1e-9);
    }

    #[test]
    fn negative_friction_warns() {
        let a = acq();
        let c = mechanical_coefficients(-1e-4, 2e-4, 0.06, 1.0, &a);
        let m = mechanical_params(&c, &a, 0.06, 1.0).unwrap();
        assert!(m.warning.is_some());
    }

    #[test]
    fn end_to_end_reduced_motor() {
        let p = PlantParams::default();
        let a = AcquisitionParams { t_s: 0.002, delta: 0.0004, n: 600 };
        let u = prbs_input(a.n, 10.0, 30, 3);
        let y = simulate_reduced_motor(&p, &a, &u, 50).unwrap();
        let f = fit_arx(&u, &y).unwrap();
        let m = mechanical_params(&f, &a, p.motor.k_t, p.motor.r_a).unwrap();
        assert_relative_eq!(m.b_mg, p.trans.b_mg, max_relative = 1e-6);
        assert_relative_eq!(m.j_mg, p.trans.j_mg, max_relative = 1e-6);
    }

    #[test]
    fn noise_error_scales_linearly() {
        let p = PlantParams::default();
        let a = acq();
        let u = prbs_input(a.n, 12.0, 8, 11);
        let mean_err = |sigma: f64| {
            let mut acc = 0.0;
            for seed in 0..40 {
                let y = synth_locked_rotor(&p, &a, &u, sigma, 100 + seed);
                let e = electrical_params(&fit_arx(&u, &y).unwrap(), &a).unwrap();
                acc += ((e.r_a - p.motor.r_a) / p.motor.r_a).abs();
            }
            acc / 40.0
        };
        let (e1, e2) = (mean_err(1e-4), mean_err(1e-3));
        let ratio = e2 / e1;
        assert!((5.0..20.0).contains(&ratio), "{e1} {e2} {ratio}");
    }

    #[test]
    fn calibration_recovers_true_point() {
        let truth = PlantParams::default();
        let drv = DriveParams::default();
        let (times, duties) = staircase(&[0.3, 0.5, 0.7], 0.2, 0.005);
        let x0 = Vector3::new(0.0, 0.0, 0.0);
        let log = simulate_duty_log(&truth, &drv, x0, &times, &duties).unwrap();
        let mut p0 = truth;
        p0.trans.tau_c *= 1.3;
        p0.mech.b_s *= 0.8;
        let grid = CalibrationGrid {
            tau_c: vec![0.06, 0.07, truth.trans.tau_c, 0.09],
            b_s: vec![150.0, truth.mech.b_s, 250.0],
        };
        let r = calibrate(&p0, &drv, &log, &grid).unwrap();
        assert_eq!(r.tau_c, truth.trans.tau_c);
        assert_eq!(r.b_s, truth.mech.b_s);
        assert_eq!(r.objective, 0.0);
        assert!(!r.tie);
    }

    #[test]
    fn calibration_tie_takes_first() {
        let p = PlantParams::default();
        let drv = DriveParams::default();
        let (times, duties) = staircase(&[0.4, 0.6], 0.05, 0.005);
        let log = simulate_duty_log(&p, &drv, Vector3::zeros(), &times, &duties).unwrap();
        let grid = CalibrationGrid { tau_c: vec![0.05; 3], b_s: vec![120.0; 2] };
        let r = calibrate(&p, &drv, &log, &grid).unwrap();
        assert!(r.tie);
        assert_eq!((r.tau_c, r.b_s), (0.05, 120.0));
        let empty = CalibrationGrid { tau_c: vec![], b_s: vec![1.0] };
        assert!(matches!(calibrate(&p, &drv, &log, &empty), Err(Error::Config(_))));
    }

    #[test]
    fn staircase_speed_steps_are_monotone() {
        let p = PlantParams::default();
        let drv = DriveParams::default();
        let hold = 0.25;
        let ts = 0.005;
        let (times, duties) = staircase(&[0.3, 0.4, 0.5, 0.6], hold, ts);
        let x0 = crate::plant::State::at_rest(0.0, &p).to_vector();
        let log = simulate_duty_log(&p, &drv, x0, &times, &duties).unwrap();
        let per = (hold / ts).round() as usize;
        let ends: Vec<f64> = (1..=4).map(|j| log.states[j * per][2]).collect();
        assert!(ends.windows(2).all(|w| w[1] > w[0]), "{ends:?}");
        assert!(ends[0] > 0.0);
    }

    proptest! {
        #[test]
        fn electrical_round_trip(r in 0.2f64..10.0, tau in 5e-4f64..0.05, dfrac in 0.0f64..0.95) {
            let a = AcquisitionParams { t_s: 0.001, delta: 0.001 * dfrac, n: 10 };
            let l = r * tau;
            let e = electrical_params(&electrical_coefficients(r, l, &a), &a).unwrap();
            prop_assert!(((e.r_a - r) / r).abs() < 1e-9);
            prop_assert!(((e.l_a - l) / l).abs() < 1e-9);
        }

        #[test]
        fn mechanical_round_trip(
            b in 1e-6f64..1e-3, j in 1e-5f64..1e-3, k in 0.01f64..0.2, r in 0.3f64..5.0,
            dfrac in 0.0f64..0.95,
        ) {
            let a = AcquisitionParams { t_s: 0.002, delta: 0.002 * dfrac, n: 10 };
            let m = mechanical_params(&mechanical_coefficients(b, j, k, r, &a), &a, k, r).unwrap();
            prop_assert!(((m.b_mg - b) / b).abs() < 1e-9 || (m.b_mg - b).abs() < 1e-12);
            prop_assert!(((m.j_mg - j) / j).abs() < 1e-9);
        }

        #[test]
        fn amplitude_scaling_invariance(scale in 0.1f64..50.0, seed in 0u64..100) {
            let p = PlantParams::default();
            let a = acq();
            let u = prbs_input(200, 5.0, 6, seed);
            let y = synth_locked_rotor(&p, &a, &u, 0.0, 0);
            let us: Vec<f64> = u.iter().map(|v| v * scale).collect();
            let ys: Vec<f64> = y.iter().map(|v| v * scale).collect();
            let e1 = electrical_params(&fit_arx(&u, &y).unwrap(), &a).unwrap();
            let e2 = electrical_params(&fit_arx(&us, &ys).unwrap(), &a).unwrap();
            prop_assert!(((e1.r_a - e2.r_a) / e1.r_a).abs() < 1e-9);
            prop_assert!(((e1.l_a - e2.l_a) / e1.l_a).abs() < 1e-9);
        }
    }
}
