//! Acceptance run: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails.

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use barrier_core::closedloop::{
    decay_envelope_slope, mismatch_violations, run_closed_loop, run_feedforward, ControllerConfig, Disturbance,
    PlantPerturbation,
};
use barrier_core::drive::verify::psi_grid_max;
use barrier_core::drive::{certify_sine_polynomial, verify_psi_bound, DriveParams, MISMATCH_BOUND};
use barrier_core::ident::{
    electrical_coefficients, electrical_params, fit_arx, mechanical_coefficients, mechanical_params, prbs_input,
    synth_first_order, AcquisitionParams,
};
use barrier_core::integrators::rk4_step;
use barrier_core::lmisyn::hinf::registry;
use barrier_core::lmisyn::{
    build_error_model, is_monotone, synthesize, synthesize_robust, tradeoff_curve, ErrorModel, RegionSpec,
};
use barrier_core::plant::{dynamics, dynamics_jacobian, PlantParams};
use barrier_core::trajopt::{
    ocp_constraints, resimulate, shoot, solve_ocp, OcpConfig, PlannedTrajectory, TERMINAL_PSI_ROWS,
};
use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn psi_certificate() -> Outcome {
    let tol = 1e-4;
    let t = Instant::now();
    let cert = match verify_psi_bound(tol) {
        Ok(c) => c,
        Err(e) => return outcome(false, format!("verification failed: {e}")),
    };
    let secs = t.elapsed().as_secs_f64();
    let grid = psi_grid_max(&DriveParams::default(), 2000).unwrap_or(f64::NAN);
    let pass = cert.sup_bound < MISMATCH_BOUND && secs <= 60.0 && grid <= cert.sup_bound && cert.sup_bound - grid <= tol;
    outcome(pass, format!("sup|Psi| <= {:.6} ({} boxes, {secs:.1} s), 2000x2000 grid max {grid:.6}", cert.sup_bound, cert.boxes_processed))
}

fn sine_polynomial() -> Outcome {
    match certify_sine_polynomial(1e-6) {
        Ok(c) => outcome(
            c.max_lower > 0.0199 && c.max_upper <= 0.02002 && c.nonnegative,
            format!("max in [{:.6}, {:.6}], nonnegative {}", c.max_lower, c.max_upper, c.nonnegative),
        ),
        Err(e) => outcome(false, format!("{e}")),
    }
}

fn inversion_round_trip() -> Outcome {
    let d = DriveParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut violations = 0;
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let ea = rng.random_range(0.0..d.peak() * (1.0 - 1e-9));
        let ext = d.duty_extrema(ea).unwrap();
        let u = rng.random_range(ext.u_min..=ext.u_max);
        let delta = d.invert(u, ea).unwrap().delta;
        let err = (d.average_voltage(delta, ea).unwrap() - u).abs() / ext.range();
        worst = worst.max(err);
        violations += (err > MISMATCH_BOUND) as usize;
    }
    outcome(violations == 0, format!("{violations} violations, worst per-unit error {worst:.6}"))
}

/// Composite 5-point Gauss-Legendre rule.
fn gauss(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    const X: [f64; 5] = [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664];
    const W: [f64; 5] = [0.568_888_888_888_888_9, 0.478_628_670_499_366_5, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1, 0.236_926_885_056_189_1];
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let m = a + (k as f64 + 0.5) * h;
            X.iter().zip(&W).map(|(x, w)| w * f(m + 0.5 * h * x)).sum::<f64>() * 0.5 * h
        })
        .sum()
}

fn averaging_oracle() -> Outcome {
    let d = DriveParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let delta: f64 = rng.random_range(0.0..=1.0);
        let ea = rng.random_range(0.0..d.peak() * (1.0 - 1e-9));
        let t_sw = (1.0 - delta) * d.period;
        let on = gauss(|t| d.peak() * (PI * t / d.period).sin(), t_sw, d.period, 64);
        let quad = (ea * t_sw + on) / d.period;
        worst = worst.max((quad - d.average_voltage(delta, ea).unwrap()).abs());
    }
    outcome(worst <= 1e-10, format!("largest deviation from quadrature {worst:.2e} V on 50 points"))
}

fn identification() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for draw in 0..100u64 {
        let r_a = rng.random_range(0.3..5.0);
        let l_a = rng.random_range(5e-4..2e-2);
        let k_t = rng.random_range(0.01..0.2);
        let b_mg = rng.random_range(1e-5..2e-3);
        let j_mg = rng.random_range(2e-5..2e-3);
        let t_s = 1e-3;
        let acq = AcquisitionParams { t_s, delta: rng.random_range(0.0..0.9) * t_s, n: 2000 };
        let u = prbs_input(acq.n, 12.0, 20, draw);
        let el = fit_arx(&u, &synth_first_order(&electrical_coefficients(r_a, l_a, &acq), &u, 0.0, 0))
            .and_then(|f| electrical_params(&f, &acq));
        let me = fit_arx(&u, &synth_first_order(&mechanical_coefficients(b_mg, j_mg, k_t, r_a, &acq), &u, 0.0, 0))
            .and_then(|f| mechanical_params(&f, &acq, k_t, r_a));
        match (el, me) {
            (Ok(e), Ok(m)) => {
                for (est, truth) in [(e.r_a, r_a), (e.l_a, l_a), (m.b_mg, b_mg), (m.j_mg, j_mg)] {
                    worst = worst.max(((est - truth) / truth).abs());
                }
            }
            _ => failures += 1,
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        failures == 0 && worst <= 1e-6 && secs <= 10.0,
        format!("100 draws, worst relative error {worst:.2e}, {failures} failed fits, {secs:.2} s"),
    )
}

fn lmi_synthesis() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let estimators = registry();
    let mut bad = Vec::new();
    for i in 0..50 {
        let a = [[rng.random_range(-5.0..5.0), rng.random_range(0.2..5.0)], [rng.random_range(-50.0..50.0), rng.random_range(-100.0..10.0)]];
        let model = ErrorModel { a, b: [0.0, -rng.random_range(1.0..1000.0)], e: [0.0, rng.random_range(1.0..1e4)], c: [0.0, 1.0] };
        if model.check_controllable().is_err() {
            bad.push(format!("model {i} not controllable"));
            continue;
        }
        let alpha = rng.random_range(0.0..20.0);
        let region = RegionSpec { alpha, rho: Some(alpha + rng.random_range(1.0..100.0)), theta: rng.random_range(0.0..=FRAC_PI_2) };
        let r = match synthesize(&model, &region) {
            Ok(r) if r.is_feasible() => r,
            Ok(r) => {
                bad.push(format!("model {i} infeasible: {:?}", r.message));
                continue;
            }
            Err(e) => {
                bad.push(format!("model {i}: {e}"));
                continue;
            }
        };
        let (k, gamma) = (r.k.unwrap(), r.gamma.unwrap());
        let acl = model.closed_loop(k);
        let eigs: Vec<[f64; 2]> = acl.complex_eigenvalues().iter().map(|l| [l.re, l.im]).collect();
        if !region.contains_all(&eigs) {
            bad.push(format!("model {i}: eigenvalues {eigs:?} outside region"));
        }
        let a = DMatrix::from_iterator(2, 2, acl.iter().copied());
        let (e, c) = (DVector::from_row_slice(&model.e), DVector::from_row_slice(&model.c));
        for est in &estimators {
            match est.estimate(&a, &e, &c) {
                Ok(h) if h <= gamma * (1.0 + 1e-6) => {}
                other => bad.push(format!("model {i}: {} estimate {other:?} vs gamma {gamma}", est.name())),
            }
        }
    }
    let p = PlantParams::default();
    let m = build_error_model(&p, p.mech.theta_e).unwrap();
    let alphas = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0];
    let curve = tradeoff_curve(&m, PI / 6.0, Some(60.0), &alphas).unwrap();
    let all_feasible = curve.iter().all(|c| c.gamma.is_some());
    let monotone = all_feasible && is_monotone(&curve, 1e-6);
    let secs = t.elapsed().as_secs_f64();
    let pass = bad.is_empty() && monotone && secs <= 30.0;
    let mut detail = format!("50 random models, {} problems; 8-point gamma(alpha) monotone {monotone}; {secs:.1} s", bad.len());
    if let Some(first) = bad.first() {
        detail.push_str(&format!("; first: {first}"));
    }
    outcome(pass, detail)
}

fn robust_vertices(plan: &PlannedTrajectory) -> Outcome {
    let p = PlantParams::default();
    let drv = DriveParams::default();
    let m = build_error_model(&p, p.mech.theta_e).unwrap();
    let region = RegionSpec { alpha: 10.0, rho: Some(60.0), theta: PI / 6.0 };
    let vertices = m.vertices(0.2);
    let r = match synthesize_robust(&vertices, &region, &m) {
        Ok(r) if r.is_feasible() => r,
        other => return outcome(false, format!("robust synthesis failed: {other:?}")),
    };
    let k = r.k.unwrap();
    let mut lines = Vec::new();
    let mut pass = true;
    for v in &vertices {
        let abscissa = v.closed_loop(k).complex_eigenvalues().iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
        let run = PlantPerturbation::matching(&p, p.mech.theta_e, v).and_then(|pert| {
            let ctrl = ControllerConfig { k, ..ControllerConfig::default() };
            run_closed_loop(&p, &drv, plan, &ctrl, &Disturbance::None, &pert)
        });
        match run {
            Ok(run) => {
                let ratio = run.metrics.terminal_omega.abs() / run.metrics.peak_omega;
                pass &= abscissa < 0.0 && ratio <= 0.05;
                lines.push(format!("{abscissa:.1}/{ratio:.3}"));
            }
            Err(e) => {
                pass = false;
                lines.push(format!("{e}"));
            }
        }
    }
    outcome(pass, format!("K = [{:.3}, {:.4}]; per vertex max Re(lambda)/terminal-to-peak speed: {}", k[0], k[1], lines.join(", ")))
}

fn ocp_default() -> (Outcome, Option<PlannedTrajectory>) {
    let p = PlantParams::default();
    let drv = DriveParams::default();
    let cfg = OcpConfig::default();
    let t = Instant::now();
    let plan = match solve_ocp(&p, &drv, &cfg) {
        Ok(plan) => plan,
        Err(e) => return (outcome(false, format!("N=500: {e}")), None),
    };
    let secs = t.elapsed().as_secs_f64();
    let resim = resimulate(&p, &plan, 4).unwrap_or(f64::INFINITY);
    let theta_end = p.load_angle(plan.states.last().unwrap()[1]);
    let n = plan.v.len();
    let mut defect = 0.0f64;
    let mut psi = f64::NEG_INFINITY;
    for k in 0..=n {
        let x = plan.states[k];
        let eps = plan.eps[k.min(n - 1)];
        let rows = ocp_constraints(&x, eps, p.bemf(x[2]), &drv, &cfg).unwrap();
        if k < n {
            psi = psi.max(rows.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            let (end, _) = shoot(&p, &x, plan.v[k], plan.t_s, plan.substeps).unwrap();
            for c in 0..4 {
                defect = defect.max((end[c] - plan.states[k + 1][c]).abs());
            }
        } else {
            psi = psi.max(TERMINAL_PSI_ROWS.iter().map(|&r| rows[r]).fold(f64::NEG_INFINITY, f64::max));
        }
    }
    let kkt = plan.kkt.residual();
    let pass_500 = plan.converged
        && kkt <= 1e-6
        && resim <= 1e-4
        && (theta_end - FRAC_PI_2).abs() <= 0.01
        && psi <= 1e-6
        && defect <= 1e-8
        && secs <= 300.0;

    let t = Instant::now();
    let smoke = solve_ocp(&p, &drv, &OcpConfig::with_intervals(100));
    let smoke_secs = t.elapsed().as_secs_f64();
    let smoke_ok = matches!(&smoke, Ok(s) if s.converged) && smoke_secs <= 30.0;
    let detail = format!(
        "N=500: KKT {kkt:.1e} in {} iterations, re-simulation {resim:.1e}, |theta_f - pi/2| {:.1e}, max psi {psi:.1e}, \
         max defect {defect:.1e}, {secs:.1} s; N=100: {smoke_secs:.1} s",
        plan.iterations,
        (theta_end - FRAC_PI_2).abs()
    );
    (outcome(pass_500 && smoke_ok, detail), Some(plan))
}

fn closed_loop(plan: &PlannedTrajectory) -> Outcome {
    let p = PlantParams::default();
    let drv = DriveParams::default();
    let none = PlantPerturbation::default();
    let m = build_error_model(&p, p.mech.theta_e).unwrap();
    let gains = |alpha: f64, theta: f64| synthesize(&m, &RegionSpec { alpha, rho: Some(60.0), theta }).ok().and_then(|r| r.k);
    let Some(k) = gains(10.0, PI / 6.0) else {
        return outcome(false, "nominal synthesis failed".into());
    };
    let ctrl = ControllerConfig { k, ..ControllerConfig::default() };
    let nominal = run_closed_loop(&p, &drv, plan, &ctrl, &Disturbance::None, &none);
    let (nrmse, violations) = match &nominal {
        Ok(r) => (r.metrics.nrmse, mismatch_violations(r)),
        Err(_) => (f64::NAN, usize::MAX),
    };
    let zero = ControllerConfig::default();
    let fb = run_closed_loop(&p, &drv, plan, &zero, &Disturbance::None, &none);
    let ff = run_feedforward(&p, &drv, plan, &zero, &Disturbance::None, &none);
    let bit_exact = match (&fb, &ff) {
        (Ok(a), Ok(b)) => a.trajectory == b.trajectory && a.ticks.iter().zip(&b.ticks).all(|(x, y)| x.u.to_bits() == y.u.to_bits()),
        _ => false,
    };
    let mut slopes = Vec::new();
    let mut decay_ok = true;
    for (alpha, theta) in [(10.0, PI / 6.0), (30.0, PI / 18.0)] {
        let slope = gains(alpha, theta).and_then(|k| decay_envelope_slope(&m, k, [1.0, 0.0], 3.0, 30_000).ok());
        match slope {
            Some(s) => {
                decay_ok &= s <= -alpha;
                slopes.push(format!("alpha {alpha}: {s:.2}"));
            }
            None => {
                decay_ok = false;
                slopes.push(format!("alpha {alpha}: failed"));
            }
        }
    }
    outcome(
        nrmse <= 0.02 && violations == 0 && bit_exact && decay_ok,
        format!("NRMSE {nrmse:.4}, K=0 equals feedforward bit-exactly {bit_exact}, envelope slopes {}", slopes.join(", ")),
    )
}

fn rk4_order_slope() -> f64 {
    let p = PlantParams::default();
    let f = |x: &Vector3<f64>, u: &f64| dynamics(x, *u, &p);
    let x0 = Vector3::new(0.0, p.motor_angle(0.3), 0.0);
    let run = |n: usize| {
        let h = 0.05 / n as f64;
        let mut x = x0;
        for _ in 0..n {
            x = rk4_step(&f, &x, &12.0, h).unwrap();
        }
        x
    };
    let reference = run(25_600);
    let steps = [50usize, 100, 200, 400];
    let pts: Vec<(f64, f64)> = steps.iter().map(|&n| ((0.05 / n as f64).ln(), (run(n) - reference).norm().ln())).collect();
    let nf = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / nf, pts.iter().map(|p| p.1).sum::<f64>() / nf);
    pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>()
}

fn jacobian_error() -> f64 {
    let p = PlantParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let x = Vector3::new(
            rng.random_range(-12.0..12.0),
            p.motor_angle(rng.random_range(0.0..FRAC_PI_2)),
            rng.random_range(-400.0..400.0),
        );
        let (a, _) = dynamics_jacobian(&x, &p).unwrap();
        for c in 0..3 {
            let h = 1e-5 * x[c].abs().max(1.0);
            let (mut xp, mut xm) = (x, x);
            xp[c] += h;
            xm[c] -= h;
            let fd = (dynamics(&xp, 5.0, &p).unwrap() - dynamics(&xm, 5.0, &p).unwrap()) / (2.0 * h);
            let col = a.column(c);
            worst = worst.max((fd - col).norm() / col.norm().max(1e-12));
        }
    }
    worst
}

fn deterministic(plan: &PlannedTrajectory) -> bool {
    let p = PlantParams::default();
    let drv = DriveParams::default();
    let bytes = || {
        let plan2 = solve_ocp(&p, &drv, &OcpConfig::with_intervals(100)).unwrap();
        let ctrl = ControllerConfig { k: [3.0, 0.2], ..ControllerConfig::default() };
        let w = Disturbance::Step { at: 1.0, torque: 0.02 };
        let run = run_closed_loop(&p, &drv, plan, &ctrl, &w, &PlantPerturbation::default()).unwrap();
        let mut out = Vec::new();
        plan2.write_csv(&mut out).unwrap();
        run.write_csv(&mut out).unwrap();
        out
    };
    bytes() == bytes()
}

fn hygiene(plan: &PlannedTrajectory) -> Outcome {
    let slope = rk4_order_slope();
    let jac = jacobian_error();
    let det = deterministic(plan);
    outcome(
        (3.7..=4.3).contains(&slope) && jac <= 1e-6 && det,
        format!("RK4 order slope {slope:.3}, Jacobian vs central differences {jac:.1e}, byte-identical reruns {det}"),
    )
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    results.push((1, "certified inversion mismatch bound", psi_certificate()));
    results.push((2, "sine polynomial bound", sine_polynomial()));
    results.push((3, "inversion round trip", inversion_round_trip()));
    results.push((4, "averaging oracle", averaging_oracle()));
    results.push((5, "identification round trip", identification()));
    results.push((6, "LMI synthesis", lmi_synthesis()));

    let smoke_plan = solve_ocp(&PlantParams::default(), &DriveParams::default(), &OcpConfig::with_intervals(100))
        .expect("N=100 plan");
    results.push((7, "robust vertices", robust_vertices(&smoke_plan)));
    let (ocp, full_plan) = ocp_default();
    results.push((8, "optimal opening trajectory", ocp));
    let plan = full_plan.as_ref().unwrap_or(&smoke_plan);
    results.push((9, "nominal closed loop", closed_loop(plan)));
    results.push((10, "numerics hygiene", hygiene(&smoke_plan)));

    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (n, name, o) in &results {
        println!("criterion {n:>2} {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += (!o.pass) as usize;
    }
    println!("acceptance: {} of {} criteria pass ({:.1} s)", results.len() - failed, results.len(), started.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
