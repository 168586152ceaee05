use barrier_core::ident::{
    calibrate, electrical_params, fit_arx, mechanical_params, prbs_input, synth_locked_rotor, synth_speed,
    AcquisitionParams, CalibrationGrid,
};
use barrier_core::integrators::Trajectory;
use barrier_core::io::write_float_table;
use barrier_core::Error;
use serde_json::json;

use super::{open, Artifact, Command, Context, Flag, Outcome};

/// ARX round trip on synthetic locked-rotor and speed records, plus the
/// friction/damping calibration when a log is configured.
pub struct Identify;

fn rel(est: f64, truth: f64) -> f64 {
    ((est - truth) / truth).abs()
}

impl Command for Identify {
    fn name(&self) -> &'static str {
        "identify"
    }

    fn about(&self) -> &'static str {
        "Identify motor parameters from synthetic data and calibrate friction against a log"
    }

    fn flags(&self) -> &'static [Flag] {
        &[
            Flag { long: "noise", key: "identify.noise_sigma", help: "measurement noise standard deviation" },
            Flag { long: "log", key: "identify.log", help: "duty-cycle log CSV for calibration" },
        ]
    }

    fn run(&self, ctx: &Context) -> Result<Outcome, Error> {
        let s = &ctx.settings;
        let (p, cfg) = (&s.plant, &s.identify);
        let acq = AcquisitionParams { t_s: cfg.t_s, delta: cfg.delta, n: cfg.n };
        acq.validate()?;
        let u = prbs_input(cfg.n, cfg.amplitude, cfg.max_run, s.seed);
        let current = synth_locked_rotor(p, &acq, &u, cfg.noise_sigma, s.seed.wrapping_add(1));
        let speed = synth_speed(p, &acq, &u, cfg.noise_sigma, s.seed.wrapping_add(2));
        let fit_e = fit_arx(&u, &current)?;
        let elec = electrical_params(&fit_e, &acq)?;
        let fit_m = fit_arx(&u, &speed)?;
        let mech = mechanical_params(&fit_m, &acq, p.motor.k_t, elec.r_a)?;
        let mut report = json!({
            "acquisition": acq,
            "electrical": { "fit": fit_e, "estimate": elec, "truth": { "r_a": p.motor.r_a, "l_a": p.motor.l_a },
                "relative_error": { "r_a": rel(elec.r_a, p.motor.r_a), "l_a": rel(elec.l_a, p.motor.l_a) } },
            "mechanical": { "fit": fit_m, "estimate": mech, "truth": { "b_mg": p.trans.b_mg, "j_mg": p.trans.j_mg },
                "relative_error": { "b_mg": rel(mech.b_mg, p.trans.b_mg), "j_mg": rel(mech.j_mg, p.trans.j_mg) } },
        });
        let data = Artifact::csv("excitation.csv", |w| {
            let rows = (0..u.len()).map(|k| vec![k as f64 * acq.t_s, u[k], current[k], speed[k]]);
            write_float_table(w, &["t", "u", "i_a", "omega_m"], rows)
        })?;
        let mut artifacts = vec![data];
        if let Some(path) = &cfg.log {
            let log = Trajectory::<3>::read_csv(open(path)?)?;
            let grid = CalibrationGrid::around(p, cfg.grid_rel, cfg.grid_n);
            let cal = calibrate(p, &s.drive, &log, &grid)?;
            report["calibration"] = json!({ "tau_c": cal.tau_c, "b_s": cal.b_s, "objective": cal.objective, "tie": cal.tie });
            artifacts.push(Artifact::json("calibration.json", &cal)?);
        }
        artifacts.push(Artifact::json("identify.json", &report)?);
        Ok(Outcome::ok(artifacts, report))
    }
}
