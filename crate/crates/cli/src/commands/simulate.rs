use barrier_core::integrators::{simulate_hold, SimGrid};
use barrier_core::plant::{dynamics, State};
use barrier_core::Error;
use nalgebra::Vector3;
use serde_json::json;

use super::{Artifact, Command, Context, Flag, Outcome};
use crate::config::InputKind;

/// Open-loop run of the plant under a constant duty cycle or voltage.
pub struct Simulate;

impl Command for Simulate {
    fn name(&self) -> &'static str {
        "simulate"
    }

    fn about(&self) -> &'static str {
        "Simulate the plant under a constant duty cycle or voltage"
    }

    fn flags(&self) -> &'static [Flag] {
        &[
            Flag { long: "tf", key: "simulate.tf", help: "horizon (s)" },
            Flag { long: "level", key: "simulate.level", help: "duty cycle or voltage" },
        ]
    }

    fn run(&self, ctx: &Context) -> Result<Outcome, Error> {
        let s = &ctx.settings;
        let (p, drv, cfg) = (&s.plant, &s.drive, &s.simulate);
        drv.validate()?;
        if cfg.input == InputKind::Duty && !(0.0..=1.0).contains(&cfg.level) {
            return Err(Error::Config(format!("duty cycle {} outside [0, 1]", cfg.level)));
        }
        let grid = SimGrid::new(0.0, cfg.tf, cfg.t_ctrl)?;
        let input = cfg.input;
        let f = |x: &Vector3<f64>, u: &f64| {
            let u_a = match input {
                InputKind::Duty => drv.average_voltage(*u, drv.clamp_bemf(p.bemf(x[2])))?,
                InputKind::Voltage => *u,
            };
            dynamics(x, u_a, p)
        };
        let x0 = State::at_rest(cfg.theta0, p).to_vector();
        let traj = simulate_hold(&f, x0, |_, _, _| Ok(cfg.level), &grid)?;
        let end = traj.last_state().copied().unwrap_or(x0);
        let summary = json!({
            "samples": traj.len(),
            "final_state": { "i_a": end[0], "theta_m": end[1], "omega_m": end[2] },
            "final_load_angle": p.load_angle(end[1]),
        });
        let csv = Artifact::csv("trajectory.csv", |w| traj.write_csv(w))?;
        Ok(Outcome::ok(vec![csv, Artifact::json("simulate.json", &summary)?], summary))
    }
}
