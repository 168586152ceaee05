use barrier_core::closedloop::{mismatch_violations, run_closed_loop, ControllerConfig, RunReport};
use barrier_core::trajopt::PlannedTrajectory;
use barrier_core::Error;
use serde_json::{json, Value};

use super::{open, require_path, Artifact, Command, Context, Flag, Outcome};

/// Tracking simulation of a stored plan with given gains.
pub struct ClosedLoop;

pub fn run_report(run: &RunReport, k: [f64; 2], hash: &str) -> Value {
    json!({
        "config_hash": hash,
        "k": k,
        "metrics": run.metrics,
        "mismatch_violations": mismatch_violations(run),
        "ticks": run.ticks.len(),
    })
}

fn read_gains(path: &std::path::Path) -> Result<[f64; 2], Error> {
    let doc: Value = serde_json::from_reader(open(path)?).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let k = doc
        .get("k")
        .and_then(|k| serde_json::from_value::<[f64; 2]>(k.clone()).ok())
        .ok_or_else(|| Error::Parse(format!("{}: no gains [k_p, k_d] under \"k\"", path.display())))?;
    Ok(k)
}

impl Command for ClosedLoop {
    fn name(&self) -> &'static str {
        "closedloop"
    }

    fn about(&self) -> &'static str {
        "Simulate feedforward plus PD tracking of a planned trajectory"
    }

    fn flags(&self) -> &'static [Flag] {
        &[
            Flag { long: "plan", key: "closedloop.plan", help: "plan CSV" },
            Flag { long: "gains", key: "closedloop.gains", help: "gains JSON with a \"k\" field" },
        ]
    }

    fn run(&self, ctx: &Context) -> Result<Outcome, Error> {
        let s = &ctx.settings;
        let plan_path = require_path(&s.closedloop.plan, "closedloop.plan")?;
        let plan = PlannedTrajectory::read_csv(open(&plan_path)?)?;
        let k = match &s.closedloop.gains {
            Some(p) => read_gains(p)?,
            None => s.controller.k,
        };
        let ctrl = ControllerConfig { k, ..s.controller };
        let run = run_closed_loop(&s.plant, &s.drive, &plan, &ctrl, &s.closedloop.disturbance, &s.closedloop.perturbation)?;
        let report = run_report(&run, k, &ctx.config_hash);
        let artifacts = vec![
            Artifact::csv("run.csv", |w| run.write_csv(w))?,
            Artifact::json("report.json", &report)?,
        ];
        Ok(Outcome::ok(artifacts, report))
    }
}
