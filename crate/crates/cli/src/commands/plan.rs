use barrier_core::trajopt::{resimulate, solve_ocp, PlannedTrajectory};
use barrier_core::Error;
use serde_json::{json, Value};

use super::{Artifact, Command, Context, Flag, Outcome};

/// Opening-trajectory optimization.
pub struct Plan;

pub fn plan_report(plan: &PlannedTrajectory, resim: f64) -> Value {
    json!({
        "objective": plan.objective,
        "kkt_residual": plan.kkt_residual,
        "kkt": plan.kkt,
        "iterations": plan.iterations,
        "converged": plan.converged,
        "resimulation_error": resim,
        "intervals": plan.v.len(),
    })
}

pub fn not_converged(plan: &PlannedTrajectory) -> Option<Error> {
    (!plan.converged).then(|| {
        Error::NotConverged(format!(
            "SQP stopped after {} iterations with KKT residual {:.3e}",
            plan.iterations, plan.kkt_residual
        ))
    })
}

impl Command for Plan {
    fn name(&self) -> &'static str {
        "plan"
    }

    fn about(&self) -> &'static str {
        "Optimize the opening trajectory and its feedforward voltage"
    }

    fn flags(&self) -> &'static [Flag] {
        &[Flag { long: "max-iter", key: "ocp.solver.max_iter", help: "SQP iteration limit" }]
    }

    fn run(&self, ctx: &Context) -> Result<Outcome, Error> {
        let s = &ctx.settings;
        let plan = solve_ocp(&s.plant, &s.drive, &s.ocp)?;
        let resim = resimulate(&s.plant, &plan, 2)?;
        let report = plan_report(&plan, resim);
        let artifacts = vec![
            Artifact::csv("plan.csv", |w| plan.write_csv(w))?,
            Artifact::json("plan.json", &report)?,
        ];
        Ok(Outcome { artifacts, summary: report, failure: not_converged(&plan) })
    }
}
