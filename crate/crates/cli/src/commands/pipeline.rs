use barrier_core::closedloop::{run_closed_loop, ControllerConfig, RunReport};
use barrier_core::io::fmt_f64;
use barrier_core::lmisyn::{GainSynthesisResult, RegionSpec};
use barrier_core::trajopt::{resimulate, solve_ocp};
use barrier_core::Error;
use rayon::prelude::*;
use serde_json::json;

use super::plan::{not_converged, plan_report};
use super::tune::{error_model, status_name, synthesize_for};
use super::{Artifact, Command, Context, Outcome};

/// Plan, tune over the `(α, ϑ)` sweep, and run the closed loop for every
/// feasible gain.
pub struct Pipeline;

struct Point {
    alpha: f64,
    theta: f64,
    synthesis: Result<GainSynthesisResult, Error>,
    run: Option<Result<RunReport, Error>>,
}

const SUMMARY_HEADER: &str =
    "alpha,theta,gamma,k_p,k_d,status,nrmse,peak_e_omega,terminal_theta_error,saturation_fraction";

fn cell(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

impl Command for Pipeline {
    fn name(&self) -> &'static str {
        "pipeline"
    }

    fn about(&self) -> &'static str {
        "Plan, tune over the alpha/theta sweep and run the closed loop for each gain"
    }

    fn run(&self, ctx: &Context) -> Result<Outcome, Error> {
        let s = &ctx.settings;
        s.region.validate()?;
        let plan = solve_ocp(&s.plant, &s.drive, &s.ocp)?;
        let resim = resimulate(&s.plant, &plan, 2)?;
        let mut artifacts = vec![
            Artifact::csv("plan.csv", |w| plan.write_csv(w))?,
            Artifact::json("plan.json", &plan_report(&plan, resim))?,
        ];
        if let Some(e) = not_converged(&plan) {
            let summary = plan_report(&plan, resim);
            return Ok(Outcome { artifacts, summary, failure: Some(e) });
        }
        let model = error_model(s)?;
        let grid: Vec<(f64, f64)> =
            s.sweep.thetas.iter().flat_map(|&th| s.sweep.alphas.iter().map(move |&a| (a, th))).collect();
        let points: Vec<Point> = ctx.pool.install(|| {
            grid.par_iter()
                .map(|&(alpha, theta)| {
                    let region = RegionSpec { alpha, theta, ..s.region };
                    let synthesis = synthesize_for(s, &model, &region);
                    let run = match &synthesis {
                        Ok(r) if r.is_feasible() => {
                            let ctrl = ControllerConfig { k: r.k.unwrap(), ..s.controller };
                            Some(run_closed_loop(
                                &s.plant,
                                &s.drive,
                                &plan,
                                &ctrl,
                                &s.closedloop.disturbance,
                                &s.closedloop.perturbation,
                            ))
                        }
                        _ => None,
                    };
                    Point { alpha, theta, synthesis, run }
                })
                .collect()
        });

        let mut csv = format!("{SUMMARY_HEADER}\n");
        let mut rows = Vec::new();
        for (i, pt) in points.iter().enumerate() {
            let (gamma, k, status) = match &pt.synthesis {
                Ok(r) => (r.gamma, r.k, status_name(r.status).to_string()),
                Err(_) => (None, None, "invalid".to_string()),
            };
            let metrics = match &pt.run {
                Some(Ok(run)) => {
                    let name = format!("run_{i:03}.csv");
                    artifacts.push(Artifact::csv(&name, |w| run.write_csv(w))?);
                    Some(run.metrics)
                }
                _ => None,
            };
            let status = match &pt.run {
                Some(Err(e)) => format!("run_failed: {}", e.to_string().replace([',', '\n'], ";")),
                _ => status,
            };
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                fmt_f64(pt.alpha),
                fmt_f64(pt.theta),
                cell(gamma),
                cell(k.map(|k| k[0])),
                cell(k.map(|k| k[1])),
                status,
                cell(metrics.map(|m| m.nrmse)),
                cell(metrics.map(|m| m.peak_e_omega)),
                cell(metrics.map(|m| m.terminal_theta_error)),
                cell(metrics.map(|m| m.saturation_fraction)),
            ));
            rows.push(json!({ "alpha": pt.alpha, "theta": pt.theta, "gamma": gamma, "k": k, "status": status,
                "nrmse": metrics.map(|m| m.nrmse) }));
        }
        artifacts.push(Artifact { name: "summary.csv".into(), bytes: csv.into_bytes() });
        let summary = json!({ "plan": plan_report(&plan, resim), "points": rows });
        Ok(Outcome::ok(artifacts, summary))
    }
}
