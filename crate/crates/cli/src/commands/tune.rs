use barrier_core::io::fmt_f64;
use barrier_core::lmisyn::{
    build_error_model, synthesize, synthesize_robust, ErrorModel, GainSynthesisResult, RegionSpec, SynthesisStatus,
};
use barrier_core::Error;
use rayon::prelude::*;
use serde_json::json;

use super::{Artifact, Command, Context, Flag, Outcome};
use crate::config::Settings;

/// LMI gain synthesis and the `γ*(α)` trade-off curve.
pub struct Tune;

pub fn error_model(s: &Settings) -> Result<ErrorModel, Error> {
    match s.tune.model {
        Some(m) => {
            m.check_controllable()?;
            Ok(m)
        }
        None => build_error_model(&s.plant, s.tune.theta_lin.unwrap_or(s.plant.mech.theta_e)),
    }
}

fn vertices(s: &Settings, model: &ErrorModel) -> Option<Vec<ErrorModel>> {
    match &s.tune.vertices {
        Some(v) if !v.is_empty() => Some(v.clone()),
        _ if s.tune.robust_rel > 0.0 => Some(model.vertices(s.tune.robust_rel)),
        _ => None,
    }
}

/// Nominal or robust synthesis for one region, depending on the tune settings.
pub fn synthesize_for(s: &Settings, model: &ErrorModel, region: &RegionSpec) -> Result<GainSynthesisResult, Error> {
    match vertices(s, model) {
        Some(v) => synthesize_robust(&v, region, model),
        None => synthesize(model, region),
    }
}

pub fn status_name(st: SynthesisStatus) -> &'static str {
    match st {
        SynthesisStatus::Feasible => "feasible",
        SynthesisStatus::Infeasible => "infeasible",
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

impl Command for Tune {
    fn name(&self) -> &'static str {
        "tune"
    }

    fn about(&self) -> &'static str {
        "Synthesize PD gains by LMI optimization and sweep the decay rate"
    }

    fn flags(&self) -> &'static [Flag] {
        &[
            Flag { long: "alpha", key: "region.alpha", help: "decay rate" },
            Flag { long: "theta", key: "region.theta", help: "sector half-angle (rad)" },
            Flag { long: "rho", key: "region.rho", help: "disk radius (null for none)" },
            Flag { long: "robust", key: "tune.robust_rel", help: "relative polytope on (a22, b2)" },
        ]
    }

    fn run(&self, ctx: &Context) -> Result<Outcome, Error> {
        let s = &ctx.settings;
        s.region.validate()?;
        let model = error_model(s)?;
        let result = synthesize_for(s, &model, &s.region)?;
        let points: Vec<Result<GainSynthesisResult, Error>> = ctx.pool.install(|| {
            s.sweep
                .alphas
                .par_iter()
                .map(|&alpha| synthesize_for(s, &model, &RegionSpec { alpha, ..s.region }))
                .collect()
        });
        let mut csv = String::from("alpha,gamma,k_p,k_d,status\n");
        for (alpha, r) in s.sweep.alphas.iter().zip(&points) {
            let (gamma, k, status) = match r {
                Ok(r) => (r.gamma, r.k, status_name(r.status)),
                // a region the validator rejects (e.g. α ≥ ρ) is reported as a row
                Err(_) => (None, None, "invalid"),
            };
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt_f64(*alpha),
                opt(gamma),
                opt(k.map(|k| k[0])),
                opt(k.map(|k| k[1])),
                status
            ));
        }
        let summary = json!({
            "status": status_name(result.status),
            "k": result.k,
            "gamma": result.gamma,
            "hinf": result.hinf,
            "eigenvalues": result.eigenvalues,
            "model": model,
        });
        let failure = (!result.is_feasible()).then(|| {
            Error::Infeasible(result.message.clone().unwrap_or_else(|| "LMI synthesis infeasible".into()))
        });
        let artifacts = vec![
            Artifact::json("gains.json", &result)?,
            Artifact { name: "tradeoff.csv".into(), bytes: csv.into_bytes() },
        ];
        Ok(Outcome { artifacts, summary, failure })
    }
}
