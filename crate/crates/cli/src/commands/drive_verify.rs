use barrier_core::drive::verify::{certifies_bound, psi_grid_max};
use barrier_core::drive::{certify_sine_polynomial, verify_psi_bound, verify_psi_bound_with_budget, MISMATCH_BOUND};
use barrier_core::Error;
use serde_json::json;

use super::{Artifact, Command, Context, Flag, Outcome};

/// Certified bound on the inversion mismatch and on the sine/cubic gap.
pub struct DriveVerify;

impl Command for DriveVerify {
    fn name(&self) -> &'static str {
        "drive-verify"
    }

    fn about(&self) -> &'static str {
        "Certify the drive inversion mismatch bound by interval branch and bound"
    }

    fn flags(&self) -> &'static [Flag] {
        &[
            Flag { long: "tol", key: "verify.tol", help: "absolute tolerance on the certified supremum" },
            Flag { long: "max-boxes", key: "verify.max_boxes", help: "box budget" },
        ]
    }

    fn run(&self, ctx: &Context) -> Result<Outcome, Error> {
        let cfg = &ctx.settings.verify;
        let cert = match cfg.max_boxes {
            Some(b) => verify_psi_bound_with_budget(cfg.tol, b)?,
            None => verify_psi_bound(cfg.tol)?,
        };
        let sine = certify_sine_polynomial(1e-6)?;
        let grid_max = if cfg.grid > 0 { Some(psi_grid_max(&ctx.settings.drive, cfg.grid)?) } else { None };
        let report = json!({
            "sup_bound": cert.sup_bound,
            "boxes_processed": cert.boxes_processed,
            "tolerance": cert.tolerance,
            "attained": cert.attained,
            "bound": MISMATCH_BOUND,
            "certified": certifies_bound(&cert),
            "grid_max": grid_max,
            "sine_polynomial": sine,
        });
        let failure = (!certifies_bound(&cert)).then(|| {
            Error::Domain(format!("certified bound {} is not below {MISMATCH_BOUND}", cert.sup_bound))
        });
        Ok(Outcome { artifacts: vec![Artifact::json("certificate.json", &report)?], summary: report, failure })
    }
}
