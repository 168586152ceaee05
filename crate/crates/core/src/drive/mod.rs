//! Averaged model of the unidirectional AC chopper and its approximate
//! feedback-linearizing inverse.
//!
//! During the switch-off part of a rectified half-period the motor
//! terminals sit at the back-EMF `e_a`; during the switch-on part they
//! follow the semi-sinusoid `√2 V_ac sin(π t / T)`. Averaging over the
//! period gives
//!
//! ```text
//! ū_a(δ, e_a) = e_a (1 − δ) + (√2 V_ac / π) (1 − cos(π δ))
//! ```
//!
//! which is monotone only between the duty extrema `δ_m` and `δ_M`.

pub mod interval;
pub mod verify;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use verify::{
    certify_sine_polynomial, verify_psi_bound, verify_psi_bound_with_budget,
    InversionCertificate, SinePolyCertificate,
};

/// Largest per-unit mismatch between requested and delivered average voltage.
pub const MISMATCH_BOUND: f64 = 0.01001;

/// Supply parameters of the chopper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveParams {
    /// RMS supply voltage (V).
    #[serde(rename = "V_ac")]
    pub v_ac: f64,
    /// Rectified half-period (s).
    #[serde(rename = "T")]
    pub period: f64,
    /// Diode drop (V). Not used by the averaged model.
    #[serde(rename = "V_D", default)]
    pub v_d: f64,
}

impl Default for DriveParams {
    fn default() -> Self {
        DriveParams { v_ac: 24.0, period: 0.01, v_d: 0.7 }
    }
}

/// Duty-cycle extrema of the averaged map and the corresponding voltages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DutyExtrema {
    pub delta_min: f64,
    pub delta_max: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl DutyExtrema {
    pub fn range(&self) -> f64 {
        self.u_max - self.u_min
    }
}

/// Result of inverting the averaged map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inversion {
    pub delta: f64,
    /// Requested voltage after clamping to `[ū_m, ū_M]`.
    pub u_target: f64,
    /// Whether the request had to be clamped.
    pub saturated: bool,
}

impl DriveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_ac > 0.0 && self.v_ac.is_finite()) {
            return Err(Error::Config(format!("V_ac = {} must be positive", self.v_ac)));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::Config(format!("T = {} must be positive", self.period)));
        }
        if !(self.v_d >= 0.0) {
            return Err(Error::Config(format!("V_D = {} must be non-negative", self.v_d)));
        }
        Ok(())
    }

    /// Peak of the rectified supply, `√2 V_ac`.
    pub fn peak(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.v_ac
    }

    fn check_bemf(&self, e_a: f64) -> Result<()> {
        if !(e_a >= 0.0 && e_a < self.peak()) {
            return Err(Error::Domain(format!(
                "back-EMF {e_a} outside [0, {})",
                self.peak()
            )));
        }
        Ok(())
    }

    /// Clamps a back-EMF sample into the admissible range `[0, (1 − 1e-9) √2 V_ac]`.
    pub fn clamp_bemf(&self, e_a: f64) -> f64 {
        e_a.clamp(0.0, self.peak() * (1.0 - 1e-9))
    }

    pub fn average_voltage(&self, delta: f64, e_a: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::Domain(format!("duty {delta} outside [0, 1]")));
        }
        self.check_bemf(e_a)?;
        Ok(average_voltage_unchecked(self.peak(), delta, e_a))
    }

    pub fn duty_extrema(&self, e_a: f64) -> Result<DutyExtrema> {
        self.check_bemf(e_a)?;
        let vp = self.peak();
        let dm = (e_a / vp).asin() / PI;
        let (s, c) = (PI * dm).sin_cos();
        Ok(DutyExtrema {
            delta_min: dm,
            delta_max: 1.0 - dm,
            u_min: vp * ((1.0 - dm) * s + (1.0 - c) / PI),
            u_max: vp * (dm * s + (1.0 + c) / PI),
        })
    }

    /// Normalized output `ũ_a(δ̃, e_a)` of the averaged map.
    pub fn normalized_output(&self, dtilde: f64, e_a: f64) -> Result<f64> {
        let ext = self.duty_extrema(e_a)?;
        let delta = ext.delta_min + (1.0 - 2.0 * ext.delta_min) * dtilde;
        let u = average_voltage_unchecked(self.peak(), delta, e_a);
        Ok((u - ext.u_min) / ext.range())
    }

    /// Mismatch `Ψ(δ̃, e_a) = ũ_a − (1 − cos πδ̃)/2` between the averaged
    /// map and its sinusoidal model.
    ///
    /// Close to the top of the back-EMF range the normalization degenerates,
    /// so there the value is taken from the `(α, s)` series form.
    pub fn mismatch_psi(&self, dtilde: f64, e_a: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&dtilde) {
            return Err(Error::Domain(format!("normalized duty {dtilde} outside [0, 1]")));
        }
        self.check_bemf(e_a)?;
        let s = (e_a / self.peak()).acos();
        if s < 0.05 {
            return Ok(psi_from_bar(dtilde, s));
        }
        Ok(self.normalized_output(dtilde, e_a)? - 0.5 * (1.0 - (PI * dtilde).cos()))
    }

    /// Closed form of `Ψ` in terms of `σ = π(1 − 2δ_m)` and `tan(π δ_m)`.
    pub fn mismatch_psi_closed_form(&self, dtilde: f64, e_a: f64) -> Result<f64> {
        self.check_bemf(e_a)?;
        let dm = (e_a / self.peak()).asin() / PI;
        let sigma = PI * (1.0 - 2.0 * dm);
        let t = (PI * dm).tan();
        let sd = sigma * dtilde;
        let half = (0.5 * PI * dtilde).sin();
        let num = t * (sd.sin() + sigma * half * half - sd) + (PI * dtilde).cos() - sd.cos();
        Ok(num / (2.0 - sigma * t))
    }

    /// Duty cycle that approximately delivers the average voltage `u`.
    ///
    /// Requests outside `[ū_m(e_a), ū_M(e_a)]` are clamped and flagged.
    pub fn invert(&self, u: f64, e_a: f64) -> Result<Inversion> {
        if !u.is_finite() {
            return Err(Error::Domain(format!("non-finite voltage request {u}")));
        }
        let ext = self.duty_extrema(e_a)?;
        let target = u.clamp(ext.u_min, ext.u_max);
        let saturated = target != u;
        let x = (1.0 - 2.0 * (target - ext.u_min) / ext.range()).clamp(-1.0, 1.0);
        let delta = ext.delta_min + (1.0 - 2.0 * ext.delta_min) / PI * x.acos();
        Ok(Inversion { delta: delta.clamp(0.0, 1.0), u_target: target, saturated })
    }

    /// Samples the terminal voltage over one period under the zero-current
    /// off-phase assumption. The switching instant appears twice (left and
    /// right limits), so trapezoidal integration of the samples is exact up
    /// to the smooth-part discretization error.
    pub fn simulate_switched_period(
        &self,
        delta: f64,
        e_a: f64,
        samples_per_phase: usize,
    ) -> Result<Vec<(f64, f64)>> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::Domain(format!("duty {delta} outside [0, 1]")));
        }
        self.check_bemf(e_a)?;
        let n = samples_per_phase.max(1);
        let t_sw = (1.0 - delta) * self.period;
        let vp = self.peak();
        let mut out = Vec::with_capacity(2 * n + 2);
        if t_sw > 0.0 {
            for k in 0..=n {
                out.push((t_sw * k as f64 / n as f64, e_a));
            }
        }
        if delta > 0.0 {
            for k in 0..=n {
                let t = t_sw + (self.period - t_sw) * k as f64 / n as f64;
                out.push((t, vp * (PI * t / self.period).sin()));
            }
        }
        Ok(out)
    }
}

fn average_voltage_unchecked(vp: f64, delta: f64, e_a: f64) -> f64 {
    e_a * (1.0 - delta) + vp / PI * (1.0 - (PI * delta).cos())
}

/// Trapezoidal mean of a sampled waveform.
pub fn waveform_mean(samples: &[(f64, f64)]) -> f64 {
    let (Some(first), Some(last)) = (samples.first(), samples.last()) else {
        return 0.0;
    };
    let span = last.0 - first.0;
    if span <= 0.0 {
        return first.1;
    }
    let area: f64 = samples
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum();
    area / span
}

const SERIES_TERMS: usize = 14;

/// `(Φ(s) − Φ(αs)) / (s Φ'(s))` with `Φ(s) = sin(s)/s`, via its power
/// series in `s²` (regular at `s = 0`).
fn phi_ratio(alpha: f64, s: f64) -> f64 {
    let s2 = s * s;
    let a2 = alpha * alpha;
    let (mut num, mut den) = (0.0, 0.0);
    let mut sp = 1.0; // s^{2k-2}
    let mut ap = 1.0; // α^{2k}
    let mut fact = 1.0; // (2k+1)!
    let mut sign = -1.0;
    for k in 1..=SERIES_TERMS {
        ap *= a2;
        fact *= (2 * k) as f64 * (2 * k + 1) as f64;
        num += sign * (1.0 - ap) * sp / fact;
        den += sign * (2 * k) as f64 * sp / fact;
        sp *= s2;
        sign = -sign;
    }
    num / den
}

/// Mismatch in the `(α, s)` parametrization, `δ̃ = (1 − α)/2`,
/// `e_a = √2 V_ac cos(s)`:
///
/// ```text
/// Ψ̄(α, s) = ½ ( sin(πα/2) − α − α (Φ(s) − Φ(αs)) / (s Φ'(s)) )
/// ```
pub fn psi_bar(alpha: f64, s: f64) -> f64 {
    0.5 * ((0.5 * PI * alpha).sin() - alpha - alpha * phi_ratio(alpha, s))
}

/// Direct evaluation of `Ψ̄` from `Φ(s) = sin(s)/s`; loses accuracy as `s → 0`.
pub fn psi_bar_direct(alpha: f64, s: f64) -> f64 {
    let phi = |x: f64| if x == 0.0 { 1.0 } else { x.sin() / x };
    let dphi = (s * s.cos() - s.sin()) / (s * s);
    let ratio = if alpha == 1.0 {
        // (Φ(s) − Φ(αs)) / ((1 − α) s) → −Φ'(s) as α → 1
        -dphi
    } else {
        (phi(s) - phi(alpha * s)) / ((1.0 - alpha) * s)
    };
    0.5 * ((0.5 * PI * alpha).sin() - alpha - alpha * (1.0 - alpha) * ratio / dphi)
}

/// Limit of `Ψ̄(α, s)` as `s → 0⁺`: `½ (sin(πα/2) − (3α − α³)/2)`.
pub fn psi_bar_limit(alpha: f64) -> f64 {
    0.5 * sine_poly_gap(alpha)
}

/// `ξ(α) = sin(πα/2) − (3α − α³)/2`.
pub fn sine_poly_gap(alpha: f64) -> f64 {
    (0.5 * PI * alpha).sin() - 0.5 * (3.0 * alpha - alpha.powi(3))
}

fn psi_from_bar(dtilde: f64, s: f64) -> f64 {
    if dtilde <= 0.5 {
        psi_bar(1.0 - 2.0 * dtilde, s)
    } else {
        -psi_bar(2.0 * dtilde - 1.0, s)
    }
}
