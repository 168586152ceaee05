//! H∞ norm of `C (sI − A)⁻¹ E` for small stable state-space models.
//!
//! Two independent estimators are provided and registered by name.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Strategy for evaluating `sup_ω |C (jωI − A)⁻¹ E|`.
pub trait HinfEstimator: Send + Sync {
    fn name(&self) -> &'static str;
    fn estimate(&self, a: &DMatrix<f64>, e: &DVector<f64>, c: &DVector<f64>) -> Result<f64>;
}

/// Bisection on the level `γ` using the imaginary-axis eigenvalues of the
/// Hamiltonian `[[A, EEᵀ/γ²], [−CᵀC, −Aᵀ]]`.
pub struct HamiltonianBisection {
    pub rel_tol: f64,
}

/// Maximum gain over a log-spaced frequency grid (plus `ω = 0`).
pub struct FrequencyGrid {
    pub points: usize,
}

pub fn registry() -> Vec<Box<dyn HinfEstimator>> {
    vec![
        Box::new(HamiltonianBisection { rel_tol: 1e-10 }),
        Box::new(FrequencyGrid { points: 1000 }),
    ]
}

pub fn estimator(name: &str) -> Option<Box<dyn HinfEstimator>> {
    registry().into_iter().find(|e| e.name() == name)
}

fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    a.complex_eigenvalues().iter().all(|l| l.re < 0.0)
}

/// `|C (jω I − A)⁻¹ E|` for real `A`.
pub fn gain_at(a: &DMatrix<f64>, e: &DVector<f64>, c: &DVector<f64>, omega: f64) -> Result<f64> {
    let n = a.nrows();
    let m = DMatrix::<Complex<f64>>::from_fn(n, n, |i, j| {
        let d = if i == j { Complex::new(0.0, omega) } else { Complex::new(0.0, 0.0) };
        d - Complex::new(a[(i, j)], 0.0)
    });
    let rhs = DVector::<Complex<f64>>::from_fn(n, |i, _| Complex::new(e[i], 0.0));
    let x = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical(format!("jωI − A singular at ω = {omega}")))?;
    let z: Complex<f64> = (0..n).map(|i| x[i] * c[i]).sum();
    Ok(z.norm())
}

fn frequency_span(a: &DMatrix<f64>) -> (f64, f64) {
    let mags: Vec<f64> = a.complex_eigenvalues().iter().map(|l| l.norm()).collect();
    let lo = mags.iter().copied().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
    let hi = mags.iter().copied().fold(0.0f64, f64::max);
    let lo = if lo.is_finite() { lo } else { 1.0 };
    (1e-3 * lo, 1e3 * hi.max(lo))
}

impl HinfEstimator for FrequencyGrid {
    fn name(&self) -> &'static str {
        "grid"
    }

    fn estimate(&self, a: &DMatrix<f64>, e: &DVector<f64>, c: &DVector<f64>) -> Result<f64> {
        if !is_hurwitz(a) {
            return Ok(f64::INFINITY);
        }
        let (lo, hi) = frequency_span(a);
        let n = self.points.max(2);
        let mut best = gain_at(a, e, c, 0.0)?;
        for k in 0..n {
            let w = lo * (hi / lo).powf(k as f64 / (n - 1) as f64);
            best = best.max(gain_at(a, e, c, w)?);
        }
        Ok(best)
    }
}

impl HamiltonianBisection {
    /// Whether the gain reaches `gamma` somewhere. Near-imaginary Hamiltonian
    /// eigenvalues give candidate frequencies; a crossing is accepted only if
    /// the gain at a candidate or between two candidates actually reaches
    /// `gamma`, which removes spurious hits on stiff systems.
    fn reaches(a: &DMatrix<f64>, e: &DVector<f64>, c: &DVector<f64>, gamma: f64) -> Result<bool> {
        let n = a.nrows();
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        h.view_mut((0, 0), (n, n)).copy_from(a);
        h.view_mut((0, n), (n, n)).copy_from(&(e * e.transpose() / (gamma * gamma)));
        h.view_mut((n, 0), (n, n)).copy_from(&(-(c * c.transpose())));
        h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
        let scale = h.norm().max(1e-300);
        let mut w: Vec<f64> = h
            .complex_eigenvalues()
            .iter()
            .filter(|l| l.re.abs() <= 1e-9 * scale || l.re.abs() <= 1e-5 * l.norm())
            .map(|l| l.im.abs())
            .collect();
        if w.is_empty() {
            return Ok(false);
        }
        w.sort_by(f64::total_cmp);
        w.dedup();
        let mut probes = w.clone();
        probes.extend(w.windows(2).map(|p| 0.5 * (p[0] + p[1])));
        probes.push(0.0);
        for om in probes {
            if gain_at(a, e, c, om)? >= gamma {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

impl HinfEstimator for HamiltonianBisection {
    fn name(&self) -> &'static str {
        "hamiltonian"
    }

    fn estimate(&self, a: &DMatrix<f64>, e: &DVector<f64>, c: &DVector<f64>) -> Result<f64> {
        if !is_hurwitz(a) {
            return Ok(f64::INFINITY);
        }
        if e.norm() == 0.0 || c.norm() == 0.0 {
            return Ok(0.0);
        }
        // a few samples give a valid lower bound
        let (lo_w, hi_w) = frequency_span(a);
        let mut lo = gain_at(a, e, c, 0.0)?;
        for k in 0..=20 {
            let w = lo_w * (hi_w / lo_w).powf(k as f64 / 20.0);
            lo = lo.max(gain_at(a, e, c, w)?);
        }
        if lo == 0.0 {
            return Ok(0.0);
        }
        let mut hi = 2.0 * lo;
        let mut guard = 0;
        while Self::reaches(a, e, c, hi)? {
            lo = hi;
            hi *= 2.0;
            guard += 1;
            if guard > 200 {
                return Err(Error::Numerical("H∞ upper bracket not found".into()));
            }
        }
        while hi - lo > self.rel_tol * hi {
            let mid = 0.5 * (lo + hi);
            if Self::reaches(a, e, c, mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_order_lag_norm() {
        // 1/(s + 2): peak gain 1/2 at ω = 0
        let a = DMatrix::from_element(1, 1, -2.0);
        let e = DVector::from_element(1, 1.0);
        let c = DVector::from_element(1, 1.0);
        for est in registry() {
            let v = est.estimate(&a, &e, &c).unwrap();
            assert!((v - 0.5).abs() < 1e-9, "{} {v}", est.name());
        }
    }

    #[test]
    fn resonant_peak_agrees() {
        // ω_n = 10, ζ = 0.05 : peak = 1 / (2 ζ sqrt(1 − ζ²)) / ω_n²
        let (wn, z): (f64, f64) = (10.0, 0.05);
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -wn * wn, -2.0 * z * wn]);
        let e = DVector::from_vec(vec![0.0, 1.0]);
        let c = DVector::from_vec(vec![1.0, 0.0]);
        let exact = 1.0 / (2.0 * z * (1.0 - z * z).sqrt()) / (wn * wn);
        let h = estimator("hamiltonian").unwrap().estimate(&a, &e, &c).unwrap();
        assert!((h - exact).abs() < 1e-8 * exact, "{h} {exact}");
        let g = estimator("grid").unwrap().estimate(&a, &e, &c).unwrap();
        assert!(g <= h * (1.0 + 1e-9) && g > 0.98 * h);
    }

    #[test]
    fn unstable_is_infinite() {
        let a = DMatrix::from_element(1, 1, 1.0);
        let v = DVector::from_element(1, 1.0);
        assert!(estimator("hamiltonian").unwrap().estimate(&a, &v, &v).unwrap().is_infinite());
        assert!(estimator("nope").is_none());
    }
}
