//! Branch-and-bound certification of the inversion mismatch bound.
//!
//! The mismatch is evaluated in the `(α, s)` parametrization, where the
//! ratio `(Φ(s) − Φ(αs)) / (s Φ'(s))` is expanded as a quotient of two
//! power series in `s²` with a bounded tail. The series is regular at
//! `s = 0`, so the whole closed box `[0, 1] × [0, π/2]` is covered without
//! a separate limit guard.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::interval::{IDual, Interval, IntervalArith};
use super::{DriveParams, MISMATCH_BOUND};
use crate::error::{Error, Result};

/// Bound on `|sin(πα/2) − (3α − α³)/2|` over `[0, 1]`.
pub const SINE_POLY_BOUND: f64 = 0.02002;

const DEFAULT_BUDGET: u64 = 5_000_000;
const TERMS: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionCertificate {
    /// Certified upper bound on `sup |Ψ|`.
    pub sup_bound: f64,
    pub boxes_processed: u64,
    pub tolerance: f64,
    /// Best value attained at a sample point (a lower bound on the supremum).
    #[serde(skip)]
    pub attained: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinePolyCertificate {
    pub max_lower: f64,
    pub max_upper: f64,
    /// `ξ(α) ≥ 0` on the whole of `[0, 1]`.
    pub nonnegative: bool,
    pub boxes_processed: u64,
}

fn coeff(c: f64) -> Interval {
    // factorials above 22! are not exact in binary64; pad a few ulps
    let (x, y) = (c * (1.0 - 4e-16), c * (1.0 + 4e-16));
    Interval::new(x.min(y), x.max(y))
}

/// Tail bound for the truncated series, valid for `s ≤ 1.6`, `α ∈ [0, 1]`,
/// applied to values and to both partial derivatives.
fn tail_bound() -> f64 {
    let k = (TERMS + 1) as f64;
    let mut fact = 1.0;
    for j in 1..=(2 * TERMS + 3) {
        fact *= j as f64;
    }
    2.0 * (2.0 * k) * (2.0 * k) * 1.6f64.powi(2 * TERMS as i32 + 2) / fact
}

fn psi_bar_expr<T: IntervalArith>(alpha: T, s: T) -> T {
    let half_pi = Interval::pi() * Interval::point(0.5);
    let a2 = alpha * alpha;
    let s2 = s * s;
    let one = T::constant(Interval::point(1.0));
    let mut num = T::constant(Interval::point(0.0));
    let mut den = T::constant(Interval::point(0.0));
    let mut sp = one;
    let mut ap = one;
    let mut fact = 1.0;
    for k in 1..=TERMS {
        ap = ap * a2;
        fact *= (2 * k) as f64 * (2 * k + 1) as f64;
        let sign = if k % 2 == 1 { -1.0 } else { 1.0 };
        let c = T::constant(coeff(sign / fact));
        num = num + c * (one - ap) * sp;
        den = den + T::constant(coeff(sign * (2 * k) as f64 / fact)) * sp;
        if k < TERMS {
            sp = sp * s2;
        }
    }
    let tb = tail_bound();
    num = num + T::slack(tb, tb);
    den = den + T::slack(tb, tb);
    let ratio = num / den;
    let half = T::constant(Interval::point(0.5));
    half * ((T::constant(half_pi) * alpha).sin() - alpha - alpha * ratio)
}

/// Enclosure of `Ψ̄` over a box: intersection of the natural extension and
/// the mean-value form around the box centre.
fn enclose_psi_bar(a: Interval, s: Interval) -> (Interval, Interval) {
    let naive = psi_bar_expr(a, s);
    let (ca, cs) = (a.mid(), s.mid());
    let centre = psi_bar_expr(Interval::point(ca), Interval::point(cs));
    let g = psi_bar_expr(IDual::<2>::var(a, 0), IDual::<2>::var(s, 1));
    let mv = centre
        + g.d[0] * (a - Interval::point(ca))
        + g.d[1] * (s - Interval::point(cs));
    (naive.intersect(&mv).intersect(&g.v), centre)
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    upper: f64,
    a: Interval,
    s: Interval,
}

impl PartialEq for Cell {
    fn eq(&self, o: &Self) -> bool {
        self.upper.total_cmp(&o.upper) == Ordering::Equal
    }
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Cell {
    fn cmp(&self, o: &Self) -> Ordering {
        self.upper.total_cmp(&o.upper)
    }
}

/// Certifies `sup |Ψ|` over the admissible duty/back-EMF domain with
/// relative tolerance `tol`, and checks the sine/cubic gap bound.
pub fn verify_psi_bound(tol: f64) -> Result<InversionCertificate> {
    verify_psi_bound_with_budget(tol, DEFAULT_BUDGET)
}

pub fn verify_psi_bound_with_budget(tol: f64, max_boxes: u64) -> Result<InversionCertificate> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Domain(format!("tolerance {tol} outside (0, 1)")));
    }
    let xi = certify_sine_polynomial(1e-7)?;
    if !(xi.nonnegative && xi.max_upper < SINE_POLY_BOUND) {
        return Err(Error::Numerical(format!(
            "sine/cubic gap not certified: max in [{}, {}], nonnegative = {}",
            xi.max_lower, xi.max_upper, xi.nonnegative
        )));
    }

    let mut heap = BinaryHeap::new();
    let root_a = Interval::new(0.0, 1.0);
    let root_s = Interval::new(0.0, std::f64::consts::FRAC_PI_2);
    let (enc, centre) = enclose_psi_bar(root_a, root_s);
    let mut best = centre.abs().lo;
    let mut processed = 1u64;
    heap.push(Cell { upper: enc.abs().hi, a: root_a, s: root_s });

    while let Some(cell) = heap.pop() {
        if cell.upper - best <= tol * best {
            return Ok(InversionCertificate {
                sup_bound: cell.upper,
                boxes_processed: processed,
                tolerance: tol,
                attained: best,
            });
        }
        if processed >= max_boxes {
            return Err(Error::Inconclusive {
                best_bound: cell.upper,
                reason: format!("box budget {max_boxes} exhausted"),
            });
        }
        let split_a = cell.a.width() >= cell.s.width() / std::f64::consts::FRAC_PI_2;
        let halves = if split_a {
            let m = cell.a.mid();
            [(Interval::new(cell.a.lo, m), cell.s), (Interval::new(m, cell.a.hi), cell.s)]
        } else {
            let m = cell.s.mid();
            [(cell.a, Interval::new(cell.s.lo, m)), (cell.a, Interval::new(m, cell.s.hi))]
        };
        for (a, s) in halves {
            let (enc, centre) = enclose_psi_bar(a, s);
            processed += 1;
            best = best.max(centre.abs().lo);
            let upper = enc.abs().hi;
            if upper > best {
                heap.push(Cell { upper, a, s });
            }
        }
    }
    // every box was pruned below a value that is attained
    Ok(InversionCertificate { sup_bound: best, boxes_processed: processed, tolerance: tol, attained: best })
}

fn xi_expr<T: IntervalArith>(a: T) -> T {
    let half_pi = Interval::pi() * Interval::point(0.5);
    let c = |v: f64| T::constant(Interval::point(v));
    (T::constant(half_pi) * a).sin() - c(0.5) * (c(3.0) * a - a * a * a)
}

fn enclose_xi(a: Interval) -> (Interval, Interval) {
    let naive = xi_expr(a);
    let centre = xi_expr(Interval::point(a.mid()));
    let g = xi_expr(IDual::<1>::var(a, 0));
    let mv = centre + g.d[0] * (a - Interval::point(a.mid()));
    (naive.intersect(&mv), centre)
}

/// `ξ'(α)` enclosure.
fn xi_prime(a: Interval) -> Interval {
    let half_pi = Interval::pi() * Interval::point(0.5);
    half_pi * (half_pi * a).cos() - Interval::point(1.5) + Interval::point(1.5) * a.sqr()
}

/// `ξ''(α)` enclosure.
fn xi_second(a: Interval) -> Interval {
    let half_pi = Interval::pi() * Interval::point(0.5);
    Interval::point(3.0) * a - half_pi.sqr() * (half_pi * a).sin()
}

/// Certifies the maximum of `ξ(α) = sin(πα/2) − (3α − α³)/2` on `[0, 1]`
/// to relative tolerance `tol` and that `ξ` is non-negative there.
pub fn certify_sine_polynomial(tol: f64) -> Result<SinePolyCertificate> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Domain(format!("tolerance {tol} outside (0, 1)")));
    }
    let mut processed = 0u64;

    let mut heap = BinaryHeap::new();
    let root = Interval::new(0.0, 1.0);
    let (enc, centre) = enclose_xi(root);
    processed += 1;
    let mut best = centre.lo;
    heap.push(Cell { upper: enc.hi, a: root, s: Interval::point(0.0) });
    let mut upper = best;
    while let Some(cell) = heap.pop() {
        if cell.upper - best <= tol * best.abs() {
            upper = cell.upper;
            break;
        }
        if processed >= DEFAULT_BUDGET {
            return Err(Error::Inconclusive {
                best_bound: cell.upper,
                reason: "box budget exhausted while bounding the sine/cubic gap".into(),
            });
        }
        let m = cell.a.mid();
        for a in [Interval::new(cell.a.lo, m), Interval::new(m, cell.a.hi)] {
            let (enc, centre) = enclose_xi(a);
            processed += 1;
            best = best.max(centre.lo);
            if enc.hi > best {
                heap.push(Cell { upper: enc.hi, a, s: Interval::point(0.0) });
            }
        }
    }

    // ξ(0) = ξ(1) = 0, ξ'(0) > 0 and ξ'(1) = 0 with ξ'' ≥ 0 near 1.
    let mut stack = vec![(root, 0u32)];
    let mut nonnegative = true;
    while let Some((a, depth)) = stack.pop() {
        processed += 1;
        let (enc, _) = enclose_xi(a);
        let ok = enc.lo >= 0.0
            || (a.lo == 0.0 && xi_prime(a).lo > 0.0)
            || (a.hi == 1.0 && xi_second(a).lo >= 0.0);
        if ok {
            continue;
        }
        if depth >= 60 {
            nonnegative = false;
            break;
        }
        let m = a.mid();
        stack.push((Interval::new(a.lo, m), depth + 1));
        stack.push((Interval::new(m, a.hi), depth + 1));
    }

    Ok(SinePolyCertificate { max_lower: best, max_upper: upper, nonnegative, boxes_processed: processed })
}

/// Maximum of `|Ψ|` over an `n × n` grid of `δ̃ ∈ [0, 1]` and
/// `e_a ∈ [0, 0.999 √2 V_ac]`.
pub fn psi_grid_max(drv: &DriveParams, n: usize) -> Result<f64> {
    let n = n.max(2);
    let top = 0.999 * drv.peak();
    let mut best: f64 = 0.0;
    for j in 0..n {
        let ea = top * j as f64 / (n - 1) as f64;
        for i in 0..n {
            let dt = i as f64 / (n - 1) as f64;
            best = best.max(drv.mismatch_psi(dt, ea)?.abs());
        }
    }
    Ok(best)
}

/// Whether a certificate establishes the mismatch bound.
pub fn certifies_bound(cert: &InversionCertificate) -> bool {
    cert.sup_bound < MISMATCH_BOUND
}
