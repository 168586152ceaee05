//! Minimal interval arithmetic with outward-padded endpoints, plus a
//! forward-mode dual over intervals for mean-value enclosures.
//!
//! Every arithmetic result is widened by one ulp on each side; `sin` and
//! `cos` are widened by two ulps plus a tiny absolute pad. This is not a
//! formally verified library but it is conservative for IEEE-754 double
//! arithmetic with a libm accurate to within one ulp.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

const TRIG_ABS_PAD: f64 = 1e-300;

fn down(x: f64) -> f64 {
    x.next_down()
}

fn up(x: f64) -> f64 {
    x.next_up()
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "[{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    /// Enclosure of π.
    pub fn pi() -> Self {
        Interval { lo: down(std::f64::consts::PI), hi: up(std::f64::consts::PI) }
    }

    pub fn entire() -> Self {
        Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn intersect(&self, o: &Interval) -> Interval {
        let lo = self.lo.max(o.lo);
        let hi = self.hi.min(o.hi);
        if lo <= hi {
            Interval { lo, hi }
        } else {
            // Both are valid enclosures of the same quantity, so an empty
            // intersection can only come from rounding; keep the tighter one.
            if self.width() <= o.width() { *self } else { *o }
        }
    }

    pub fn abs(&self) -> Interval {
        if self.lo >= 0.0 {
            *self
        } else if self.hi <= 0.0 {
            Interval { lo: -self.hi, hi: -self.lo }
        } else {
            Interval { lo: 0.0, hi: self.hi.max(-self.lo) }
        }
    }

    pub fn sqr(&self) -> Interval {
        let a = self.abs();
        Interval { lo: down(a.lo * a.lo).max(0.0), hi: up(a.hi * a.hi) }
    }

    /// Symmetric interval `[-r, r]`.
    pub fn symmetric(r: f64) -> Interval {
        Interval { lo: -r, hi: r }
    }

    fn pad_trig(lo: f64, hi: f64) -> Interval {
        Interval {
            lo: (down(down(lo)) - TRIG_ABS_PAD).max(-1.0),
            hi: (up(up(hi)) + TRIG_ABS_PAD).min(1.0),
        }
    }

    pub fn sin(&self) -> Interval {
        // sin(x) = cos(x - π/2); evaluate extrema by locating multiples of π/2.
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.width() >= 2.0 * std::f64::consts::PI {
            return Interval::new(-1.0, 1.0);
        }
        let (a, b) = (self.lo.sin(), self.hi.sin());
        let (mut lo, mut hi) = (a.min(b), a.max(b));
        let half_pi = std::f64::consts::FRAC_PI_2;
        // maxima at π/2 + 2kπ, minima at −π/2 + 2kπ; test with a small slack
        let k0 = ((self.lo - half_pi) / (2.0 * std::f64::consts::PI)).floor() as i64 - 1;
        for k in k0..k0 + 4 {
            let peak = half_pi + 2.0 * std::f64::consts::PI * k as f64;
            if self.lo <= peak + 1e-15 * peak.abs().max(1.0) && peak - 1e-15 * peak.abs().max(1.0) <= self.hi {
                hi = 1.0;
            }
            let trough = peak - std::f64::consts::PI;
            if self.lo <= trough + 1e-15 * trough.abs().max(1.0)
                && trough - 1e-15 * trough.abs().max(1.0) <= self.hi
            {
                lo = -1.0;
            }
        }
        Self::pad_trig(lo, hi)
    }

    pub fn cos(&self) -> Interval {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.width() >= 2.0 * std::f64::consts::PI {
            return Interval::new(-1.0, 1.0);
        }
        let (a, b) = (self.lo.cos(), self.hi.cos());
        let (mut lo, mut hi) = (a.min(b), a.max(b));
        let two_pi = 2.0 * std::f64::consts::PI;
        let k0 = (self.lo / two_pi).floor() as i64 - 1;
        for k in k0..k0 + 4 {
            let peak = two_pi * k as f64;
            let slack = 1e-15 * peak.abs().max(1.0);
            if self.lo <= peak + slack && peak - slack <= self.hi {
                hi = 1.0;
            }
            let trough = peak + std::f64::consts::PI;
            let slack = 1e-15 * trough.abs().max(1.0);
            if self.lo <= trough + slack && trough - slack <= self.hi {
                lo = -1.0;
            }
        }
        Self::pad_trig(lo, hi)
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, o: Interval) -> Interval {
        Interval { lo: down(self.lo + o.lo), hi: up(self.hi + o.hi) }
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, o: Interval) -> Interval {
        Interval { lo: down(self.lo - o.hi), hi: up(self.hi - o.lo) }
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval { lo: -self.hi, hi: -self.lo }
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, o: Interval) -> Interval {
        let p = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        // 0 * inf never occurs for the bounded quantities used here
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval { lo: down(lo), hi: up(hi) }
    }
}

impl Div for Interval {
    type Output = Interval;
    fn div(self, o: Interval) -> Interval {
        if o.lo <= 0.0 && o.hi >= 0.0 {
            return Interval::entire();
        }
        let p = [self.lo / o.lo, self.lo / o.hi, self.hi / o.lo, self.hi / o.hi];
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval { lo: down(lo), hi: up(hi) }
    }
}

/// Arithmetic shared by plain intervals and interval duals, so one
/// expression can produce both a value enclosure and a gradient enclosure.
pub trait IntervalArith:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn constant(c: Interval) -> Self;
    /// Constant whose value and every partial derivative lie in `[-v, v]` and `[-d, d]`.
    fn slack(v: f64, d: f64) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn value(&self) -> Interval;
}

impl IntervalArith for Interval {
    fn constant(c: Interval) -> Self {
        c
    }
    fn slack(v: f64, _d: f64) -> Self {
        Interval::symmetric(v)
    }
    fn sin(self) -> Self {
        Interval::sin(&self)
    }
    fn cos(self) -> Self {
        Interval::cos(&self)
    }
    fn value(&self) -> Interval {
        *self
    }
}

/// Value and gradient enclosures with respect to `N` variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IDual<const N: usize> {
    pub v: Interval,
    pub d: [Interval; N],
}

impl<const N: usize> IDual<N> {
    /// Independent variable number `i` ranging over `x`.
    pub fn var(x: Interval, i: usize) -> Self {
        let mut d = [Interval::point(0.0); N];
        d[i] = Interval::point(1.0);
        IDual { v: x, d }
    }
}

impl<const N: usize> Add for IDual<N> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        IDual { v: self.v + o.v, d: std::array::from_fn(|i| self.d[i] + o.d[i]) }
    }
}

impl<const N: usize> Sub for IDual<N> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        IDual { v: self.v - o.v, d: std::array::from_fn(|i| self.d[i] - o.d[i]) }
    }
}

impl<const N: usize> Neg for IDual<N> {
    type Output = Self;
    fn neg(self) -> Self {
        IDual { v: -self.v, d: std::array::from_fn(|i| -self.d[i]) }
    }
}

impl<const N: usize> Mul for IDual<N> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        IDual {
            v: self.v * o.v,
            d: std::array::from_fn(|i| self.d[i] * o.v + self.v * o.d[i]),
        }
    }
}

impl<const N: usize> Div for IDual<N> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.v / o.v;
        IDual { v: q, d: std::array::from_fn(|i| (self.d[i] - q * o.d[i]) / o.v) }
    }
}

impl<const N: usize> IntervalArith for IDual<N> {
    fn constant(c: Interval) -> Self {
        IDual { v: c, d: [Interval::point(0.0); N] }
    }
    fn slack(v: f64, d: f64) -> Self {
        IDual { v: Interval::symmetric(v), d: [Interval::symmetric(d); N] }
    }
    fn sin(self) -> Self {
        let c = self.v.cos();
        IDual { v: self.v.sin(), d: std::array::from_fn(|i| c * self.d[i]) }
    }
    fn cos(self) -> Self {
        let s = -self.v.sin();
        IDual { v: self.v.cos(), d: std::array::from_fn(|i| s * self.d[i]) }
    }
    fn value(&self) -> Interval {
        self.v
    }
}
