//! Rational detection for length ratios by continued fractions.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Largest denominator accepted when a ratio is tested for rationality.
pub const MAX_DENOMINATOR: u64 = 1_000_000;
/// Relative tolerance, in ulps, for a convergent to count as exact. The
/// cap of 10⁶ puts convergents within ~1e−12 of any real number, so the
/// match has to be at the level of double-precision round-off.
pub const RATIO_ULPS: f64 = 64.0;

/// Acceptance tolerance for a ratio of magnitude `x`.
pub fn ratio_tol(x: f64) -> f64 {
    RATIO_ULPS * f64::EPSILON * x.abs().max(1.0)
}

/// The length `p/q · π`, kept in lowest terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PiRatio {
    pub p: u64,
    pub q: u64,
}

impl PiRatio {
    pub fn new(p: u64, q: u64) -> Option<PiRatio> {
        if q == 0 {
            return None;
        }
        let g = gcd(p, q);
        let g = if g == 0 { 1 } else { g };
        Some(PiRatio { p: p / g, q: q / g })
    }

    pub fn value(&self) -> f64 {
        PI * self.p as f64 / self.q as f64
    }

    pub fn from_length(length: f64) -> Option<PiRatio> {
        let (p, q) = rational_approx(length / PI, MAX_DENOMINATOR, ratio_tol(length / PI))?;
        PiRatio::new(p, q)
    }
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Best rational `p/q` with `q ≤ max_den` and `|x − p/q| < tol`, if any.
///
/// Only non-negative `x` is supported; the convergents of the continued
/// fraction are walked in order, so the first hit has the smallest denominator.
pub fn rational_approx(x: f64, max_den: u64, tol: f64) -> Option<(u64, u64)> {
    if !x.is_finite() || x < 0.0 {
        return None;
    }
    let (mut h_prev, mut h) = (1u128, x.floor() as u128);
    let (mut k_prev, mut k) = (0u128, 1u128);
    let mut rem = x - x.floor();
    loop {
        if (x - h as f64 / k as f64).abs() < tol {
            return Some((h as u64, k as u64));
        }
        if rem < 1e-300 {
            return None;
        }
        let inv = 1.0 / rem;
        let a = inv.floor();
        rem = inv - a;
        let a = a as u128;
        let h_next = a * h + h_prev;
        let k_next = a * k + k_prev;
        if k_next > max_den as u128 {
            return None;
        }
        h_prev = h;
        h = h_next;
        k_prev = k;
        k = k_next;
    }
}
