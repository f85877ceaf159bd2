//! Closed-form spectral conditions: the generic degree-3 case, its
//! `a cosθ + b sinθ = c` reduction, the negative half-line and both
//! degree-4 limits.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{wrap_theta, ChainParams, Spectral};

const EPS: f64 = f64::EPSILON;
/// Past this exponent the hyperbolic evaluators switch to scaled values.
pub const EXP_LIMIT: f64 = 300.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConditionKind {
    Generic3,
    #[serde(rename = "Degree4_L1Zero")]
    Degree4L1Zero,
    #[serde(rename = "Degree4_L3Zero")]
    Degree4L3Zero,
}

/// Coefficients of `a cosθ + b sinθ = c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbcTriple {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl AbcTriple {
    pub fn value(&self, theta: f64) -> f64 {
        self.a * theta.cos() + self.b * theta.sin() - self.c
    }

    pub fn discriminant(&self) -> f64 {
        self.a * self.a + self.b * self.b - self.c * self.c
    }

    /// Solutions of `sin(ϑ+θ) = c/√(a²+b²)` with `sinϑ = a/√(a²+b²)`, `cosϑ = b/√(a²+b²)`.
    pub fn thetas(&self) -> Option<(f64, f64)> {
        let r = self.a.hypot(self.b);
        if !(r > 0.0) || self.c.abs() > r {
            return None;
        }
        let vartheta = self.a.atan2(self.b);
        let s = (self.c / r).asin();
        Some((wrap_theta(s - vartheta), wrap_theta(PI - s - vartheta)))
    }

    /// Quasimomentum at a band edge, where `(cosθ, sinθ) = (a, b)/c`.
    pub fn edge_theta(&self) -> Option<f64> {
        if self.c == 0.0 || !self.c.is_finite() {
            return None;
        }
        let sg = self.c.signum();
        Some(wrap_theta((sg * self.b).atan2(sg * self.a)))
    }
}

/// Parts of the negative band condition. Values carry a common factor
/// `e^{-log_scale}` (on `rho`, `tau`) and `e^{-2 log_scale}` (on `value`)
/// once the exponents grow too large for double precision.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeAux {
    pub rho: f64,
    pub tau: f64,
    pub value: f64,
    pub log_scale: f64,
}

impl NegativeAux {
    pub fn in_band(&self) -> bool {
        self.value >= 0.0
    }

    /// `ln |value|` of the unscaled band function.
    pub fn ln_abs_value(&self) -> f64 {
        self.value.abs().ln() + 2.0 * self.log_scale
    }

    pub fn unscaled_value(&self) -> f64 {
        self.value * (2.0 * self.log_scale).exp()
    }
}

/// `sin(πx)` with the argument reduced exactly, so integers give exact zeros.
pub fn sin_pi(x: f64) -> f64 {
    let n = x.round();
    let s = (PI * (x - n)).sin();
    if (n as i64).rem_euclid(2) == 0 {
        s
    } else {
        -s
    }
}

pub fn cos_pi(x: f64) -> f64 {
    let n = x.round();
    let c = (PI * (x - n)).cos();
    if (n as i64).rem_euclid(2) == 0 {
        c
    } else {
        -c
    }
}

fn require_generic(p: &ChainParams) -> Result<()> {
    match p.kind() {
        ConditionKind::Generic3 => Ok(()),
        actual => Err(Error::WrongKind {
            expected: ConditionKind::Generic3,
            actual,
        }),
    }
}

/// Left-hand side of the simplified positive-energy condition; vanishes on
/// the dispersion curves.
pub fn eval_full_condition(p: &ChainParams, k: f64, theta: f64) -> Result<f64> {
    require_generic(p)?;
    let (l1, l3, l) = (p.ell1(), p.ell3(), p.ell());
    let kk = (k * l).powi(2);
    let u = k * (PI - l3);
    Ok(sin_pi(k)
        * (16.0 * theta.cos() * (kk + 1.0) * u.cos() + 32.0 * k * l * theta.sin() * u.sin())
        + (kk - 1.0).powi(2)
            * ((k * (2.0 * PI - l1)).sin() + 2.0 * (k * l1).sin() * (2.0 * u).cos())
        + 8.0 * (kk + 1.0) * (k * l1).sin()
        - (kk + 3.0).powi(2) * (k * (l1 + 2.0 * PI)).sin())
}

/// Compound angles `kπ ± kx` and `2kπ ± kx` rebuilt from exactly reduced
/// multiples of π, which keeps the error of order `k·x·ε`.
struct Trig {
    s1: f64,
    c1: f64,
    s2: f64,
    c2: f64,
}

impl Trig {
    fn new(k: f64) -> Trig {
        Trig {
            s1: sin_pi(k),
            c1: cos_pi(k),
            s2: sin_pi(2.0 * k),
            c2: cos_pi(2.0 * k),
        }
    }
}

/// Generic coefficients `a, b, c` at momentum `k`.
pub fn abc_positive(p: &ChainParams, k: f64) -> AbcTriple {
    generic_positive(p, k).abc
}

/// Reduced triple used by the band test: generic coefficients, or the
/// bracket coefficients of the degree-4 limits.
pub fn abc_reduced(p: &ChainParams, k: f64) -> AbcTriple {
    positive_eval(p, k).abc
}

/// Band discriminant: `a² + b² − c²` for the generic case, the closed
/// degree-4 forms otherwise. Non-negative inside bands.
pub fn band_discriminant(p: &ChainParams, k: f64) -> f64 {
    positive_eval(p, k).d
}

/// The two quasimomenta on the dispersion curves at `k`, or `None` in a gap.
pub fn dispersion_theta(p: &ChainParams, k: f64) -> Result<Option<(f64, f64)>> {
    let ev = positive_eval(p, k);
    if ev.abc.a.hypot(ev.abc.b) <= 1e-14 * ev.ab_scale {
        return Err(Error::DegeneratePoint { k });
    }
    Ok(ev.abc.thetas())
}

/// Same as [`dispersion_theta`] on the negative half-line.
pub fn dispersion_theta_negative(p: &ChainParams, kappa: f64) -> Result<Option<(f64, f64)>> {
    let ev = negative_eval(p, kappa);
    if ev.abc.a.hypot(ev.abc.b) <= 1e-14 * ev.ab_scale {
        return Err(Error::DegeneratePoint { k: kappa });
    }
    Ok(ev.abc.thetas())
}

/// Left-hand side of the negative-energy condition at `E = −κ²`.
pub fn eval_negative_condition(p: &ChainParams, kappa: f64, theta: f64) -> Result<f64> {
    require_generic(p)?;
    let (l1, l3, l) = (p.ell1(), p.ell3(), p.ell());
    let kk = (kappa * l).powi(2);
    let u = kappa * (PI - l3);
    Ok(16.0
        * (PI * kappa).sinh()
        * (theta.cos() * (kk - 1.0) * u.cosh() + 2.0 * kappa * l * theta.sin() * u.sinh())
        - (kk + 1.0).powi(2)
            * ((kappa * (2.0 * PI - l1)).sinh() + 2.0 * (kappa * l1).sinh() * (2.0 * u).cosh())
        + 8.0 * (kk - 1.0) * (kappa * l1).sinh()
        + (kk - 3.0).powi(2) * (kappa * (l1 + 2.0 * PI)).sinh())
}

/// `ρ`, `τ` and the band function `a² + b² − (ρ−τ)²`; non-negative inside
/// the negative spectrum.
pub fn negative_band_function(p: &ChainParams, kappa: f64) -> Result<NegativeAux> {
    require_generic(p)?;
    let ng = generic_negative(p, kappa);
    Ok(NegativeAux {
        rho: ng.rho,
        tau: ng.tau,
        value: ng.eval.d,
        log_scale: ng.eval.log_scale,
    })
}

/// Bracket factor of the degree-4 conditions, the `sin πk` prefactor left out.
/// Negative energies are handled by the substitution `k = iκ`.
pub fn degree4_conditions(p: &ChainParams, var: Spectral, theta: f64) -> Result<f64> {
    let kind = p.kind();
    if kind == ConditionKind::Generic3 {
        return Err(Error::WrongKind {
            expected: ConditionKind::Degree4L1Zero,
            actual: kind,
        });
    }
    let (l1, l3, l) = (p.ell1(), p.ell3(), p.ell());
    Ok(match var {
        Spectral::Momentum(k) => {
            let kk = (k * l).powi(2);
            let kl = k * l;
            match kind {
                ConditionKind::Degree4L1Zero => {
                    let u = k * (PI - l3);
                    (kk + 1.0) * (theta.cos() * u.cos() - cos_pi(k))
                        + 2.0 * kl * theta.sin() * u.sin()
                }
                _ => {
                    (kk + 1.0) * (theta.cos() * cos_pi(k) - (k * (l1 + PI)).cos())
                        + 2.0 * kl * theta.sin() * sin_pi(k)
                }
            }
        }
        Spectral::DecayRate(kappa) => {
            let kk = (kappa * l).powi(2);
            let kl = kappa * l;
            match kind {
                ConditionKind::Degree4L1Zero => {
                    let u = kappa * (PI - l3);
                    (1.0 - kk) * (theta.cos() * u.cosh() - (PI * kappa).cosh())
                        - 2.0 * kl * theta.sin() * u.sinh()
                }
                _ => {
                    (1.0 - kk) * (theta.cos() * (PI * kappa).cosh() - (kappa * (l1 + PI)).cosh())
                        - 2.0 * kl * theta.sin() * (PI * kappa).sinh()
                }
            }
        }
    })
}

/// Full degree-4 condition including the `sin πk` factor.
pub fn degree4_full_condition(p: &ChainParams, k: f64, theta: f64) -> Result<f64> {
    Ok(sin_pi(k) * degree4_conditions(p, Spectral::Momentum(k), theta)?)
}

/// `H(κ)` for `ℓ₁ = 0` or `G(κ)` for `ℓ₃ = 0`; non-negative inside the
/// negative band. Overflow saturates to `±∞` with the correct sign.
pub fn negative_h_g(p: &ChainParams, kappa: f64) -> Result<f64> {
    match p.kind() {
        ConditionKind::Generic3 => Err(Error::WrongKind {
            expected: ConditionKind::Degree4L1Zero,
            actual: ConditionKind::Generic3,
        }),
        _ => {
            let ev = negative_eval(p, kappa);
            Ok(ev.d * (2.0 * ev.log_scale).exp())
        }
    }
}

/// A pointwise evaluation with a rounding-error estimate for `d`.
///
/// `abc` is the reduced triple and `d` the band function on the same
/// scale; both may carry the common factor from `log_scale`. A point is
/// treated as inside a band when `d ≥ −noise`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub abc: AbcTriple,
    pub d: f64,
    pub noise: f64,
    pub ab_scale: f64,
    pub log_scale: f64,
}

impl Evaluation {
    pub fn in_band(&self) -> bool {
        self.d >= -self.noise
    }

    pub fn clearly_positive(&self) -> bool {
        self.d > self.noise
    }

    /// `√(a²+b²)` relative to its natural size; tiny only at flat points.
    pub fn ab_ratio(&self) -> f64 {
        self.abc.a.hypot(self.abc.b) / self.ab_scale
    }

    /// `d` normalised to the size of its terms.
    pub fn normalized(&self) -> f64 {
        let s = self.abc.a * self.abc.a + self.abc.b * self.abc.b + self.abc.c * self.abc.c;
        if s > 0.0 {
            self.d / s
        } else {
            0.0
        }
    }
}

fn noise_of(abc: &AbcTriple, da: f64, db: f64, dc: f64) -> f64 {
    2.0 * (abc.a.abs() * da + abc.b.abs() * db + abc.c.abs() * dc)
        + 3.0 * EPS * (abc.a * abc.a + abc.b * abc.b + abc.c * abc.c)
}

fn generic_positive(p: &ChainParams, k: f64) -> Evaluation {
    let (l1, l3, l) = (p.ell1(), p.ell3(), p.ell());
    let kl = k * l;
    let kk = kl * kl;
    let t = Trig::new(k);
    let (s3, c3) = (k * l3).sin_cos();
    let (s23, c23) = (2.0 * k * l3).sin_cos();
    let (s1, c1) = (k * l1).sin_cos();
    let cos_u = t.c1 * c3 + t.s1 * s3;
    let sin_u = t.s1 * c3 - t.c1 * s3;
    let cos_2u = t.c2 * c23 + t.s2 * s23;
    let sin_2pi_m_l1 = t.s2 * c1 - t.c2 * s1;
    let sin_l1_p_2pi = t.s2 * c1 + t.c2 * s1;
    let a = 16.0 * (kk + 1.0) * t.s1 * cos_u;
    let b = 32.0 * kl * t.s1 * sin_u;
    let c = -(kk - 1.0).powi(2) * (sin_2pi_m_l1 + 2.0 * s1 * cos_2u) - 8.0 * (kk + 1.0) * s1
        + (kk + 3.0).powi(2) * sin_l1_p_2pi;
    let abc = AbcTriple { a, b, c };
    let arg = EPS * (8.0 + k * (l1 + 2.0 * l3));
    let da = 16.0 * (kk + 1.0) * arg;
    let db = 32.0 * kl * arg;
    let dc = (3.0 * (kk - 1.0).powi(2) + 8.0 * (kk + 1.0) + (kk + 3.0).powi(2)) * arg;
    Evaluation {
        abc,
        d: abc.discriminant(),
        noise: noise_of(&abc, da, db, dc),
        ab_scale: 16.0 * (kk + 1.0) + 32.0 * kl,
        log_scale: 0.0,
    }
}

/// Evaluation on the positive axis for any geometry.
pub fn positive_eval(p: &ChainParams, k: f64) -> Evaluation {
    let (l1, l3, l) = (p.ell1(), p.ell3(), p.ell());
    let kl = k * l;
    let kk = kl * kl;
    match p.kind() {
        ConditionKind::Generic3 => generic_positive(p, k),
        ConditionKind::Degree4L1Zero => {
            let t = Trig::new(k);
            let (s3, c3) = (k * l3).sin_cos();
            let (s23, c23) = (2.0 * k * l3).sin_cos();
            let cos_u = t.c1 * c3 + t.s1 * s3;
            let sin_u = t.s1 * c3 - t.c1 * s3;
            let cos_2u = t.c2 * c23 + t.s2 * s23;
            let abc = AbcTriple {
                a: (kk + 1.0) * cos_u,
                b: 2.0 * kl * sin_u,
                c: (kk + 1.0) * t.c1,
            };
            let d = 4.0 * kk - (kk + 1.0).powi(2) * t.c2 + (kk - 1.0).powi(2) * cos_2u;
            let arg = EPS * (8.0 + 2.0 * k * l3);
            let noise = 2.0 * arg * (4.0 * kk + (kk + 1.0).powi(2) + (kk - 1.0).powi(2));
            Evaluation {
                abc,
                d,
                noise,
                ab_scale: kk + 1.0 + 2.0 * kl,
                log_scale: 0.0,
            }
        }
        ConditionKind::Degree4L3Zero => {
            let t = Trig::new(k);
            let (s1, c1) = (k * l1).sin_cos();
            let (s21, c21) = (2.0 * k * l1).sin_cos();
            let abc = AbcTriple {
                a: (kk + 1.0) * t.c1,
                b: 2.0 * kl * t.s1,
                c: (kk + 1.0) * (c1 * t.c1 - s1 * t.s1),
            };
            let cos_2l = c21 * t.c2 - s21 * t.s2;
            let d = 4.0 * kk + (kk - 1.0).powi(2) * t.c2 - (kk + 1.0).powi(2) * cos_2l;
            let arg = EPS * (8.0 + 2.0 * k * l1);
            let noise = 2.0 * arg * (4.0 * kk + (kk + 1.0).powi(2) + (kk - 1.0).powi(2));
            Evaluation {
                abc,
                d,
                noise,
                ab_scale: kk + 1.0 + 2.0 * kl,
                log_scale: 0.0,
            }
        }
    }
}

/// `sinh x · e^{-s}` and `cosh x · e^{-s}`.
fn sh(x: f64, s: f64) -> f64 {
    if s == 0.0 {
        x.sinh()
    } else {
        0.5 * ((x - s).exp() - (-x - s).exp())
    }
}

fn ch(x: f64, s: f64) -> f64 {
    if s == 0.0 {
        x.cosh()
    } else {
        0.5 * ((x - s).exp() + (-x - s).exp())
    }
}

struct GenericNegative {
    eval: Evaluation,
    rho: f64,
    tau: f64,
}

fn generic_negative(p: &ChainParams, kappa: f64) -> GenericNegative {
    let (l1, l3, l) = (p.ell1(), p.ell3(), p.ell());
    let kl = kappa * l;
    let kk = kl * kl;
    let u = kappa * (PI - l3);
    let pk = PI * kappa;
    let top = kappa * (l1 + 2.0 * PI);
    let s = if top > EXP_LIMIT { top } else { 0.0 };
    // products of hyperbolics rewritten as sums so each term scales alike
    let a = 8.0 * (kk - 1.0) * (sh(pk + u, s) + sh(pk - u, s));
    let b = 16.0 * kl * (ch(pk + u, s) - ch(pk - u, s));
    let rho = (kk + 1.0).powi(2)
        * (sh(kappa * (2.0 * PI - l1), s)
            + sh(kappa * l1 + 2.0 * u, s)
            + sh(kappa * l1 - 2.0 * u, s));
    let tau = (kk - 3.0).powi(2) * sh(top, s) + 8.0 * (kk - 1.0) * sh(kappa * l1, s);
    let abc = AbcTriple { a, b, c: rho - tau };
    let ab_mag = ch(pk + u, s) + ch(pk - u, s);
    // rounding of sh(x): EPS·(|x| ch x + |sh x|), small where the terms are
    let err = |x: f64| EPS * (x.abs() * ch(x, s) + sh(x, s).abs());
    let da = 8.0 * (kk + 1.0) * (err(pk + u) + err(pk - u));
    let db = 16.0 * kl * EPS * (1.0 + top) * ab_mag;
    let dc = 2.0
        * ((kk + 1.0).powi(2)
            * (err(kappa * (2.0 * PI - l1))
                + err(kappa * l1 + 2.0 * u)
                + err(kappa * l1 - 2.0 * u))
            + (kk + 3.0).powi(2) * err(top)
            + 8.0 * (kk + 1.0) * err(kappa * l1));
    GenericNegative {
        eval: Evaluation {
            abc,
            d: abc.discriminant(),
            noise: noise_of(&abc, da, db, dc),
            ab_scale: (8.0 * (kk + 1.0) + 16.0 * kl) * ab_mag,
            log_scale: s,
        },
        rho,
        tau,
    }
}

/// Evaluation on the negative half-line for any geometry.
pub fn negative_eval(p: &ChainParams, kappa: f64) -> Evaluation {
    let (l1, l3, l) = (p.ell1(), p.ell3(), p.ell());
    let kl = kappa * l;
    let kk = kl * kl;
    let pk = PI * kappa;
    match p.kind() {
        ConditionKind::Generic3 => generic_negative(p, kappa).eval,
        kind => {
            // triple scaled by e^{-s/2}, closed form by e^{-s}
            let (x_ab, x_c) = match kind {
                ConditionKind::Degree4L1Zero => (kappa * (PI - l3), pk),
                _ => (pk, kappa * (l1 + PI)),
            };
            let top = 2.0 * x_ab.abs().max(x_c.abs());
            let s = if top > EXP_LIMIT { top } else { 0.0 };
            let hs = 0.5 * s;
            let abc = AbcTriple {
                a: (1.0 - kk) * ch(x_ab, hs),
                b: -2.0 * kl * sh(x_ab, hs),
                c: (1.0 - kk) * ch(x_c, hs),
            };
            // d = 2(a² + b² − c²) with c² − a² factored so the huge cosh
            // terms never cancel: ch x_c − ch x_ab = 2 sh(y₁) sh(y₂)
            let xa = x_ab.abs();
            let (y1, y2) = (0.5 * (x_c + xa), 0.5 * (x_c - xa));
            let diff = 2.0 * sh(y1, hs - y2) * sh(y2, y2);
            let one_m_k = (1.0 - kl) * (1.0 + kl);
            let q = one_m_k * one_m_k * diff * (ch(x_c, hs) + ch(x_ab, hs));
            let d = 2.0 * (abc.b * abc.b - q);
            let rel = EPS * (8.0 + top);
            let noise = 4.0
                * (rel * (abc.b * abc.b + q.abs())
                    + q.abs() * EPS * kl / (1.0 - kl).abs().max(EPS));
            Evaluation {
                abc,
                d,
                noise,
                ab_scale: (kk + 1.0 + 2.0 * kl) * ch(x_ab, hs),
                log_scale: hs,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn sym() -> ChainParams {
        ChainParams::new(PI, PI, 1.0).unwrap()
    }

    #[test]
    fn reduced_trig_exact_at_integers() {
        for n in -5..=5 {
            assert_eq!(sin_pi(n as f64), 0.0);
            assert_eq!(cos_pi(n as f64).abs(), 1.0);
        }
        assert!((sin_pi(0.5) - 1.0).abs() < 1e-16);
        assert!((cos_pi(1.0 / 3.0) - 0.5).abs() < 1e-15);
        assert!((sin_pi(1234.25) - (PI * 1234.25).sin()).abs() < 1e-12);
    }

    #[test]
    fn scale_resonance_vanishes_for_all_theta() {
        for i in 0..32 {
            let th = -PI + i as f64 * PI / 16.0;
            let v = eval_full_condition(&sym(), 1.0, th).unwrap();
            assert!(v.abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn integer_value_is_theta_free() {
        // ℓ=1/2, k = 3: sin 3ℓ₁ sin² 3ℓ₃ ≠ 0
        let p = ChainParams::new(1.0, 2.0, 0.5).unwrap();
        let n = 3.0_f64;
        let expected =
            -4.0 * (n * n * 0.25 - 1.0).powi(2) * (n * 1.0).sin() * (n * 2.0).sin().powi(2);
        for i in 0..16 {
            let th = -PI + i as f64 * 0.39;
            let v = eval_full_condition(&p, n, th).unwrap();
            assert!(
                (v - expected).abs() < 1e-10 * expected.abs(),
                "{v} vs {expected}"
            );
        }
        assert!(expected.abs() > 0.05);
    }

    #[test]
    fn generic_evaluators_reject_degree4() {
        let p = ChainParams::new(0.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            eval_full_condition(&p, 1.3, 0.0),
            Err(Error::WrongKind { .. })
        ));
        assert!(matches!(
            eval_negative_condition(&p, 1.3, 0.0),
            Err(Error::WrongKind { .. })
        ));
        assert!(negative_band_function(&p, 1.0).is_err());
        assert!(degree4_conditions(&sym(), Spectral::Momentum(1.0), 0.0).is_err());
        assert!(negative_h_g(&sym(), 1.0).is_err());
    }

    #[test]
    fn abc_at_integers_and_symmetry() {
        let p = ChainParams::new(1.3, 2.1, 0.7).unwrap();
        let t = abc_positive(&p, 4.0);
        assert_eq!(t.a, 0.0);
        assert_eq!(t.b, 0.0);
        let q = ChainParams::new(0.4, PI, 1.2).unwrap();
        for i in 1..50 {
            let k = 0.37 * i as f64;
            let ev = positive_eval(&q, k);
            assert!(ev.abc.b.abs() < 1e-14 * ev.ab_scale * (1.0 + k), "{k}");
        }
    }

    #[test]
    fn symmetric_degree4_covers_axis() {
        let p = ChainParams::new(0.0, PI, 1.0).unwrap();
        for i in 1..400 {
            let k = 0.0371 * i as f64;
            let ev = positive_eval(&p, k);
            assert!(ev.in_band(), "k = {k}, d = {}", ev.d);
        }
    }

    #[test]
    fn symmetric_degree4_dispersion() {
        let p = ChainParams::new(0.0, PI, 1.0).unwrap();
        let k = 2.3;
        let (t1, t2) = dispersion_theta(&p, k).unwrap().unwrap();
        let want = wrap_theta(PI * k);
        let hit = |t: f64| (t - want).abs() < 1e-9 || (t + want).abs() < 1e-9;
        assert!(hit(t1) && hit(t2), "{t1} {t2} {want}");
    }

    #[test]
    fn degree4_tight_binding_sign() {
        let l3 = 1.1;
        let p = ChainParams::new(0.0, l3, 1.0).unwrap();
        let mut agree = 0;
        let mut total = 0;
        for i in 0..2000 {
            let k = 200.0 + 0.0137 * i as f64;
            let s = (k * (2.0 * PI - l3)).sin() * (k * l3).sin();
            if s.abs() < 0.05 {
                continue;
            }
            total += 1;
            if (band_discriminant(&p, k) >= 0.0) == (s >= 0.0) {
                agree += 1;
            }
        }
        assert_eq!(agree, total);
    }

    #[test]
    fn degree4_closed_form_is_twice_reduced_discriminant() {
        for &(l1, l3) in &[(0.0, 1.0), (0.0, 4.0), (1.0, 0.0), (2.5, 0.0)] {
            let p = ChainParams::new(l1, l3, 0.8).unwrap();
            for i in 1..60 {
                let k = 0.173 * i as f64;
                let ev = positive_eval(&p, k);
                let two = 2.0 * ev.abc.discriminant();
                assert!(
                    (ev.d - two).abs() < 1e-9 * (1.0 + ev.d.abs()),
                    "{} {}",
                    ev.d,
                    two
                );
                let nv = negative_eval(&p, k);
                let two = 2.0 * nv.abc.discriminant();
                assert!(
                    (nv.d - two).abs() < 1e-9 * (1.0 + nv.d.abs()),
                    "{} {}",
                    nv.d,
                    two
                );
            }
        }
    }

    #[test]
    fn degree4_annulled_brackets() {
        let p = ChainParams::new(0.0, PI, 1.0).unwrap();
        for &k in &[0.3, 1.7, 4.2] {
            let v = degree4_conditions(&p, Spectral::Momentum(k), wrap_theta(k * PI)).unwrap();
            assert!(v.abs() < 1e-12, "{v}");
        }
        let l1 = 1.3;
        let q = ChainParams::new(l1, 0.0, 0.6).unwrap();
        for n in 1..8 {
            let th = (n as f64 * l1).cos().acos();
            let v = degree4_conditions(&q, Spectral::Momentum(n as f64), th).unwrap();
            assert!(v.abs() < 1e-11, "{v}");
        }
    }

    #[test]
    fn degree4_is_limit_of_generic() {
        for &l3 in &[1.0, 2.7] {
            let g = ChainParams::new(1e-6, l3, 0.9).unwrap();
            let d = ChainParams::new(0.0, l3, 0.9).unwrap();
            for &(k, th) in &[(0.7, 0.3), (2.35, -1.1), (3.6, 2.0)] {
                let full = eval_full_condition(&g, k, th).unwrap();
                let lim = 16.0 * degree4_full_condition(&d, k, th).unwrap();
                assert!((full - lim).abs() < 1e-4 * lim.abs(), "{full} vs {lim}");
            }
        }
        let g = ChainParams::new(1.7, 1e-7, 0.9).unwrap();
        let d = ChainParams::new(1.7, 0.0, 0.9).unwrap();
        for &(k, th) in &[(0.7, 0.3), (2.35, -1.1), (3.6, 2.0)] {
            let full = eval_full_condition(&g, k, th).unwrap();
            let lim = 16.0 * degree4_full_condition(&d, k, th).unwrap();
            assert!((full - lim).abs() < 1e-4 * lim.abs(), "{full} vs {lim}");
        }
    }

    #[test]
    fn symmetric_negative_reduction() {
        // with ℓ₃ = π the condition reads cosθ = c/a
        for &(l1, l) in &[(PI, 1.0), (0.7, 1.3), (2.0, 0.6)] {
            let p = ChainParams::new(l1, PI, l).unwrap();
            for i in 1..30 {
                let kappa = 0.11 * i as f64;
                if (kappa * l - 1.0).abs() < 1e-3 {
                    continue;
                }
                let kk = (kappa * l).powi(2);
                let rhs = (PI * kappa).cosh() * (kappa * l1).cosh()
                    + (PI * kappa).sinh() * (kappa * l1).sinh() * (kk * kk - 2.0 * kk + 5.0)
                        / (4.0 - 4.0 * kk);
                let t = negative_eval(&p, kappa).abc;
                assert!(t.b.abs() < 1e-12 * t.a.abs());
                assert!(
                    (t.c / t.a - rhs).abs() < 1e-9 * rhs.abs(),
                    "{} {}",
                    t.c / t.a,
                    rhs
                );
                if kappa * l < 1.0 {
                    assert!(rhs > 1.0);
                }
            }
        }
    }

    #[test]
    fn negative_small_kappa_expansion() {
        let (l1, l3) = (1.2, 2.3);
        let p = ChainParams::new(l1, l3, 0.8).unwrap();
        let kappa: f64 = 1e-2;
        let lead =
            -128.0 * PI * (l1 + 2.0 * PI) * ((2.0 * PI - l3) * l3 + 2.0 * PI * l1) * kappa.powi(4);
        let v = negative_band_function(&p, kappa).unwrap().value;
        assert!((v - lead).abs() < 0.05 * lead.abs(), "{v} vs {lead}");
    }

    #[test]
    fn negative_symmetric_zero_at_sqrt3() {
        for &l in &[1.0, 0.5, 2.0] {
            let p = ChainParams::new(PI, PI, l).unwrap();
            let kappa = 3f64.sqrt() / l;
            let aux = negative_band_function(&p, kappa).unwrap();
            let scale = negative_eval(&p, kappa).noise;
            assert!(
                aux.value.abs() <= 10.0 * scale,
                "{} vs noise {}",
                aux.value,
                scale
            );
            if l == 1.0 {
                // interior of the band [1.7218, 1.7418]
                assert!(negative_band_function(&p, kappa * 1.001).unwrap().value > 0.0);
            }
        }
    }

    #[test]
    fn negative_merge_closed_form() {
        let p = ChainParams::new(PI, PI, 1.3).unwrap();
        for i in 1..20 {
            let kappa = 0.2 * i as f64;
            let kk = (kappa * 1.3).powi(2);
            let want = -8.0
                * (PI * kappa).sinh().powi(4)
                * (kk - 3.0).powi(2)
                * (-kk * kk - 10.0 * kk + (2.0 * PI * kappa).cosh() * (kk - 3.0).powi(2) + 7.0);
            let got = negative_band_function(&p, kappa).unwrap().value;
            assert!(
                (got - want).abs() < 1e-8 * want.abs().max(1.0),
                "{got} vs {want}"
            );
        }
    }

    #[test]
    fn h_and_g_special_values() {
        for &l3 in &[0.4, 1.0, 2.5, 4.0] {
            let p = ChainParams::new(0.0, l3, 0.7).unwrap();
            assert!(negative_h_g(&p, 1.0 / 0.7).unwrap() > 0.0);
        }
        let flat = ChainParams::new(0.0, PI, 0.7).unwrap();
        for i in 1..40 {
            let kappa = 0.1 * i as f64;
            let h = negative_h_g(&flat, kappa).unwrap();
            let want = -2.0 * ((kappa * 0.7).powi(2) - 1.0).powi(2) * (PI * kappa).sinh().powi(2);
            assert!(
                (h - want).abs() < 1e-9 * want.abs().max(1.0),
                "{h} vs {want}"
            );
            assert!(h <= 1e-9);
        }
        for &l1 in &[0.5, 2.0, 6.0] {
            let p = ChainParams::new(l1, 0.0, 0.5).unwrap();
            assert!(negative_h_g(&p, 2.0).unwrap() > 0.0);
        }
    }

    #[test]
    fn large_kappa_goes_to_minus_infinity() {
        let g = ChainParams::new(1.0, 2.0, 1.0).unwrap();
        let h = ChainParams::new(0.0, 2.0, 1.0).unwrap();
        let gg = ChainParams::new(1.0, 0.0, 1.0).unwrap();
        let mut prev = f64::INFINITY;
        for &kappa in &[20.0, 50.0, 120.0, 400.0] {
            let aux = negative_band_function(&g, kappa).unwrap();
            assert!(aux.value < 0.0);
            let l = aux.ln_abs_value();
            assert!(l.is_finite());
            assert!(-l < prev || prev.is_infinite());
            prev = -l;
            assert!(negative_h_g(&h, kappa).unwrap() < 0.0);
            assert!(negative_h_g(&gg, kappa).unwrap() < 0.0);
        }
        assert_eq!(negative_h_g(&h, 400.0).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn scaled_and_plain_negative_agree() {
        // just below the switch, compare to a point just above via ln|value|
        let p = ChainParams::new(60.0, 2.0, 1.0).unwrap();
        let below = negative_band_function(&p, 4.0).unwrap();
        assert_eq!(below.log_scale, 0.0);
        let plain = negative_eval(&p, 4.0);
        assert_eq!(plain.d, below.value);
        let lo = (EXP_LIMIT - 0.5) / (60.0 + 2.0 * PI);
        let hi = (EXP_LIMIT + 0.5) / (60.0 + 2.0 * PI);
        let above = negative_band_function(&p, hi).unwrap();
        assert!(above.log_scale > 0.0);
        let just = negative_band_function(&p, lo).unwrap();
        assert_eq!(just.log_scale, 0.0);
        let slope = (above.ln_abs_value() - just.ln_abs_value()) / (hi - lo);
        // the band function grows like e^{2κ(ℓ₁+2π)}
        assert!(
            (slope / (2.0 * (60.0 + 2.0 * PI)) - 1.0).abs() < 0.05,
            "{slope}"
        );
    }

    #[test]
    fn theta_solutions_are_valid() {
        let t = AbcTriple {
            a: 3.0,
            b: 4.0,
            c: 2.0,
        };
        let (t1, t2) = t.thetas().unwrap();
        assert!(t.value(t1).abs() < 1e-12 && t.value(t2).abs() < 1e-12);
        assert!(AbcTriple {
            a: 1.0,
            b: 0.0,
            c: 2.0
        }
        .thetas()
        .is_none());
        let edge = AbcTriple {
            a: 3.0,
            b: 4.0,
            c: -5.0,
        };
        let th = edge.edge_theta().unwrap();
        assert!(edge.value(th).abs() < 1e-12);
        let (e1, e2) = edge.thetas().unwrap();
        assert!((e1 - e2).abs() < 1e-7 || (e1 - e2).abs() > 2.0 * PI - 1e-7);
    }

    #[test]
    fn degenerate_point_error() {
        let p = ChainParams::new(1.0, 2.0, 1.0).unwrap();
        assert!(matches!(
            dispersion_theta(&p, 3.0),
            Err(Error::DegeneratePoint { .. })
        ));
    }

    proptest! {
        #[test]
        fn abc_identity(l1 in 0.05f64..6.0, l3 in 0.05f64..6.2, l in 0.1f64..3.0,
                        k in 0.01f64..40.0, th in -PI..PI) {
            let p = ChainParams::new(l1, l3, l).unwrap();
            let t = abc_positive(&p, k);
            let lhs = eval_full_condition(&p, k, th).unwrap();
            let scale = t.a.abs() + t.b.abs() + t.c.abs()
                + (((k * l).powi(2) + 3.0).powi(2)) * (1.0 + k * 10.0) * 1e-4;
            prop_assert!((lhs - t.value(th)).abs() <= 1e-10 * scale,
                "lhs {} abc {} scale {}", lhs, t.value(th), scale);
        }

        #[test]
        fn ab_nonzero_off_integers(l1 in 0.05f64..6.0, l3 in 0.05f64..6.2, l in 0.1f64..3.0,
                                   k in 0.01f64..40.0) {
            prop_assume!((k - k.round()).abs() > 1e-6);
            let p = ChainParams::new(l1, l3, l).unwrap();
            let t = abc_positive(&p, k);
            prop_assert!(t.a * t.a + t.b * t.b > 0.0);
        }

        #[test]
        fn in_band_roots_resubstitute(l1 in 0.05f64..6.0, l3 in 0.05f64..6.2, l in 0.1f64..3.0,
                                      k in 0.01f64..30.0) {
            prop_assume!((k - k.round()).abs() > 1e-6);
            let p = ChainParams::new(l1, l3, l).unwrap();
            if let Some((t1, t2)) = dispersion_theta(&p, k).unwrap() {
                let t = abc_positive(&p, k);
                let scale = t.a.abs() + t.b.abs() + t.c.abs();
                for th in [t1, t2] {
                    prop_assert!((-PI..PI).contains(&th));
                    let v = eval_full_condition(&p, k, th).unwrap();
                    prop_assert!(v.abs() < 1e-8 * scale);
                }
            }
        }

        #[test]
        fn h_symmetric_under_arc_exchange(l3 in 0.01f64..6.27, l in 0.1f64..3.0, kappa in 0.01f64..5.0) {
            let p = ChainParams::new(0.0, l3, l).unwrap();
            let q = ChainParams::new(0.0, 2.0 * PI - l3, l).unwrap();
            let h1 = negative_h_g(&p, kappa).unwrap();
            let h2 = negative_h_g(&q, kappa).unwrap();
            let scale = negative_eval(&p, kappa).noise.max(1e-300) * 1e3 + 1e-12 * h1.abs();
            prop_assert!((h1 - h2).abs() <= scale, "{} {}", h1, h2);
        }

        #[test]
        fn no_negative_flat_bands(l1 in 0.05f64..6.0, l3 in 0.05f64..6.2, l in 0.1f64..3.0,
                                  kappa in 0.01f64..8.0) {
            let p = ChainParams::new(l1, l3, l).unwrap();
            let ev = negative_eval(&p, kappa);
            prop_assert!(ev.abc.a * ev.abc.a + ev.abc.b * ev.abc.b > 0.0);
        }

        #[test]
        fn negative_value_matches_closed_form(l1 in 0.05f64..4.0, l3 in 0.05f64..6.2, l in 0.2f64..3.0,
                                              kappa in 0.05f64..4.0) {
            let p = ChainParams::new(l1, l3, l).unwrap();
            let aux = negative_band_function(&p, kappa).unwrap();
            let kk = (kappa * l).powi(2);
            let u = kappa * (PI - l3);
            let lhs = 128.0 * (PI * kappa).sinh().powi(2)
                * (kk * kk - 6.0 * kk + (kk + 1.0).powi(2) * (2.0 * u).cosh() + 1.0)
                - (aux.rho - aux.tau).powi(2);
            let scale = (aux.rho.abs() + aux.tau.abs()).powi(2) + 256.0 * (PI * kappa).sinh().powi(2) * (kk + 1.0).powi(2) * (2.0 * u).cosh();
            prop_assert!((lhs - aux.value).abs() <= 1e-11 * scale);
        }
    }
}
