//! Chain geometry, the cyclic vertex coupling and the on-shell S-matrix.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::commensurate::PiRatio;
use crate::conditions::ConditionKind;
use crate::error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * PI;

/// A length given either as a plain number or as an exact rational multiple of π.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Length {
    Value(f64),
    Pi(PiRatio),
}

impl Length {
    pub fn value(&self) -> f64 {
        match self {
            Length::Value(v) => *v,
            Length::Pi(r) => r.value(),
        }
    }

    fn ratio(&self) -> Option<PiRatio> {
        match self {
            Length::Value(_) => None,
            Length::Pi(r) => Some(*r),
        }
    }
}

impl From<f64> for Length {
    fn from(v: f64) -> Length {
        Length::Value(v)
    }
}

#[derive(Deserialize)]
struct RawParams {
    ell1: f64,
    ell3: f64,
    ell: f64,
    #[serde(default)]
    ell1_pi: Option<PiRatio>,
    #[serde(default)]
    ell3_pi: Option<PiRatio>,
}

/// Geometry of one period: link `ell1`, lower arc `ell3`, upper arc
/// `ell2 = 2π − ell3`, coupling scale `ell`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct ChainParams {
    ell1: f64,
    ell3: f64,
    ell: f64,
    ell2: f64,
    ell1_pi: Option<PiRatio>,
    ell3_pi: Option<PiRatio>,
}

impl TryFrom<RawParams> for ChainParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<ChainParams> {
        ChainParams {
            ell1: raw.ell1,
            ell3: raw.ell3,
            ell: raw.ell,
            ell2: TWO_PI - raw.ell3,
            ell1_pi: raw.ell1_pi,
            ell3_pi: raw.ell3_pi,
        }
        .validate()
    }
}

impl ChainParams {
    pub fn new(ell1: f64, ell3: f64, ell: f64) -> Result<ChainParams> {
        ChainParams::from_lengths(Length::Value(ell1), Length::Value(ell3), ell)
    }

    pub fn from_lengths(ell1: Length, ell3: Length, ell: f64) -> Result<ChainParams> {
        ChainParams {
            ell1: ell1.value(),
            ell3: ell3.value(),
            ell,
            ell2: TWO_PI - ell3.value(),
            ell1_pi: ell1.ratio(),
            ell3_pi: ell3.ratio(),
        }
        .validate()
    }

    /// Checks the invariants and re-derives `ell2`.
    pub fn validate(self) -> Result<ChainParams> {
        if !(self.ell.is_finite() && self.ell > 0.0) {
            return Err(Error::NonPositiveScale(self.ell));
        }
        if !(self.ell3.is_finite() && (0.0..TWO_PI).contains(&self.ell3)) {
            return Err(Error::ArcOutOfRange(self.ell3));
        }
        if !(self.ell1.is_finite() && self.ell1 >= 0.0) {
            return Err(Error::InvalidLink(self.ell1));
        }
        if self.ell1 == 0.0 && self.ell3 == 0.0 {
            return Err(Error::DoubleDegenerate);
        }
        let tag_ok = |tag: Option<PiRatio>, v: f64| tag.filter(|r| r.value() == v);
        Ok(ChainParams {
            ell2: TWO_PI - self.ell3,
            ell1_pi: tag_ok(self.ell1_pi, self.ell1),
            ell3_pi: tag_ok(self.ell3_pi, self.ell3),
            ..self
        })
    }

    pub fn ell1(&self) -> f64 {
        self.ell1
    }

    pub fn ell2(&self) -> f64 {
        self.ell2
    }

    pub fn ell3(&self) -> f64 {
        self.ell3
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    /// `[ℓ₁, ℓ₂, ℓ₃]`, indexed so that `lengths()[j-1]` is ℓⱼ.
    pub fn lengths(&self) -> [f64; 3] {
        [self.ell1, self.ell2, self.ell3]
    }

    pub fn kind(&self) -> ConditionKind {
        if self.ell1 == 0.0 {
            ConditionKind::Degree4L1Zero
        } else if self.ell3 == 0.0 {
            ConditionKind::Degree4L3Zero
        } else {
            ConditionKind::Generic3
        }
    }

    /// `ℓ₁/π` as an exact fraction: the parsed tag if present, else detected.
    pub fn ell1_ratio(&self) -> Option<PiRatio> {
        self.ell1_pi.or_else(|| PiRatio::from_length(self.ell1))
    }

    pub fn ell3_ratio(&self) -> Option<PiRatio> {
        self.ell3_pi.or_else(|| PiRatio::from_length(self.ell3))
    }

    pub fn with_ell1(&self, ell1: Length) -> Result<ChainParams> {
        ChainParams::from_lengths(ell1, self.ell3_length(), self.ell)
    }

    pub fn with_ell3(&self, ell3: Length) -> Result<ChainParams> {
        ChainParams::from_lengths(self.ell1_length(), ell3, self.ell)
    }

    pub fn with_ell(&self, ell: f64) -> Result<ChainParams> {
        ChainParams::from_lengths(self.ell1_length(), self.ell3_length(), ell)
    }

    fn ell1_length(&self) -> Length {
        self.ell1_pi.map_or(Length::Value(self.ell1), Length::Pi)
    }

    fn ell3_length(&self) -> Length {
        self.ell3_pi.map_or(Length::Value(self.ell3), Length::Pi)
    }
}

/// The vertex coupling matrix; only the cyclic shift is supported.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexCoupling {
    pub degree: usize,
    pub matrix: DMatrix<Complex64>,
}

impl VertexCoupling {
    /// Entry `(i, i+1 mod n)` equal to one, all others zero.
    pub fn cyclic(degree: usize) -> VertexCoupling {
        let mut matrix = DMatrix::zeros(degree, degree);
        for i in 0..degree {
            matrix[(i, (i + 1) % degree)] = Complex64::new(1.0, 0.0);
        }
        VertexCoupling { degree, matrix }
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        unitarity_defect(&self.matrix) < tol
    }
}

/// Max-norm distance of `m·m†` from the identity.
pub fn unitarity_defect(m: &DMatrix<Complex64>) -> f64 {
    let prod = m * m.adjoint();
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((prod[(i, j)] - target).norm());
        }
    }
    worst
}

/// On-shell scattering matrix `(kℓ−1+(kℓ+1)U)(kℓ+1+(kℓ−1)U)⁻¹` for the cyclic `U`.
pub fn s_matrix(k: f64, degree: usize, ell: f64) -> Result<DMatrix<Complex64>> {
    if !(k > 0.0) || degree < 2 || !(ell > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "s_matrix needs k > 0, degree >= 2, ell > 0 (k = {k}, degree = {degree}, ell = {ell})"
        )));
    }
    let u = VertexCoupling::cyclic(degree).matrix;
    let id = DMatrix::<Complex64>::identity(degree, degree);
    let kl = Complex64::new(k * ell, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let num = &id * (kl - one) + &u * (kl + one);
    let den = &id * (kl + one) + &u * (kl - one);
    let inv = den.try_inverse().ok_or(Error::SingularDenominator { k })?;
    let s = num * inv;
    if s.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(s)
    } else {
        Err(Error::SingularDenominator { k })
    }
}

/// The spectral variable of a point: positive momentum or negative-energy decay rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Spectral {
    Momentum(f64),
    DecayRate(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentumPoint {
    pub var: Spectral,
    pub theta: f64,
}

impl MomentumPoint {
    pub fn new(var: Spectral, theta: f64) -> Result<MomentumPoint> {
        let v = match var {
            Spectral::Momentum(v) | Spectral::DecayRate(v) => v,
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "spectral variable must be positive, got {v}"
            )));
        }
        if !(-PI..PI).contains(&theta) {
            return Err(Error::InvalidArgument(format!(
                "quasimomentum {theta} outside [-pi, pi)"
            )));
        }
        Ok(MomentumPoint { var, theta })
    }

    pub fn energy(&self) -> f64 {
        match self.var {
            Spectral::Momentum(k) => k * k,
            Spectral::DecayRate(kappa) => -kappa * kappa,
        }
    }
}

/// Maps any angle into the Brillouin zone `[−π, π)`.
pub fn wrap_theta(theta: f64) -> f64 {
    let t = (theta + PI).rem_euclid(TWO_PI) - PI;
    if t >= PI {
        t - TWO_PI
    } else {
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_case_is_valid() {
        let p = ChainParams::new(PI, PI, 1.0).unwrap();
        assert_eq!(p.ell2(), PI);
        assert_eq!(p.kind(), ConditionKind::Generic3);
    }

    #[test]
    fn fig3_geometry() {
        let p = ChainParams::new(1.5 * PI, PI / 3.0, 1.0).unwrap();
        assert!((p.ell2() - 5.0 * PI / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_geometry() {
        assert_eq!(
            ChainParams::new(0.0, 0.0, 1.0),
            Err(Error::DoubleDegenerate)
        );
        assert_eq!(
            ChainParams::new(1.0, 1.0, 0.0),
            Err(Error::NonPositiveScale(0.0))
        );
        assert_eq!(
            ChainParams::new(1.0, 1.0, -2.0),
            Err(Error::NonPositiveScale(-2.0))
        );
        assert_eq!(
            ChainParams::new(1.0, TWO_PI, 1.0),
            Err(Error::ArcOutOfRange(TWO_PI))
        );
        assert_eq!(
            ChainParams::new(1.0, -0.1, 1.0),
            Err(Error::ArcOutOfRange(-0.1))
        );
        assert_eq!(
            ChainParams::new(-1.0, 1.0, 1.0),
            Err(Error::InvalidLink(-1.0))
        );
        assert!(ChainParams::new(f64::NAN, 1.0, 1.0).is_err());
    }

    #[test]
    fn degenerate_kinds() {
        assert_eq!(
            ChainParams::new(0.0, 1.0, 1.0).unwrap().kind(),
            ConditionKind::Degree4L1Zero
        );
        assert_eq!(
            ChainParams::new(1.0, 0.0, 1.0).unwrap().kind(),
            ConditionKind::Degree4L3Zero
        );
    }

    #[test]
    fn exact_ratio_tags() {
        let r = PiRatio::new(4, 11).unwrap();
        let p = ChainParams::from_lengths(Length::Pi(r), Length::Pi(r), 1.0).unwrap();
        assert_eq!(p.ell1_ratio(), Some(r));
        assert_eq!(p.ell3(), r.value());
        let q = ChainParams::new(1.0, 2.0, 1.0).unwrap();
        assert_eq!(q.ell3_ratio(), None);
    }

    #[test]
    fn serde_round_trip() {
        let p = ChainParams::from_lengths(
            Length::Pi(PiRatio::new(1, 5).unwrap()),
            Length::Value(0.7),
            0.5,
        )
        .unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let back: ChainParams = serde_json::from_str(&s).unwrap();
        assert_eq!(p, back);
        let bad = r#"{"ell1":0.0,"ell3":0.0,"ell":1.0}"#;
        assert!(serde_json::from_str::<ChainParams>(bad).is_err());
    }

    #[test]
    fn cyclic_coupling_shape() {
        let u = VertexCoupling::cyclic(3);
        assert!(u.is_unitary(1e-12));
        assert_eq!(u.matrix[(0, 1)], Complex64::new(1.0, 0.0));
        assert_eq!(u.matrix[(1, 2)], Complex64::new(1.0, 0.0));
        assert_eq!(u.matrix[(2, 0)], Complex64::new(1.0, 0.0));
        assert_eq!(u.matrix[(0, 0)], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn s_matrix_reduces_to_u_at_inverse_scale() {
        for &(ell, deg) in &[(1.0, 3), (0.5, 3), (2.0, 4)] {
            let s = s_matrix(1.0 / ell, deg, ell).unwrap();
            let u = VertexCoupling::cyclic(deg).matrix;
            let d = (s - u).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(d < 1e-12, "deviation {d}");
        }
    }

    #[test]
    fn s_matrix_unitary_at_k2() {
        let s = s_matrix(2.0, 3, 1.0).unwrap();
        assert!(unitarity_defect(&s) < 1e-12);
    }

    #[test]
    fn s_matrix_rejects_bad_input() {
        assert!(s_matrix(0.0, 3, 1.0).is_err());
        assert!(s_matrix(1.0, 1, 1.0).is_err());
    }

    #[test]
    fn wrap_into_zone() {
        assert_eq!(wrap_theta(PI), -PI);
        assert!((wrap_theta(3.0 * PI + 0.5) - (-PI + 0.5)).abs() < 1e-12);
        assert_eq!(wrap_theta(0.25), 0.25);
        assert!(MomentumPoint::new(Spectral::Momentum(1.0), PI).is_err());
        assert!(MomentumPoint::new(Spectral::DecayRate(-1.0), 0.0).is_err());
        let p = MomentumPoint::new(Spectral::DecayRate(2.0), 0.0).unwrap();
        assert_eq!(p.energy(), -4.0);
    }
}
