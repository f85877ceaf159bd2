//! Brute-force ground truth: the 6×6 system for the cell coefficients,
//! assembled directly from the Ansatz, the Floquet relations and the
//! vertex matching conditions.

use nalgebra::Matrix6;
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::model::ChainParams;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Coefficient matrix over `(a₁⁺, a₁⁻, a₂⁺, a₂⁻, a₃⁺, a₃⁻)`; the `b`
/// coefficients are eliminated through continuity at the link midpoint
/// and the Floquet conditions at the cell ends.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSystem {
    pub matrix: Matrix6<Complex64>,
    pub k: Complex64,
    pub theta: f64,
    pub ell: f64,
}

type Row = [Complex64; 6];

fn zero_row() -> Row {
    [Complex64::new(0.0, 0.0); 6]
}

fn lin(terms: &[(Complex64, &Row)]) -> Row {
    let mut out = zero_row();
    for (w, r) in terms {
        for i in 0..6 {
            out[i] += w * r[i];
        }
    }
    out
}

pub fn build_cell_system(p: &ChainParams, k: Complex64, theta: f64) -> CellSystem {
    let lens = p.lengths();
    let ik = I * k;
    let e = |x: f64| (ik * x).exp();
    let phase = (-I * theta).exp();
    // value and outward-coordinate derivative rows of ψⱼ(x) and φⱼ(x)
    let psi = |j: usize, x: f64| {
        let mut v = zero_row();
        let mut d = zero_row();
        v[2 * j] = e(x);
        v[2 * j + 1] = e(-x);
        d[2 * j] = ik * e(x);
        d[2 * j + 1] = -ik * e(-x);
        (v, d)
    };
    let phi = |j: usize, x: f64| {
        let (bp, bm) = if j == 0 {
            (Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0))
        } else {
            (phase * e(lens[j]), phase * e(-lens[j]))
        };
        let mut v = zero_row();
        let mut d = zero_row();
        v[2 * j] = bp * e(x);
        v[2 * j + 1] = bm * e(-x);
        d[2 * j] = bp * ik * e(x);
        d[2 * j + 1] = -bm * ik * e(-x);
        (v, d)
    };
    let half = lens[0] / 2.0;
    let (p1, dp1) = psi(0, half);
    let (p2, dp2) = psi(1, 0.0);
    let (p3, dp3) = psi(2, 0.0);
    let (f1, df1) = phi(0, -half);
    let (f2, df2) = phi(1, 0.0);
    let (f3, df3) = phi(2, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let il = I * p.ell();
    let rows = [
        lin(&[(one, &p3), (-one, &p1), (il, &dp3), (-il, &dp1)]),
        lin(&[(one, &p2), (-one, &p3), (il, &dp2), (il, &dp3)]),
        lin(&[(one, &p1), (-one, &p2), (il, &dp2), (-il, &dp1)]),
        lin(&[(one, &f2), (-one, &f1), (il, &df1), (-il, &df2)]),
        lin(&[(one, &f3), (-one, &f2), (-il, &df2), (-il, &df3)]),
        lin(&[(one, &f1), (-one, &f3), (il, &df1), (-il, &df3)]),
    ];
    let matrix = Matrix6::from_fn(|r, c| rows[r][c]);
    CellSystem {
        matrix,
        k,
        theta,
        ell: p.ell(),
    }
}

impl CellSystem {
    pub fn determinant(&self) -> Complex64 {
        self.matrix.determinant()
    }

    /// Nonvanishing factor relating the determinant to the closed-form
    /// condition: `det = −8i k²ℓ² e^{−2iθ} · F(k, θ)`.
    pub fn prefactor(&self) -> Complex64 {
        -8.0 * I * self.k * self.k * self.ell * self.ell * (-2.0 * I * self.theta).exp()
    }

    pub fn normalized(&self) -> Complex64 {
        self.determinant() / self.prefactor()
    }
}

/// Determinant divided by its known prefactor; equals the closed-form
/// positive condition at real `k`.
pub fn oracle_value(p: &ChainParams, k: f64, theta: f64) -> Complex64 {
    build_cell_system(p, Complex64::new(k, 0.0), theta).normalized()
}

/// Same at `k = iκ`; equals the closed-form negative condition.
pub fn oracle_negative_value(p: &ChainParams, kappa: f64, theta: f64) -> Complex64 {
    I * build_cell_system(p, Complex64::new(0.0, kappa), theta).normalized()
}

/// Empirical ratio `det / (k²ℓ² e^{−2iθ} F)` at a reference point, for
/// checking the prefactor against a closed-form value `f`.
pub fn estimate_ratio(p: &ChainParams, k: f64, theta: f64, f: f64) -> Complex64 {
    let sys = build_cell_system(p, Complex64::new(k, 0.0), theta);
    let kl = k * p.ell();
    sys.determinant() / (kl * kl * (-2.0 * I * theta).exp() * f)
}

fn det_abs(p: &ChainParams, k: f64, theta: f64) -> f64 {
    oracle_value(p, k, theta).norm()
}

/// Golden-section minimum of `f` on `[lo, hi]`.
pub(crate) fn golden_min(mut lo: f64, mut hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Independent band test: is `|det|` minimised over θ (grid plus local
/// refinement) below `1e−8` of its grid maximum?
pub fn oracle_band_test(p: &ChainParams, k: f64, theta_samples: usize) -> bool {
    let n = theta_samples.max(64);
    let h = 2.0 * PI / n as f64;
    let vals: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| det_abs(p, k, -PI + i as f64 * h))
        .collect();
    let max = vals.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return true;
    }
    // refine around every local minimum of the sampled curve
    let mut best = f64::INFINITY;
    for i in 0..n {
        let prev = vals[(i + n - 1) % n];
        let next = vals[(i + 1) % n];
        if vals[i] <= prev && vals[i] <= next {
            let c = -PI + i as f64 * h;
            let (_, v) = golden_min(c - h, c + h, 1e-13, |t| det_abs(p, k, t));
            best = best.min(v.min(vals[i]));
        }
    }
    best < 1e-8 * max
}
