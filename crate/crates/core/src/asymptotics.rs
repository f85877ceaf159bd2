//! High-energy band widths: the β coefficients of the expansion around
//! `k = nπ/ℓⱼ`, the leading width for each degeneracy branch, and the
//! comparison with scanned widths.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::conditions::{cos_pi, sin_pi, ConditionKind};
use crate::error::{Error, Result};
use crate::model::ChainParams;
use crate::scanner::{scan_negative, zone_edge_width, BandKind};

/// Smallest band index for which a leading-order width is returned.
pub const MIN_INDEX: u64 = 10;
/// Relative threshold below which a β coefficient counts as zero.
pub const BETA_ZERO_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaSet {
    pub series: u8,
    pub n: u64,
    /// `β₁..β₁₁`; only the first three are defined for series 2 and 3,
    /// the rest are left at zero.
    pub beta: [f64; 11],
}

impl BetaSet {
    /// `β_i`, one-based.
    pub fn b(&self, i: usize) -> f64 {
        self.beta[i - 1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    GenericB3,
    QuadraticB6,
    CubicB9,
    WidthJ23,
    /// `β₁ = β₂ = 0` with `β₆ ≠ 0`.
    Mixed,
    /// No closed form applies; the width comes from the scanner.
    Unresolved,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticBandModel {
    pub series: u8,
    pub n: u64,
    pub branch: Branch,
    /// Energy width.
    pub width_leading: f64,
    pub center_k: f64,
    /// Band centre energy including the `1/n` shift; GenericB3 only.
    pub center_energy: Option<f64>,
    /// The width is numeric rather than a leading term.
    pub flagged: bool,
}

fn series_length(p: &ChainParams, series: u8) -> Result<f64> {
    match series {
        1..=3 => Ok(p.lengths()[series as usize - 1]),
        _ => Err(Error::InvalidArgument(format!(
            "series must be 1, 2 or 3, got {series}"
        ))),
    }
}

fn sign(n: u64) -> f64 {
    if n.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

fn betas_link(p: &ChainParams, n: u64) -> [f64; 11] {
    let (l1, l2, l3, l) = (p.ell1(), p.ell2(), p.ell3(), p.ell());
    let nf = n as f64;
    let m = sign(n);
    let (s2, c2) = (sin_pi(nf * l2 / l1), cos_pi(nf * l2 / l1));
    let (s3, c3) = (sin_pi(nf * l3 / l1), cos_pi(nf * l3 / l1));
    let (s, c) = (sin_pi(2.0 * PI * nf / l1), cos_pi(2.0 * PI * nf / l1));
    let (ll, l4) = (l * l, l.powi(4));
    let l1s = l1 * l1;
    [
        -2.0 * m * ll * l1s * s,
        2.0 * ll * l1s * (s2 + s3),
        m * l1 * l4 * s2 * s3,
        -2.0 * m * ll * l1s * (2.0 * PI * c + l1 * (c2 * c3 - 1.0)),
        2.0 * ll * l1s * (l2 * c2 + l3 * c3),
        m * l4 * l1 * (l2 * s3 * c2 + l3 * s2 * c3),
        m * ll * l1s * (l1s * s + 4.0 * PI * PI * s)
            + 2.0 * m * ll * l1s * l1 * (l2 * s2 * c3 + l3 * s3 * c2),
        -ll * l1s * (l2 * l2 * s2 + l3 * l3 * s3),
        m * l4 * l1 * (6.0 * l2 * l3 * c2 * c3 - (l1s + 3.0 * (l2 * l2 + l3 * l3)) * s2 * s3) / 6.0,
        m * ll * l1s * l1 * ((l2 * l2 + l3 * l3) * c2 * c3 - 2.0 * l2 * l3 * s2 * s3)
            + m * ll
                * l1s
                * (l1s * l1 * (c2 * c3 - 1.0) + 6.0 * PI * l1s * c + 8.0 * PI.powi(3) * c)
                / 3.0,
        -ll * l1s * (l2.powi(3) * c2 + l3.powi(3) * c3) / 3.0,
    ]
}

/// Series 2 (`lj = ℓ₂`, `lo = ℓ₃`) and series 3 (roles swapped).
fn betas_arc(p: &ChainParams, n: u64, lj: f64, lo: f64) -> [f64; 11] {
    let (l1, l) = (p.ell1(), p.ell());
    let nf = n as f64;
    let ll = l * l;
    let s1 = sin_pi(nf * l1 / lj);
    let so = sin_pi(nf * lo / lj);
    let s1o = sin_pi(nf * (l1 + lo) / lj);
    let mut beta = [0.0; 11];
    beta[0] = 2.0 * ll * lj * lj * (s1 - sign(n) * s1o);
    beta[1] = 2.0 * ll * lj * lj * so;
    beta[2] = sign(n) * ll * ll * lj * s1 * so;
    beta
}

pub fn beta_coefficients(p: &ChainParams, series: u8, n: u64) -> Result<BetaSet> {
    let lj = series_length(p, series)?;
    if !(lj > 0.0) || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "series {series} needs a positive length and n ≥ 1"
        )));
    }
    let beta = match series {
        1 => betas_link(p, n),
        2 => betas_arc(p, n, p.ell2(), p.ell3()),
        _ => betas_arc(p, n, p.ell3(), p.ell2()),
    };
    Ok(BetaSet { series, n, beta })
}

fn unresolved(b: &BetaSet) -> Error {
    Error::BranchUnresolved {
        series: b.series,
        n: b.n,
        beta: b.beta.to_vec(),
    }
}

/// Size of each coefficient with its trigonometric factors replaced by one.
fn natural_scales(p: &ChainParams, b: &BetaSet) -> [f64; 11] {
    let (l1, l2, l3, l) = (p.ell1(), p.ell2(), p.ell3(), p.ell());
    let (ll, l4) = (l * l, l.powi(4));
    let mut out = [0.0; 11];
    if b.series != 1 {
        let lj = p.lengths()[b.series as usize - 1];
        out[0] = 4.0 * ll * lj * lj;
        out[1] = 2.0 * ll * lj * lj;
        out[2] = l4 * lj;
        return out;
    }
    let l1s = l1 * l1;
    let sq = l2 * l2 + l3 * l3;
    out[0] = 2.0 * ll * l1s;
    out[1] = 4.0 * ll * l1s;
    out[2] = l1 * l4;
    out[3] = 2.0 * ll * l1s * (2.0 * PI + 2.0 * l1);
    out[4] = 2.0 * ll * l1s * (l2 + l3);
    out[5] = l4 * l1 * (l2 + l3);
    out[6] = ll * l1s * (l1s + 4.0 * PI * PI) + 2.0 * ll * l1s * l1 * (l2 + l3);
    out[7] = ll * l1s * sq;
    out[8] = l4 * l1 * (6.0 * l2 * l3 + l1s + 3.0 * sq) / 6.0;
    out[9] = ll * l1s * l1 * (sq + 2.0 * l2 * l3)
        + ll * l1s * (2.0 * l1s * l1 + 6.0 * PI * l1s + 8.0 * PI.powi(3)) / 3.0;
    out[10] = ll * l1s * (l2.powi(3) + l3.powi(3)) / 3.0;
    out
}

/// Branch for a β set, from its exact zero pattern. A coefficient counts as
/// zero below [`BETA_ZERO_TOL`] times its natural size.
pub fn select_branch(p: &ChainParams, b: &BetaSet) -> Result<Branch> {
    series_length(p, b.series)?;
    let scale = natural_scales(p, b);
    let z = |i: usize| b.b(i).abs() < BETA_ZERO_TOL * scale[i - 1];
    if b.series != 1 {
        return if z(3) {
            Err(unresolved(b))
        } else {
            Ok(Branch::WidthJ23)
        };
    }
    let sum_zero = (b.b(1) + b.b(2)).abs() < BETA_ZERO_TOL * scale[1];
    if z(1) && z(2) && !z(6) {
        Ok(Branch::Mixed)
    } else if !z(3) {
        Ok(Branch::GenericB3)
    } else if sum_zero && !z(6) {
        Ok(Branch::QuadraticB6)
    } else if [1, 2, 3, 6, 7, 8].iter().all(|&i| z(i)) && !z(9) {
        Ok(Branch::CubicB9)
    } else {
        Err(unresolved(b))
    }
}

fn width_for(branch: Branch, b: &BetaSet, lj: f64) -> f64 {
    let nf = b.n as f64;
    match branch {
        Branch::GenericB3 | Branch::WidthJ23 => (4.0 / lj) / (PI * nf) * (b.b(2) / b.b(3)).abs(),
        Branch::QuadraticB6 => (2.0 / lj) * ((b.b(2) - b.b(1)) / b.b(6)).max(0.0).sqrt(),
        Branch::CubicB9 => {
            // the roots at θ = 0 and θ = π sit at δ² = r0 and δ² = rπ
            let r0 = -(b.b(4) + b.b(5)) / b.b(9);
            let rpi = (b.b(5) - b.b(4)) / b.b(9);
            (2.0 / lj) * (rpi.max(0.0).sqrt() - r0.max(0.0).sqrt()).abs()
        }
        Branch::Mixed => {
            let (b3, b5, b6, b8) = (b.b(3), b.b(5), b.b(6), b.b(8));
            (4.0 * PI / lj) / nf * ((b5 * b6 - b3 * b8) / (PI * PI * b6 * b6)).abs()
        }
        Branch::Unresolved => f64::NAN,
    }
}

pub fn band_width_leading(p: &ChainParams, series: u8, n: u64) -> Result<AsymptoticBandModel> {
    if p.kind() != ConditionKind::Generic3 {
        return Err(Error::WrongKind {
            expected: ConditionKind::Generic3,
            actual: p.kind(),
        });
    }
    if n < MIN_INDEX {
        return Err(Error::InvalidArgument(format!(
            "band index {n} below {MIN_INDEX}"
        )));
    }
    let lj = series_length(p, series)?;
    let b = beta_coefficients(p, series, n)?;
    let branch = select_branch(p, &b)?;
    let center_k = n as f64 * PI / lj;
    let center_energy = (branch == Branch::GenericB3)
        .then(|| center_k * center_k - (2.0 / lj) / (PI * n as f64) * b.b(1) / b.b(3));
    Ok(AsymptoticBandModel {
        series,
        n,
        branch,
        width_leading: width_for(branch, &b, lj),
        center_k,
        center_energy,
        flagged: false,
    })
}

/// Like [`band_width_leading`], with the scanned zone-edge width standing in
/// (flagged) when no branch applies.
pub fn band_width_or_scan(p: &ChainParams, series: u8, n: u64) -> Result<AsymptoticBandModel> {
    match band_width_leading(p, series, n) {
        Err(Error::BranchUnresolved { .. }) => {
            let z = zone_edge_width(p, series, n)?;
            Ok(AsymptoticBandModel {
                series,
                n,
                branch: Branch::Unresolved,
                width_leading: z.width,
                center_k: z.center,
                center_energy: None,
                flagged: true,
            })
        }
        other => other,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeWidth {
    /// Energy width of the single negative band.
    pub width: f64,
    /// Order of the neglected terms, `exp(−2ℓ₁/ℓ)`.
    pub error_order: f64,
}

/// Width of the negative band for `ℓ₃ = 0` and a long link.
pub fn negative_band_width_degree4(p: &ChainParams) -> Result<NegativeWidth> {
    if p.kind() != ConditionKind::Degree4L3Zero {
        return Err(Error::WrongKind {
            expected: ConditionKind::Degree4L3Zero,
            actual: p.kind(),
        });
    }
    let (l1, l) = (p.ell1(), p.ell());
    if l1 < 4.0 * l {
        return Err(Error::RegimeViolation(format!(
            "link {l1} shorter than 4ℓ = {}",
            4.0 * l
        )));
    }
    Ok(NegativeWidth {
        width: 8.0 / (l * l) * (-(PI + l1) / l).exp() * (PI / l).sinh(),
        error_order: (-2.0 * l1 / l).exp(),
    })
}

/// Energy width of the scanned negative band, for comparison with
/// [`negative_band_width_degree4`].
pub fn scanned_negative_width(p: &ChainParams) -> Result<f64> {
    let kappa_max = 3.0 * 3f64.sqrt() / p.ell();
    let bands = scan_negative(p, kappa_max)?;
    Ok(bands
        .iter()
        .filter(|b| b.kind == BandKind::AbsolutelyContinuous)
        .map(|b| b.energy_width())
        .sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub series: u8,
    pub n: u64,
    pub center_k: f64,
    pub branch: Option<Branch>,
    pub leading: Option<f64>,
    /// Zone-edge width from the scanned condition.
    pub scanned: Option<f64>,
    /// Energy length of all bands in the window.
    pub extent: Option<f64>,
    pub rel_deviation: Option<f64>,
    pub error: Option<String>,
}

/// Scanned vs leading-order widths for every `n` in `ns`.
pub fn asymptotic_vs_scan_report(p: &ChainParams, series: u8, ns: &[u64]) -> Vec<ReportRow> {
    ns.par_iter()
        .map(|&n| {
            let lj = p
                .lengths()
                .get(series.wrapping_sub(1) as usize)
                .copied()
                .unwrap_or(f64::NAN);
            let mut row = ReportRow {
                series,
                n,
                center_k: n as f64 * PI / lj,
                branch: None,
                leading: None,
                scanned: None,
                extent: None,
                rel_deviation: None,
                error: None,
            };
            let mut errors = Vec::new();
            match band_width_leading(p, series, n) {
                Ok(m) => {
                    row.branch = Some(m.branch);
                    row.leading = Some(m.width_leading);
                }
                Err(e @ Error::BranchUnresolved { .. }) => {
                    row.branch = Some(Branch::Unresolved);
                    errors.push(e.to_string());
                }
                Err(e) => errors.push(e.to_string()),
            }
            match zone_edge_width(p, series, n) {
                Ok(z) => {
                    row.scanned = Some(z.width);
                    row.extent = Some(z.extent);
                }
                Err(e) => errors.push(e.to_string()),
            }
            if let (Some(a), Some(s)) = (row.leading, row.scanned) {
                row.rel_deviation = Some((s - a).abs() / a);
            }
            if !errors.is_empty() {
                row.error = Some(errors.join("; "));
            }
            row
        })
        .collect()
}
