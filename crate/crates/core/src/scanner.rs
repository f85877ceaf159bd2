//! Spectra from the pointwise evaluators: band edges by bracketing and
//! bisection, flat bands, gap closings, the negative bands, probability of
//! belonging to the spectrum and parameter-sweep maps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::commensurate::PiRatio;
use crate::conditions::{
    degree4_conditions, degree4_full_condition, eval_full_condition, negative_eval, positive_eval,
    ConditionKind, Evaluation,
};
use crate::error::{Error, Result};
use crate::model::{ChainParams, Length, Spectral};
use crate::oracle::golden_min;

/// Bisection tolerance on band edges.
pub const EDGE_TOL: f64 = 1e-10;
/// Lower bound for the base grid step.
pub const MIN_STEP: f64 = 1e-5;
/// θ samples used by the flat-band identity test.
pub const FLAT_THETA_SAMPLES: usize = 32;
/// Gap width below which a predicted crossing counts as verified.
pub const CROSSING_GAP_TOL: f64 = 1e-8;

const FINE_DIVISOR: f64 = 16.0;
const FINE_HALF_COUNT: i64 = 32;
const FLAT_AB_RATIO: f64 = 1e-6;
const FLAT_IDENTITY_TOL: f64 = 1e-9;
const RESCAN_SAMPLES: f64 = 256.0;
const NARROW_WIDTH: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BandScale {
    Momentum,
    Energy,
    /// `κ` axis of the negative half-line, `E = −κ²`.
    DecayRate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BandKind {
    AbsolutelyContinuous,
    Flat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandInterval {
    pub lo: f64,
    pub hi: f64,
    pub scale: BandScale,
    pub edge_theta_lo: Option<f64>,
    pub edge_theta_hi: Option<f64>,
    pub kind: BandKind,
    /// Interior points where `D` touches zero: two bands meeting without a gap.
    pub contacts: Vec<f64>,
    /// The band runs into the end of the scanned range.
    pub truncated: bool,
    /// False when the band is narrower than the rounding noise of `D`;
    /// the edges then bound the noise interval around the true band.
    pub resolved: bool,
}

impl BandInterval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Energies of the edges, ordered from low to high.
    pub fn energies(&self) -> (f64, f64) {
        match self.scale {
            BandScale::Energy => (self.lo, self.hi),
            BandScale::Momentum => (self.lo * self.lo, self.hi * self.hi),
            BandScale::DecayRate => (-self.hi * self.hi, -self.lo * self.lo),
        }
    }

    pub fn energy_width(&self) -> f64 {
        let (a, b) = self.energies();
        b - a
    }

    /// The sub-bands separated by the contact points.
    pub fn split_at_contacts(&self) -> Vec<BandInterval> {
        let mut cuts = vec![self.lo];
        cuts.extend(
            self.contacts
                .iter()
                .copied()
                .filter(|&c| c > self.lo && c < self.hi),
        );
        cuts.push(self.hi);
        cuts.windows(2)
            .map(|w| BandInterval {
                lo: w[0],
                hi: w[1],
                contacts: Vec::new(),
                edge_theta_lo: if w[0] == self.lo {
                    self.edge_theta_lo
                } else {
                    None
                },
                edge_theta_hi: if w[1] == self.hi {
                    self.edge_theta_hi
                } else {
                    None
                },
                truncated: self.truncated && w[1] == self.hi,
                ..self.clone()
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlatFamily {
    /// `ℓ = 1/n`, flat at `k = n`.
    ScaleResonance,
    /// An arc (or the link) equal to `(p/q)π` with `q > 1`, or any arc
    /// rational in `π`; flat at `k = qn`.
    ArcCommensurate,
    /// `ℓ₁ = mπ`, flat at every integer.
    LinkMultiple,
    /// A degree-4 vertex, flat at every integer.
    Degree4,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatBand {
    pub k: f64,
    pub family: FlatFamily,
    pub embedded: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FreeParam {
    Ell1,
    Ell3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingPoint {
    pub ell1: f64,
    pub ell3: f64,
    pub k: f64,
    pub theta: f64,
    pub parity_note: String,
    /// Measure of `{D < 0}` within `±1e−5` of `k`.
    pub gap_width: f64,
    /// Largest of the three partial derivatives relative to the size of
    /// the condition's terms.
    pub derivative_residual: f64,
    pub verified: bool,
}

/// Predicted crossings; `not_commensurate` carries the ratio for which no
/// rational approximation was found, which leaves the list short.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingSearch {
    pub points: Vec<CrossingPoint>,
    pub not_commensurate: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub free_lo: f64,
    pub free_hi: f64,
    pub k_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub params: ChainParams,
    pub positive_bands: Vec<BandInterval>,
    pub flat_bands: Vec<FlatBand>,
    pub negative_bands: Vec<BandInterval>,
    pub k_max: f64,
    pub kappa_max: f64,
    pub resolution: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityEstimate {
    #[serde(rename = "K")]
    pub cutoff: f64,
    pub measure: f64,
    pub p_hat: f64,
    pub trend: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMap {
    pub free: FreeParam,
    pub grid: Vec<f64>,
    pub k: Vec<f64>,
    /// Per grid value: 0 gap, 1 band, 2 flat band; `None` for invalid geometry.
    pub rows: Vec<Option<Vec<u8>>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    /// Base grid step; the geometry-dependent default when absent.
    pub step: Option<f64>,
    /// Rescan narrow bands locally instead of failing with `StepTooCoarse`.
    pub adaptive: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            step: None,
            adaptive: true,
        }
    }
}

/// `min(π/ℓⱼ, π)/64` over the nonzero lengths, floored at [`MIN_STEP`].
pub fn default_step(p: &ChainParams) -> f64 {
    let m = p
        .lengths()
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| PI / l)
        .fold(PI, f64::min);
    (m / 64.0).max(MIN_STEP)
}

pub fn default_kappa_step(p: &ChainParams) -> f64 {
    1.0 / (1024.0 * p.ell())
}

/// `max(10/ℓ, 3√3/ℓ)`.
pub fn default_kappa_max(p: &ChainParams) -> f64 {
    (10.0f64).max(3.0 * 3f64.sqrt()) / p.ell()
}

struct Axis<'a> {
    eval: &'a (dyn Fn(f64) -> Evaluation + Sync),
    scale: BandScale,
    integer_contacts: bool,
}

impl Axis<'_> {
    fn at(&self, x: f64) -> Evaluation {
        (self.eval)(x)
    }

    /// Edge between an in-band point and an out-of-band point.
    fn edge(&self, inside: f64, outside: f64) -> f64 {
        self.edge_to(inside, outside, EDGE_TOL)
    }

    /// Same, bisected until the bracket is `tol` wide or cannot shrink.
    fn edge_to(&self, inside: f64, outside: f64, tol: f64) -> f64 {
        let (mut a, mut b) = (inside, outside);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if (b - a).abs() <= tol || m == a || m == b {
                break;
            }
            if self.at(m).in_band() {
                a = m;
            } else {
                b = m;
            }
        }
        a
    }

    /// Root of `c` to full precision.
    fn c_root(&self, mut a: f64, mut b: f64) -> f64 {
        let sa = self.at(a).abc.c.signum();
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let c = self.at(m).abc.c;
            if c == 0.0 {
                return m;
            }
            if c.signum() == sa {
                a = m;
            } else {
                b = m;
            }
        }
        if self.at(a).abc.c.abs() <= self.at(b).abc.c.abs() {
            a
        } else {
            b
        }
    }

    fn normalized(&self, x: f64) -> f64 {
        self.at(x).normalized()
    }

    /// The band around an in-band point `x`, bounded by two out-of-band points.
    fn grow(&self, x: f64, left: f64, right: f64) -> Option<(f64, f64)> {
        if !self.at(x).in_band() {
            return None;
        }
        Some((self.edge(x, left), self.edge(x, right)))
    }
}

fn sample_grid(lo: f64, hi: f64, step: f64, candidates: &[f64]) -> Vec<f64> {
    let n = ((hi - lo) / step).ceil().max(1.0) as usize;
    let mut pts: Vec<f64> = (0..=n).map(|i| (lo + i as f64 * step).min(hi)).collect();
    let fine = step / FINE_DIVISOR;
    for &c in candidates {
        if c < lo - 2.0 * step || c > hi + 2.0 * step {
            continue;
        }
        for i in -FINE_HALF_COUNT..=FINE_HALF_COUNT {
            let x = c + i as f64 * fine;
            if x > lo && x < hi {
                pts.push(x);
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-13 * (1.0 + a.abs()));
    pts
}

fn raw_intervals(axis: &Axis, pts: &[f64], evs: &[Evaluation]) -> Vec<(f64, f64)> {
    let n = pts.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if evs[i].in_band() {
            let s = i;
            while i + 1 < n && evs[i + 1].in_band() {
                i += 1;
            }
            let lo = if s == 0 {
                pts[0]
            } else {
                axis.edge(pts[s], pts[s - 1])
            };
            let hi = if i == n - 1 {
                pts[n - 1]
            } else {
                axis.edge(pts[i], pts[i + 1])
            };
            out.push((lo, hi));
        }
        i += 1;
    }
    let seeds: Vec<(f64, f64)> = (1..n)
        .into_par_iter()
        .filter_map(|i| {
            if evs[i - 1].in_band() || evs[i].in_band() {
                return None;
            }
            // a sign change of c always hides a band: D = a² + b² there
            let (c0, c1) = (evs[i - 1].abc.c, evs[i].abc.c);
            if c0 != 0.0 && c1 != 0.0 && c0.signum() != c1.signum() {
                let x = axis.c_root(pts[i - 1], pts[i]);
                if let Some(iv) = axis.grow(x, pts[i - 1], pts[i]) {
                    return Some(iv);
                }
            }
            // a sampled local maximum of D may hide a band narrower than the grid
            if i + 1 < n && !evs[i + 1].in_band() {
                let (d0, d1, d2) = (
                    evs[i - 1].normalized(),
                    evs[i].normalized(),
                    evs[i + 1].normalized(),
                );
                if d1 >= d0 && d1 >= d2 {
                    let (x, _) =
                        golden_min(pts[i - 1], pts[i + 1], EDGE_TOL, |x| -axis.normalized(x));
                    return axis.grow(x, pts[i - 1], pts[i + 1]);
                }
            }
            None
        })
        .collect();
    out.extend(seeds);
    out
}

fn merge_raw(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in v {
        match out.last_mut() {
            Some(last) if lo <= last.1 + 2.0 * EDGE_TOL => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

fn push_unique(v: &mut Vec<f64>, x: f64) {
    if !v.iter().any(|&y| (y - x).abs() < 1e-8) {
        v.push(x);
    }
}

/// Splits a merged interval at hidden gaps, then classifies each piece.
fn classify(axis: &Axis, lo: f64, hi: f64, pts: &[f64], evs: &[Evaluation]) -> Vec<BandInterval> {
    let inner: Vec<usize> = (0..pts.len())
        .filter(|&i| pts[i] > lo && pts[i] < hi)
        .collect();
    let mut contacts = Vec::new();
    let mut gaps: Vec<(f64, f64)> = Vec::new();
    if axis.integer_contacts {
        let mut m = lo.ceil();
        while m < hi {
            if m > lo {
                let e = axis.at(m);
                if e.in_band() && e.d <= e.noise {
                    push_unique(&mut contacts, m);
                }
            }
            m += 1.0;
        }
    }
    for w in inner.windows(3) {
        let (i0, i1, i2) = (w[0], w[1], w[2]);
        let (d0, d1, d2) = (
            evs[i0].normalized(),
            evs[i1].normalized(),
            evs[i2].normalized(),
        );
        if !(d1 <= d0 && d1 <= d2) {
            continue;
        }
        let (x, _) = golden_min(pts[i0], pts[i2], EDGE_TOL, |x| axis.normalized(x));
        let e = axis.at(x);
        if !e.in_band() {
            if evs[i0].in_band() && evs[i2].in_band() {
                gaps.push((axis.edge(pts[i0], x), axis.edge(pts[i2], x)));
            }
        } else if e.d <= e.noise {
            push_unique(&mut contacts, x);
        }
    }
    gaps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut pieces = Vec::new();
    let mut start = lo;
    for (g0, g1) in gaps {
        if g0 > start {
            pieces.push((start, g0));
        }
        start = start.max(g1);
    }
    pieces.push((start, hi));
    pieces
        .into_iter()
        .map(|(a, b)| {
            let own: Vec<f64> = contacts
                .iter()
                .copied()
                .filter(|&c| c > a && c < b)
                .collect();
            finish_band(axis, a, b, own, pts, evs)
        })
        .collect()
}

fn finish_band(
    axis: &Axis,
    lo: f64,
    hi: f64,
    mut contacts: Vec<f64>,
    pts: &[f64],
    evs: &[Evaluation],
) -> BandInterval {
    let probe = |x: f64| {
        let e = axis.at(x);
        e.d - e.noise
    };
    let mut best = (0.5 * (lo + hi), probe(0.5 * (lo + hi)));
    for (i, &x) in pts.iter().enumerate() {
        if x > lo && x < hi {
            let m = evs[i].d - evs[i].noise;
            if m > best.1 {
                best = (x, m);
            }
        }
    }
    if best.1 <= 0.0 && hi > lo {
        let (x, _) = golden_min(lo, hi, EDGE_TOL * 1e-3, |x| -axis.normalized(x));
        let m = probe(x);
        if m > best.1 {
            best = (x, m);
        }
    }
    contacts.sort_by(f64::total_cmp);
    let mut band = BandInterval {
        lo,
        hi,
        scale: axis.scale,
        edge_theta_lo: None,
        edge_theta_hi: None,
        kind: BandKind::AbsolutelyContinuous,
        contacts,
        truncated: false,
        resolved: true,
    };
    if best.1 <= 0.0 {
        if axis.at(best.0).ab_ratio() < FLAT_AB_RATIO {
            band.kind = BandKind::Flat;
            band.lo = best.0;
            band.hi = best.0;
            band.contacts.clear();
        } else {
            band.resolved = false;
        }
    }
    band
}

fn merge_bands(mut v: Vec<BandInterval>) -> Vec<BandInterval> {
    v.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let mut out: Vec<BandInterval> = Vec::new();
    for b in v {
        match out.last_mut() {
            Some(last) if b.lo <= last.hi + 2.0 * EDGE_TOL => {
                last.hi = last.hi.max(b.hi);
                for c in b.contacts {
                    push_unique(&mut last.contacts, c);
                }
                if b.kind == BandKind::AbsolutelyContinuous {
                    last.kind = BandKind::AbsolutelyContinuous;
                }
                last.resolved |= b.resolved;
            }
            _ => out.push(b),
        }
    }
    for b in &mut out {
        b.contacts.retain(|&c| c > b.lo && c < b.hi);
        b.contacts.sort_by(f64::total_cmp);
    }
    out
}

fn scan_window(axis: &Axis, lo: f64, hi: f64, step: f64, candidates: &[f64]) -> Vec<BandInterval> {
    let pts = sample_grid(lo, hi, step, candidates);
    let evs: Vec<Evaluation> = pts.par_iter().map(|&x| axis.at(x)).collect();
    let merged = merge_raw(raw_intervals(axis, &pts, &evs));
    merged
        .into_par_iter()
        .flat_map_iter(|(a, b)| classify(axis, a, b, &pts, &evs))
        .collect()
}

fn scan_axis(
    axis: &Axis,
    lo: f64,
    hi: f64,
    step: f64,
    candidates: &[f64],
    adaptive: bool,
) -> Result<Vec<BandInterval>> {
    let bands = scan_window(axis, lo, hi, step, candidates);
    let narrow = |b: &BandInterval| {
        b.kind == BandKind::AbsolutelyContinuous && b.resolved && b.width() < 4.0 * step
    };
    if let Some(b) = bands.iter().find(|b| narrow(b)) {
        if !adaptive {
            return Err(Error::StepTooCoarse {
                lo: b.lo,
                hi: b.hi,
                step,
            });
        }
    }
    let mut out: Vec<BandInterval> = Vec::with_capacity(bands.len());
    let rescans: Vec<Vec<BandInterval>> = bands
        .par_iter()
        .map(|b| {
            if narrow(b) && b.width() > 0.0 {
                let fine = (b.width() / RESCAN_SAMPLES).max(1e-13);
                let mut local = scan_window(axis, b.lo, b.hi, fine, &[]);
                for l in &mut local {
                    for &c in &b.contacts {
                        if c > l.lo && c < l.hi {
                            push_unique(&mut l.contacts, c);
                        }
                    }
                }
                if local.is_empty() {
                    vec![b.clone()]
                } else {
                    local
                }
            } else {
                vec![b.clone()]
            }
        })
        .collect();
    for r in rescans {
        out.extend(r);
    }
    let mut out = merge_bands(out);
    for b in &mut out {
        // bands near the edge tolerance get their edges to full precision
        if b.kind == BandKind::AbsolutelyContinuous && b.width() < NARROW_WIDTH {
            let x = b.center();
            let (out_lo, out_hi) = (b.lo - 2.0 * EDGE_TOL, b.hi + 2.0 * EDGE_TOL);
            if axis.at(x).in_band()
                && out_lo > lo
                && !axis.at(out_lo).in_band()
                && !axis.at(out_hi).in_band()
            {
                b.lo = axis.edge_to(x, out_lo, 0.0);
                b.hi = axis.edge_to(x, out_hi, 0.0);
            }
        }
        if b.kind == BandKind::AbsolutelyContinuous {
            b.edge_theta_lo = axis.at(b.lo).abc.edge_theta();
            b.edge_theta_hi = axis.at(b.hi).abc.edge_theta();
        }
        b.truncated = b.hi >= hi - 2.0 * EDGE_TOL;
    }
    Ok(out)
}

/// Candidate band centres `nπ/ℓⱼ` and the integers in `[lo, hi]`.
pub fn band_candidates(p: &ChainParams, lo: f64, hi: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for &l in p.lengths().iter().filter(|&&l| l > 0.0) {
        let unit = PI / l;
        let mut n = (lo / unit).floor().max(1.0);
        while n * unit <= hi + unit {
            out.push(n * unit);
            n += 1.0;
        }
    }
    let mut m = lo.floor().max(1.0);
    while m <= hi + 1.0 {
        out.push(m);
        m += 1.0;
    }
    out
}

/// AC bands on `[k_lo, k_hi]` of the momentum axis, flat points included.
fn scan_positive_all(
    p: &ChainParams,
    k_lo: f64,
    k_hi: f64,
    opts: ScanOptions,
) -> Result<Vec<BandInterval>> {
    if !(k_hi > k_lo) || k_lo < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "bad momentum range [{k_lo}, {k_hi}]"
        )));
    }
    let step = opts.step.unwrap_or_else(|| default_step(p));
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "step must be positive, got {step}"
        )));
    }
    let q = *p;
    let f = move |k: f64| positive_eval(&q, k);
    let axis = Axis {
        eval: &f,
        scale: BandScale::Momentum,
        integer_contacts: true,
    };
    let start = k_lo.max(1e-6);
    let cands = band_candidates(p, start, k_hi);
    let mut bands = scan_axis(&axis, start, k_hi, step, &cands, opts.adaptive)?;
    if k_lo == 0.0 {
        if let Some(b) = bands.first_mut() {
            if b.lo <= start {
                b.lo = 0.0;
            }
        }
    }
    Ok(bands)
}

/// Absolutely continuous bands in `(0, k_max]`; flat points are reported
/// separately by [`enumerate_flat_bands`].
pub fn scan_positive(p: &ChainParams, k_max: f64, opts: ScanOptions) -> Result<Vec<BandInterval>> {
    scan_positive_range(p, 0.0, k_max, opts)
}

pub fn scan_positive_range(
    p: &ChainParams,
    k_lo: f64,
    k_hi: f64,
    opts: ScanOptions,
) -> Result<Vec<BandInterval>> {
    let mut bands = scan_positive_all(p, k_lo, k_hi, opts)?;
    bands.retain(|b| b.kind == BandKind::AbsolutelyContinuous);
    Ok(bands)
}

/// Bands of the negative half-line on the `κ` axis; flat points are kept.
pub fn scan_negative(p: &ChainParams, kappa_max: f64) -> Result<Vec<BandInterval>> {
    scan_negative_with(p, kappa_max, ScanOptions::default())
}

pub fn scan_negative_with(
    p: &ChainParams,
    kappa_max: f64,
    opts: ScanOptions,
) -> Result<Vec<BandInterval>> {
    let need = 3.0 * 3f64.sqrt() / p.ell();
    if !(kappa_max >= need * (1.0 - 1e-12)) {
        return Err(Error::InvalidArgument(format!(
            "kappa_max {kappa_max} below 3√3/ℓ = {need}"
        )));
    }
    let step = opts.step.unwrap_or_else(|| default_kappa_step(p));
    let q = *p;
    let f = move |kappa: f64| negative_eval(&q, kappa);
    let axis = Axis {
        eval: &f,
        scale: BandScale::DecayRate,
        integer_contacts: false,
    };
    let l = p.ell();
    let cands = [1.0 / l, 3f64.sqrt() / l];
    scan_axis(&axis, 1e-6 / l, kappa_max, step, &cands, opts.adaptive)
}

fn theta_grid() -> impl Iterator<Item = f64> {
    (0..FLAT_THETA_SAMPLES).map(|i| -PI + (i as f64 + 0.5) * 2.0 * PI / FLAT_THETA_SAMPLES as f64)
}

/// Does the full condition vanish on the whole θ grid at `k`?
pub fn flat_identity_holds(p: &ChainParams, k: f64) -> bool {
    let kk = (k * p.ell()).powi(2);
    if p.kind() == ConditionKind::Generic3 {
        let scale = (kk + 3.0).powi(2) + 16.0 * (kk + 1.0) + 32.0 * k * p.ell();
        theta_grid().all(|t| {
            eval_full_condition(p, k, t).is_ok_and(|v| v.abs() < FLAT_IDENTITY_TOL * scale)
        })
    } else {
        let scale = (kk + 1.0).powi(2) + 2.0 * k * p.ell();
        theta_grid().all(|t| {
            degree4_full_condition(p, k, t).is_ok_and(|v| v.abs() < FLAT_IDENTITY_TOL * scale)
        })
    }
}

fn is_embedded(p: &ChainParams, k: f64) -> bool {
    let h = default_step(p) / FINE_DIVISOR;
    [k - h, k + h]
        .iter()
        .all(|&x| x > 0.0 && positive_eval(p, x).clearly_positive())
}

fn scale_resonance(ell: f64) -> Option<f64> {
    let n = (1.0 / ell).round();
    (n >= 1.0 && (n * ell - 1.0).abs() < 1e-6).then_some(n)
}

/// Flat bands in `(0, k_max]` from every commensurability family, each
/// checked by the θ-grid identity test.
pub fn enumerate_flat_bands(p: &ChainParams, k_max: f64) -> Vec<FlatBand> {
    let mut cands: Vec<(f64, FlatFamily)> = Vec::new();
    let multiples = |q: f64, fam: FlatFamily, cands: &mut Vec<(f64, FlatFamily)>| {
        let mut k = q;
        while k <= k_max * (1.0 + 1e-12) {
            cands.push((k, fam));
            k += q;
        }
    };
    if p.kind() != ConditionKind::Generic3 {
        multiples(1.0, FlatFamily::Degree4, &mut cands);
    } else {
        if let Some(n) = scale_resonance(p.ell()) {
            if n <= k_max {
                cands.push((n, FlatFamily::ScaleResonance));
            }
        }
        if let Some(r) = p.ell3_ratio() {
            multiples(r.q as f64, FlatFamily::ArcCommensurate, &mut cands);
        }
        if let Some(r) = p.ell1_ratio().filter(|r| r.p > 0) {
            let fam = if r.q == 1 {
                FlatFamily::LinkMultiple
            } else {
                FlatFamily::ArcCommensurate
            };
            multiples(r.q as f64, fam, &mut cands);
        }
    }
    // stable: the first family listed wins at a shared momentum
    cands.sort_by(|a, b| a.0.total_cmp(&b.0));
    cands.dedup_by(|a, b| a.0 == b.0);
    cands
        .into_par_iter()
        .filter(|&(k, _)| flat_identity_holds(p, k))
        .map(|(k, family)| FlatBand {
            k,
            family,
            embedded: is_embedded(p, k),
        })
        .collect()
}

/// Measure of `{D < −noise}` in `[k − half, k + half]` on a grid of `samples` points.
pub fn gap_width_at(p: &ChainParams, k: f64, half: f64, samples: usize) -> f64 {
    let n = samples.max(2);
    let h = 2.0 * half / (n - 1) as f64;
    let out = (0..n)
        .into_par_iter()
        .filter(|&i| !positive_eval(p, k - half + i as f64 * h).in_band())
        .count();
    out as f64 * h
}

fn crossing_gap(p: &ChainParams, k: f64) -> f64 {
    gap_width_at(p, k, 1e-5, 10_001)
}

/// Central-difference partials of the crossing function in (free, θ, k),
/// relative to the size of its terms.
fn derivative_residual(p: &ChainParams, free: FreeParam, k: f64, theta: f64) -> f64 {
    let h = 1e-6;
    let kk = (k * p.ell()).powi(2);
    let generic = p.kind() == ConditionKind::Generic3;
    let f = |q: &ChainParams, k: f64, t: f64| -> f64 {
        if generic {
            eval_full_condition(q, k, t).unwrap_or(f64::NAN)
        } else {
            degree4_conditions(q, Spectral::Momentum(k), t).unwrap_or(f64::NAN)
        }
    };
    let size = if generic {
        (kk + 3.0).powi(2) * (1.0 + k * (p.ell1() + 2.0 * PI))
    } else {
        (kk + 1.0) * (1.0 + k * (p.ell1() + 2.0 * PI))
    };
    let shift = |d: f64| match free {
        FreeParam::Ell1 => p.with_ell1(Length::Value(p.ell1() + d)),
        FreeParam::Ell3 => p.with_ell3(Length::Value(p.ell3() + d)),
    };
    let dfree = match (shift(h), shift(-h)) {
        (Ok(a), Ok(b)) => (f(&a, k, theta) - f(&b, k, theta)) / (2.0 * h),
        _ => f64::NAN,
    };
    let dtheta = (f(p, k, theta + h) - f(p, k, theta - h)) / (2.0 * h);
    let dk = (f(p, k + h, theta) - f(p, k - h, theta)) / (2.0 * h);
    [dfree, dtheta, dk]
        .iter()
        .map(|d| d.abs() / size)
        .fold(0.0, f64::max)
}

fn make_crossing(
    p: &ChainParams,
    free: FreeParam,
    k: f64,
    theta: f64,
    note: String,
) -> CrossingPoint {
    let gap = crossing_gap(p, k);
    CrossingPoint {
        ell1: p.ell1(),
        ell3: p.ell3(),
        k,
        theta,
        parity_note: note,
        gap_width: gap,
        derivative_residual: derivative_residual(p, free, k, theta),
        verified: gap < CROSSING_GAP_TOL,
    }
}

fn parity_theta(even: bool) -> (f64, &'static str) {
    if even {
        (0.0, "zone centre")
    } else {
        (PI, "zone edge")
    }
}

/// Predicted gap closings, each checked by the local gap width.
///
/// Generic geometry: `ℓ₃ = (m/n)π` is required and `ℓ₁ = jπ/(in)` is
/// enumerated inside the box. Degree-4 geometries: the free length takes its
/// current value, which has to be `(m/n)π`, and crossings sit at `k = nj`;
/// with `ℓ₁ = 0` the no-gap point `k = 1/ℓ` is added for integer `1/ℓ`.
pub fn detect_crossings(p: &ChainParams, free: FreeParam, bx: SearchBox) -> Result<CrossingSearch> {
    let mut jobs: Vec<(ChainParams, f64, f64, String)> = Vec::new();
    let mut not_commensurate = None;
    match (p.kind(), free) {
        (ConditionKind::Generic3, FreeParam::Ell1) => match p.ell3_ratio() {
            Some(PiRatio { p: m, q: n }) => {
                let (m, n) = (m as f64, n as f64);
                let mut i = 1.0;
                while i * n <= bx.k_max * (1.0 + 1e-12) {
                    let k = i * n;
                    let mut j = 1.0;
                    while j * PI / k <= bx.free_hi {
                        let l1 = j * PI / k;
                        if l1 >= bx.free_lo {
                            let q = p.with_ell1(Length::Value(l1))?;
                            let even = ((j + i * m) as u64).is_multiple_of(2);
                            let (theta, zone) = parity_theta(even);
                            let note = format!(
                                "i={i}, j={j}: j+im {}, {zone}",
                                if even { "even" } else { "odd" }
                            );
                            jobs.push((q, k, theta, note));
                        }
                        j += 1.0;
                    }
                    i += 1.0;
                }
            }
            None => not_commensurate = Some(p.ell3() / PI),
        },
        (ConditionKind::Degree4L1Zero, FreeParam::Ell3)
        | (ConditionKind::Degree4L3Zero, FreeParam::Ell1) => {
            let ratio = match free {
                FreeParam::Ell3 => p.ell3_ratio(),
                FreeParam::Ell1 => p.ell1_ratio(),
            };
            match ratio {
                Some(PiRatio { p: m, q: n }) if m > 0 => {
                    let mut j = 1u64;
                    while (j * n) as f64 <= bx.k_max * (1.0 + 1e-12) {
                        let even = (j * m).is_multiple_of(2);
                        let (theta, zone) = parity_theta(even);
                        let note =
                            format!("j={j}: jm {}, {zone}", if even { "even" } else { "odd" });
                        jobs.push((*p, (j * n) as f64, theta, note));
                        j += 1;
                    }
                }
                _ => {
                    let v = match free {
                        FreeParam::Ell3 => p.ell3(),
                        FreeParam::Ell1 => p.ell1(),
                    };
                    not_commensurate = Some(v / PI);
                }
            }
            if p.kind() == ConditionKind::Degree4L1Zero {
                if let Some(n) = scale_resonance(p.ell()) {
                    if n <= bx.k_max && !jobs.iter().any(|j| j.1 == n) {
                        let theta = positive_eval(p, n).abc.edge_theta().unwrap_or(0.0);
                        jobs.push((*p, n, theta, "k = 1/ℓ: no gap for any ℓ₃".to_string()));
                    }
                }
            }
        }
        (kind, _) => {
            return Err(Error::InvalidArgument(format!(
                "no crossing rule for free {free:?} in {kind:?} geometry"
            )))
        }
    }
    let mut points: Vec<CrossingPoint> = jobs
        .into_par_iter()
        .map(|(q, k, theta, note)| make_crossing(&q, free, k, theta, note))
        .collect();
    points.sort_by(|a, b| a.k.total_cmp(&b.k).then(a.ell1.total_cmp(&b.ell1)));
    Ok(CrossingSearch {
        points,
        not_commensurate,
    })
}

/// Energy cutoffs `K·4^{−m}`, `m = count−1, …, 0`, in increasing order.
pub fn energy_ladder(top: f64, count: usize) -> Vec<f64> {
    (0..count)
        .rev()
        .map(|m| top / 4f64.powi(m as i32))
        .collect()
}

/// Energy-axis measure of the AC bands below `cutoff`.
pub fn band_measure(bands: &[BandInterval], cutoff: f64) -> f64 {
    bands
        .iter()
        .filter(|b| b.kind == BandKind::AbsolutelyContinuous)
        .map(|b| {
            let (e0, e1) = b.energies();
            (e1.min(cutoff) - e0.max(0.0).min(cutoff)).max(0.0)
        })
        .sum()
}

pub fn probability_of_spectrum(p: &ChainParams, cutoffs: &[f64]) -> Result<ProbabilityEstimate> {
    if cutoffs.is_empty()
        || cutoffs.iter().any(|&k| !(k > 0.0))
        || cutoffs.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::InvalidArgument(
            "energy cutoffs must be positive and increasing".into(),
        ));
    }
    let top = *cutoffs.last().unwrap();
    let bands = scan_positive(p, top.sqrt() * (1.0 + 1e-12), ScanOptions::default())?;
    let trend: Vec<(f64, f64)> = cutoffs
        .iter()
        .map(|&k| (k, (band_measure(&bands, k) / k).clamp(0.0, 1.0)))
        .collect();
    let measure = band_measure(&bands, top);
    Ok(ProbabilityEstimate {
        cutoff: top,
        measure,
        p_hat: trend.last().unwrap().1,
        trend,
    })
}

pub fn spectrum_report(
    p: &ChainParams,
    k_max: f64,
    kappa_max: f64,
    opts: ScanOptions,
) -> Result<SpectrumReport> {
    Ok(SpectrumReport {
        params: *p,
        positive_bands: scan_positive(p, k_max, opts)?,
        flat_bands: enumerate_flat_bands(p, k_max),
        negative_bands: scan_negative(p, kappa_max)?,
        k_max,
        kappa_max,
        resolution: opts.step.unwrap_or_else(|| default_step(p)),
    })
}

fn classify_row(p: &ChainParams, ks: &[f64], dk: f64) -> Result<Vec<u8>> {
    let (lo, hi) = (ks[0] - 0.5 * dk, *ks.last().unwrap() + 0.5 * dk);
    let bands = scan_positive_range(p, lo.max(0.0), hi, ScanOptions::default())?;
    let mut row: Vec<u8> = ks
        .iter()
        .map(|&k| u8::from(bands.iter().any(|b| k >= b.lo && k <= b.hi)))
        .collect();
    // each flat point marks the one cell that contains it
    for f in enumerate_flat_bands(p, hi) {
        if f.k >= lo {
            let i = (((f.k - lo) / dk).floor() as usize).min(ks.len() - 1);
            row[i] = 2;
        }
    }
    Ok(row)
}

/// Band/gap/flat codes over `k_samples` momenta in `[k_lo, k_hi]` for each
/// value of the free length.
pub fn spectrum_map(
    base: &ChainParams,
    free: FreeParam,
    grid: &[f64],
    k_lo: f64,
    k_hi: f64,
    k_samples: usize,
) -> Result<SpectrumMap> {
    if !(k_hi > k_lo) || k_lo < 0.0 || k_samples == 0 {
        return Err(Error::InvalidArgument("bad momentum range for map".into()));
    }
    let dk = (k_hi - k_lo) / k_samples as f64;
    let ks: Vec<f64> = (0..k_samples)
        .map(|i| k_lo + (i as f64 + 0.5) * dk)
        .collect();
    let rows = grid
        .par_iter()
        .map(|&v| {
            let q = match free {
                FreeParam::Ell1 => base.with_ell1(Length::Value(v)),
                FreeParam::Ell3 => base.with_ell3(Length::Value(v)),
            };
            q.ok().and_then(|q| classify_row(&q, &ks, dk).ok())
        })
        .collect();
    Ok(SpectrumMap {
        free,
        grid: grid.to_vec(),
        k: ks,
        rows,
    })
}

/// `f(ℓ₃, ℓ; κ)·e^{−2πκ}`, whose zeros are the limit points of the negative
/// bands as the link grows.
pub fn long_link_function(ell3: f64, ell: f64, kappa: f64) -> f64 {
    let kk = (kappa * ell).powi(2);
    let e = (-2.0 * PI * kappa).exp();
    let cosh_term = (-2.0 * kappa * ell3).exp() + (2.0 * kappa * ell3 - 4.0 * PI * kappa).exp();
    (kk - 3.0).powi(2) + 8.0 * (kk - 1.0) * e + (kk + 1.0).powi(2) * (e * e - cosh_term)
}

/// Limit points (on the `κ` axis) of the negative bands for `ℓ₁ → ∞`.
pub fn long_link_negative_limits(p: &ChainParams) -> Result<Vec<f64>> {
    if p.kind() != ConditionKind::Generic3 {
        return Err(Error::WrongKind {
            expected: ConditionKind::Generic3,
            actual: p.kind(),
        });
    }
    let (l3, l) = (p.ell3(), p.ell());
    let f = |x: f64| long_link_function(l3, l, x);
    let lo = 1e-4 / l;
    let mut hi = 10.0 / l;
    while f(hi) <= 0.0 && hi < 1e8 / l {
        hi *= 2.0;
    }
    let n = 20_000;
    let r = (hi / lo).powf(1.0 / n as f64);
    let xs: Vec<f64> = (0..=n).map(|i| lo * r.powi(i)).collect();
    let vs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut roots = Vec::new();
    for i in 1..xs.len() {
        if vs[i - 1] == 0.0 {
            roots.push(xs[i - 1]);
        } else if vs[i - 1].signum() != vs[i].signum() && vs[i] != 0.0 {
            let (mut a, mut b) = (xs[i - 1], xs[i]);
            let sa = vs[i - 1].signum();
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                if f(m).signum() == sa {
                    a = m;
                } else {
                    b = m;
                }
            }
            roots.push(0.5 * (a + b));
        }
    }
    if roots.len() > 2 {
        return Err(Error::RootCountViolation {
            found: roots.len(),
            allowed: 2,
        });
    }
    Ok(roots)
}

/// Band width at the zone edges around `k_{j,n} = nπ/ℓⱼ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoneWidth {
    pub center: f64,
    /// Largest `|k_π² − k_0²|` over the dispersion branches.
    pub width: f64,
    /// Total energy length of the bands in the window.
    pub extent: f64,
    pub roots_zero: Vec<f64>,
    pub roots_pi: Vec<f64>,
    pub branches: usize,
}

fn sign_roots(f: &(dyn Fn(f64) -> f64 + Sync), lo: f64, hi: f64, samples: usize) -> Vec<f64> {
    let h = (hi - lo) / samples as f64;
    let vs: Vec<f64> = (0..=samples)
        .into_par_iter()
        .map(|i| f(lo + i as f64 * h))
        .collect();
    let mut roots = Vec::new();
    for i in 1..vs.len() {
        let (v0, v1) = (vs[i - 1], vs[i]);
        if v0 == 0.0 {
            roots.push(lo + (i - 1) as f64 * h);
            continue;
        }
        if v1 == 0.0 || v0.signum() == v1.signum() {
            continue;
        }
        let (mut a, mut b) = (lo + (i - 1) as f64 * h, lo + i as f64 * h);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if f(m).signum() == v0.signum() {
                a = m;
            } else {
                b = m;
            }
        }
        roots.push(0.5 * (a + b));
    }
    roots
}

/// Zone-edge band width around `nπ/ℓⱼ`: roots of the condition at θ = 0
/// and θ = π are paired branch by branch, the branch count taken from the
/// roots at θ = π/2. Tangential roots at flat integers pad the lists.
pub fn zone_edge_width(p: &ChainParams, series: u8, n: u64) -> Result<ZoneWidth> {
    if p.kind() != ConditionKind::Generic3 {
        return Err(Error::WrongKind {
            expected: ConditionKind::Generic3,
            actual: p.kind(),
        });
    }
    let lj = match series {
        1..=3 => p.lengths()[series as usize - 1],
        _ => {
            return Err(Error::InvalidArgument(format!(
                "series must be 1, 2 or 3, got {series}"
            )))
        }
    };
    let center = n as f64 * PI / lj;
    let half = 10.0 / center;
    let (mut lo, mut hi) = ((center - half).max(1e-6), center + half);
    for _ in 0..20 {
        if !positive_eval(p, lo).in_band() {
            break;
        }
        lo = (lo - 0.1 * half).max(1e-6);
    }
    for _ in 0..20 {
        if !positive_eval(p, hi).in_band() {
            break;
        }
        hi += 0.1 * half;
    }
    let samples = 20_000;
    let q = *p;
    let at = |theta: f64| move |k: f64| positive_eval(&q, k).abc.value(theta);
    // roots at flat points carry no branch; they come back as padding
    let not_flat = |k: &f64| positive_eval(p, *k).ab_ratio() >= FLAT_AB_RATIO;
    let roots = |theta: f64| -> Vec<f64> {
        sign_roots(&at(theta), lo, hi, samples)
            .into_iter()
            .filter(not_flat)
            .collect()
    };
    let branches = roots(0.5 * PI).len();
    if branches == 0 {
        return Err(Error::MissingBand { n, center });
    }
    let mut r0 = roots(0.0);
    let mut rpi = roots(PI);
    let mut flats = Vec::new();
    let mut m = lo.ceil();
    while m <= hi {
        let e = positive_eval(p, m);
        let kk = (m * p.ell()).powi(2);
        if e.ab_ratio() < FLAT_AB_RATIO && e.abc.c.abs() <= 1e-9 * (kk + 3.0).powi(2) {
            flats.push(m);
        }
        m += 1.0;
    }
    for roots in [&mut r0, &mut rpi] {
        let mut i = 0;
        while roots.len() < branches && !flats.is_empty() {
            roots.push(flats[i % flats.len()]);
            i += 1;
        }
        roots.sort_by(f64::total_cmp);
    }
    let width = r0
        .iter()
        .zip(&rpi)
        .map(|(a, b)| (b * b - a * a).abs())
        .fold(0.0, f64::max);
    let extent = scan_positive_range(p, lo, hi, ScanOptions::default())?
        .iter()
        .map(BandInterval::energy_width)
        .sum();
    Ok(ZoneWidth {
        center,
        width,
        extent,
        roots_zero: r0,
        roots_pi: rpi,
        branches,
    })
}
