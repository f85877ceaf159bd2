//! Spectral engine for a periodic chain of rings joined by links, with a
//! time-reversal non-invariant cyclic coupling at every vertex.
//!
//! The closed-form evaluators live in [`conditions`], spectra are assembled
//! by [`scanner`], high-energy band widths by [`asymptotics`], and
//! [`oracle`] provides an independent determinant check.

// `!(x > 0.0)` also rejects NaN, which is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod commensurate;
pub mod conditions;
pub mod error;
pub mod model;
pub mod oracle;
pub mod scanner;

pub use asymptotics::{
    asymptotic_vs_scan_report, band_width_leading, band_width_or_scan, beta_coefficients,
    negative_band_width_degree4, select_branch, AsymptoticBandModel, BetaSet, Branch,
    NegativeWidth, ReportRow,
};
pub use commensurate::PiRatio;
pub use conditions::{
    abc_positive, band_discriminant, degree4_conditions, dispersion_theta, eval_full_condition,
    eval_negative_condition, negative_band_function, negative_h_g, AbcTriple, ConditionKind,
    NegativeAux,
};
pub use error::{Error, Result};
pub use model::{s_matrix, ChainParams, Length, MomentumPoint, Spectral, VertexCoupling};
pub use oracle::{build_cell_system, oracle_band_test, CellSystem};
pub use scanner::{
    detect_crossings, enumerate_flat_bands, long_link_negative_limits, probability_of_spectrum,
    scan_negative, scan_positive, scan_positive_range, spectrum_map, spectrum_report,
    zone_edge_width, BandInterval, BandKind, BandScale, CrossingPoint, CrossingSearch, FlatBand,
    FlatFamily, FreeParam, ProbabilityEstimate, ScanOptions, SearchBox, SpectrumMap,
    SpectrumReport, ZoneWidth,
};
