//! Serialized results: the JSON document and the CSV tables.

use std::io::Write;

use serde::{Deserialize, Serialize};

use ringchain_core::{
    BandInterval, BandKind, ChainParams, FlatBand, ProbabilityEstimate, ReportRow, SpectrumMap,
    SpectrumReport,
};

pub const VERSION: &str = concat!("ringchain ", env!("CARGO_PKG_VERSION"));

/// Everything needed to rerun a computation, defaults resolved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub params: Option<ChainParams>,
    pub l1: Option<String>,
    pub l3: Option<String>,
    pub ell: f64,
    pub k_min: Option<f64>,
    pub k_max: Option<f64>,
    pub kappa_max: Option<f64>,
    pub step: Option<f64>,
    pub adaptive: bool,
    pub k_ladder: Option<Vec<f64>>,
    pub free_param: Option<String>,
    pub grid: Option<String>,
    pub k_samples: Option<usize>,
    pub series: Option<u8>,
    pub n_range: Option<(u64, u64)>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub theta_samples: usize,
    pub edge_tol: f64,
}

impl RunConfig {
    /// One-line summary of the settings, for the CSV header.
    pub fn header(&self) -> String {
        let mut parts = vec![format!("# {VERSION}"), self.subcommand.clone()];
        let mut kv = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                parts.push(format!("{k}={v}"));
            }
        };
        kv("l1", self.l1.clone());
        kv("l3", self.l3.clone());
        kv("ell", Some(self.ell.to_string()));
        kv("k_min", self.k_min.map(|x| x.to_string()));
        kv("k_max", self.k_max.map(|x| x.to_string()));
        kv("kappa_max", self.kappa_max.map(|x| x.to_string()));
        kv("step", self.step.map(|x| x.to_string()));
        kv("adaptive", Some(self.adaptive.to_string()));
        kv(
            "K",
            self.k_ladder.as_ref().map(|v| {
                v.iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            }),
        );
        kv("free", self.free_param.clone());
        kv("grid", self.grid.clone());
        kv("k_samples", self.k_samples.map(|x| x.to_string()));
        kv("series", self.series.map(|x| x.to_string()));
        kv("n", self.n_range.map(|(a, b)| format!("{a}..{b}")));
        kv("samples", self.samples.map(|x| x.to_string()));
        kv("seed", self.seed.map(|x| x.to_string()));
        kv("theta_samples", Some(self.theta_samples.to_string()));
        kv("edge_tol", Some(self.edge_tol.to_string()));
        parts.join(" ")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub samples: usize,
    pub on_curve: usize,
    pub disagreements: usize,
    /// Largest `|oracle − closed form|` relative to the condition's scale.
    pub max_deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub config: RunConfig,
    pub positive_bands: Option<Vec<BandInterval>>,
    pub flat_bands: Option<Vec<FlatBand>>,
    pub negative_bands: Option<Vec<BandInterval>>,
    pub probability: Option<ProbabilityEstimate>,
    pub asymptotics: Option<Vec<ReportRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<SpectrumMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSummary>,
    pub version: String,
}

impl Document {
    pub fn new(config: RunConfig) -> Document {
        Document {
            config,
            positive_bands: None,
            flat_bands: None,
            negative_bands: None,
            probability: None,
            asymptotics: None,
            map: None,
            oracle: None,
            version: VERSION.to_string(),
        }
    }

    /// The spectrum report held by a `bands` document.
    pub fn spectrum_report(&self) -> Option<SpectrumReport> {
        Some(SpectrumReport {
            params: self.config.params?,
            positive_bands: self.positive_bands.clone()?,
            flat_bands: self.flat_bands.clone()?,
            negative_bands: self.negative_bands.clone()?,
            k_max: self.config.k_max?,
            kappa_max: self.config.kappa_max?,
            resolution: self.config.step?,
        })
    }

    pub fn write_json(&self, out: &mut dyn Write) -> anyhow::Result<()> {
        serde_json::to_writer_pretty(&mut *out, self)?;
        writeln!(out)?;
        Ok(())
    }

    pub fn write_csv(&self, out: &mut dyn Write) -> anyhow::Result<()> {
        writeln!(out, "{}", self.config.header())?;
        let mut w = csv::Writer::from_writer(out);
        if let Some(m) = &self.map {
            w.write_record(["free_value", "k", "code"])?;
            for (v, row) in m.grid.iter().zip(&m.rows) {
                match row {
                    Some(codes) => {
                        for (k, c) in m.k.iter().zip(codes) {
                            w.write_record([v.to_string(), k.to_string(), c.to_string()])?;
                        }
                    }
                    None => w.write_record([v.to_string(), String::new(), "invalid".into()])?,
                }
            }
        } else if let Some(p) = &self.probability {
            w.write_record(["K", "measure", "p_hat"])?;
            let top = p.cutoff;
            for &(k, ph) in &p.trend {
                let measure = if k == top { p.measure } else { ph * k };
                w.write_record([k.to_string(), measure.to_string(), ph.to_string()])?;
            }
        } else if let Some(rows) = &self.asymptotics {
            w.write_record([
                "series",
                "n",
                "center_k",
                "branch",
                "leading",
                "scanned",
                "extent",
                "rel_deviation",
                "error",
            ])?;
            let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
            for r in rows {
                w.write_record([
                    r.series.to_string(),
                    r.n.to_string(),
                    r.center_k.to_string(),
                    r.branch.map(|b| format!("{b:?}")).unwrap_or_default(),
                    opt(r.leading),
                    opt(r.scanned),
                    opt(r.extent),
                    opt(r.rel_deviation),
                    r.error.clone().unwrap_or_default(),
                ])?;
            }
        } else if let Some(o) = &self.oracle {
            w.write_record(["samples", "on_curve", "disagreements", "max_deviation"])?;
            w.write_record([
                o.samples.to_string(),
                o.on_curve.to_string(),
                o.disagreements.to_string(),
                o.max_deviation.to_string(),
            ])?;
        } else {
            write_band_table(&mut w, self)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const BAND_HEADER: [&str; 8] = [
    "band_index",
    "k_lo",
    "k_hi",
    "E_lo",
    "E_hi",
    "kind",
    "theta_lo",
    "theta_hi",
];

/// Positive or negative bands split at contacts, then flat points.
fn write_band_table<W: Write>(w: &mut csv::Writer<W>, doc: &Document) -> anyhow::Result<()> {
    w.write_record(BAND_HEADER)?;
    let theta = |t: Option<f64>| t.map(|v| v.to_string()).unwrap_or_default();
    let mut index = 0usize;
    let mut bands: Vec<&BandInterval> = Vec::new();
    bands.extend(doc.positive_bands.iter().flatten());
    bands.extend(doc.negative_bands.iter().flatten());
    for band in bands {
        for piece in band.split_at_contacts() {
            let (e_lo, e_hi) = piece.energies();
            let kind = match piece.kind {
                BandKind::AbsolutelyContinuous if !piece.resolved => "ac_unresolved",
                BandKind::AbsolutelyContinuous => "ac",
                BandKind::Flat => "flat",
            };
            w.write_record([
                index.to_string(),
                piece.lo.to_string(),
                piece.hi.to_string(),
                e_lo.to_string(),
                e_hi.to_string(),
                kind.to_string(),
                theta(piece.edge_theta_lo),
                theta(piece.edge_theta_hi),
            ])?;
            index += 1;
        }
    }
    for f in doc.flat_bands.iter().flatten() {
        let e = f.k * f.k;
        w.write_record([
            index.to_string(),
            f.k.to_string(),
            f.k.to_string(),
            e.to_string(),
            e.to_string(),
            "flat".to_string(),
            String::new(),
            String::new(),
        ])?;
        index += 1;
    }
    Ok(())
}
