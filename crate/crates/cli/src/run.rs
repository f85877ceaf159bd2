//! Argument parsing, dispatch and exit codes.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ringchain_core::conditions::{dispersion_theta, eval_full_condition};
use ringchain_core::oracle::oracle_value;
use ringchain_core::scanner::{
    default_kappa_max, default_step, energy_ladder, scan_negative_with, EDGE_TOL,
    FLAT_THETA_SAMPLES,
};
use ringchain_core::{
    asymptotic_vs_scan_report, enumerate_flat_bands, probability_of_spectrum, spectrum_map,
    spectrum_report, ChainParams, Error, FreeParam, Length, ScanOptions,
};

use crate::length::{format_length, parse_length};
use crate::output::{Document, OracleSummary, RunConfig};

pub const OUTPUT_DIR_ENV: &str = "RINGCHAIN_OUTPUT_DIR";

#[derive(Parser, Debug)]
#[command(
    name = "ringchain",
    version,
    about = "Band spectra of periodic ring chains"
)]
pub struct Cli {
    /// Upper arc length; decimal or a rational multiple of pi such as `4/11pi`.
    #[arg(long, global = true, value_parser = parse_length)]
    pub l1: Option<Length>,
    /// Lower arc length.
    #[arg(long, global = true, value_parser = parse_length)]
    pub l3: Option<Length>,
    /// Coupling scale.
    #[arg(long, global = true, default_value_t = 1.0)]
    pub ell: f64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output file; defaults to `$RINGCHAIN_OUTPUT_DIR/<subcommand>.<ext>` or stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Worker threads for the parallel scans.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Free {
    L1,
    L3,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Positive bands, flat bands and negative bands up to `--k-max`.
    Bands {
        #[arg(long, default_value_t = 20.0)]
        k_max: f64,
        #[arg(long)]
        kappa_max: Option<f64>,
        #[command(flatten)]
        scan: ScanArgs,
    },
    /// Negative spectrum over `κ ∈ (0, kappa_max]`.
    Negative {
        #[arg(long)]
        kappa_max: Option<f64>,
        #[command(flatten)]
        scan: ScanArgs,
    },
    /// Flat bands up to `--k-max`.
    Flat {
        #[arg(long, default_value_t = 20.0)]
        k_max: f64,
    },
    /// Fraction of `[0, K]` covered by spectrum.
    Prob {
        /// Energy cutoffs, increasing; the last one is the reported estimate.
        #[arg(long = "K", value_delimiter = ',', num_args = 1..)]
        cutoffs: Vec<f64>,
        /// Extend a single cutoff into a ladder of this many values, each 4x the last.
        #[arg(long)]
        ladder: Option<usize>,
    },
    /// Leading-order band widths against scanned ones.
    Asym {
        #[arg(long, default_value_t = 1)]
        series: u8,
        #[arg(long, default_value_t = 10)]
        n_min: u64,
        #[arg(long, default_value_t = 60)]
        n_max: u64,
    },
    /// Band/gap/flat codes over a grid of one free length.
    Map {
        #[arg(long, value_enum)]
        free: Free,
        /// `start:stop:count`, endpoints inclusive.
        #[arg(long)]
        grid: String,
        #[arg(long, default_value_t = 0.0)]
        k_min: f64,
        #[arg(long, default_value_t = 20.0)]
        k_max: f64,
        #[arg(long, default_value_t = 400)]
        k_samples: usize,
    },
    /// Compare the determinant oracle with the closed form at random points.
    OracleCheck {
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args, Debug, Clone, Copy)]
pub struct ScanArgs {
    /// Base grid step; geometry-dependent default when absent.
    #[arg(long)]
    pub step: Option<f64>,
    /// Fail with exit code 3 on bands narrower than the grid instead of rescanning.
    #[arg(long)]
    pub strict: bool,
}

impl ScanArgs {
    fn options(self) -> ScanOptions {
        ScanOptions {
            step: self.step,
            adaptive: !self.strict,
        }
    }
}

/// Invalid or missing arguments detected after parsing.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// The oracle and the closed form disagreed somewhere.
#[derive(Debug)]
pub struct OracleDisagreement(pub usize);

impl fmt::Display for OracleDisagreement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "oracle and closed form disagree at {} points", self.0)
    }
}

impl std::error::Error for OracleDisagreement {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

pub fn exit_code(e: &anyhow::Error) -> i32 {
    if e.downcast_ref::<ConfigError>().is_some() || e.downcast_ref::<clap::Error>().is_some() {
        return 2;
    }
    if e.downcast_ref::<OracleDisagreement>().is_some() {
        return 4;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::StepTooCoarse { .. }) => 3,
        Some(
            Error::NonPositiveScale(_)
            | Error::ArcOutOfRange(_)
            | Error::InvalidLink(_)
            | Error::DoubleDegenerate
            | Error::InvalidArgument(_)
            | Error::RegimeViolation(_)
            | Error::WrongKind { .. },
        ) => 2,
        _ => 4,
    }
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let doc = match cli.threads {
        Some(0) => return Err(config_err("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building thread pool")?
            .install(|| compute(cli))?,
        None => compute(cli)?,
    };
    write_document(cli, &doc)
}

fn write_document(cli: &Cli, doc: &Document) -> anyhow::Result<()> {
    let path = match &cli.output {
        Some(p) => Some(p.clone()),
        None => std::env::var_os(OUTPUT_DIR_ENV)
            .filter(|d| !d.is_empty())
            .map(|d| {
                PathBuf::from(d).join(format!("{}.{}", doc.config.subcommand, cli.format.ext()))
            }),
    };
    let mut out: Box<dyn Write> = match &path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .with_context(|| format!("creating {}", dir.display()))?;
            }
            Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("creating {}", p.display()))?,
            ))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    match cli.format {
        Format::Csv => doc.write_csv(&mut out)?,
        Format::Json => doc.write_json(&mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn base_config(cli: &Cli, name: &str) -> RunConfig {
    RunConfig {
        subcommand: name.to_string(),
        params: None,
        l1: cli.l1.as_ref().map(format_length),
        l3: cli.l3.as_ref().map(format_length),
        ell: cli.ell,
        k_min: None,
        k_max: None,
        kappa_max: None,
        step: None,
        adaptive: true,
        k_ladder: None,
        free_param: None,
        grid: None,
        k_samples: None,
        series: None,
        n_range: None,
        samples: None,
        seed: None,
        theta_samples: FLAT_THETA_SAMPLES,
        edge_tol: EDGE_TOL,
    }
}

fn params(cli: &Cli) -> anyhow::Result<ChainParams> {
    let l1 = cli.l1.ok_or_else(|| config_err("--l1 is required"))?;
    let l3 = cli.l3.ok_or_else(|| config_err("--l3 is required"))?;
    Ok(ChainParams::from_lengths(l1, l3, cli.ell)?)
}

fn positive(name: &str, v: f64) -> anyhow::Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(config_err(format!(
            "--{name} must be positive and finite, got {v}"
        )))
    }
}

fn check_step(step: Option<f64>) -> anyhow::Result<()> {
    if let Some(s) = step {
        positive("step", s)?;
    }
    Ok(())
}

fn kappa_or_default(p: &ChainParams, kappa_max: Option<f64>) -> anyhow::Result<f64> {
    match kappa_max {
        Some(v) => positive("kappa-max", v),
        None => Ok(default_kappa_max(p)),
    }
}

/// Parses `start:stop:count` into an inclusive linspace.
pub fn parse_grid(s: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || config_err(format!("grid must be start:stop:count, got {s}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let a = parse_length(parts[0]).map_err(|_| bad())?.value();
    let b = parse_length(parts[1]).map_err(|_| bad())?.value();
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if n == 0 || !(b >= a) {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![a]);
    }
    let h = (b - a) / (n - 1) as f64;
    Ok((0..n)
        .map(|i| if i + 1 == n { b } else { a + i as f64 * h })
        .collect())
}

fn compute(cli: &Cli) -> anyhow::Result<Document> {
    match &cli.command {
        Command::Bands {
            k_max,
            kappa_max,
            scan,
        } => {
            let p = params(cli)?;
            let k_max = positive("k-max", *k_max)?;
            check_step(scan.step)?;
            let kappa_max = kappa_or_default(&p, *kappa_max)?;
            let report = spectrum_report(&p, k_max, kappa_max, scan.options())?;
            let mut cfg = base_config(cli, "bands");
            cfg.params = Some(p);
            cfg.k_max = Some(k_max);
            cfg.kappa_max = Some(kappa_max);
            cfg.step = Some(report.resolution);
            cfg.adaptive = !scan.strict;
            let mut doc = Document::new(cfg);
            doc.positive_bands = Some(report.positive_bands);
            doc.flat_bands = Some(report.flat_bands);
            doc.negative_bands = Some(report.negative_bands);
            Ok(doc)
        }
        Command::Negative { kappa_max, scan } => {
            let p = params(cli)?;
            check_step(scan.step)?;
            let kappa_max = kappa_or_default(&p, *kappa_max)?;
            let bands = scan_negative_with(&p, kappa_max, scan.options())?;
            let mut cfg = base_config(cli, "negative");
            cfg.params = Some(p);
            cfg.kappa_max = Some(kappa_max);
            cfg.step = Some(scan.step.unwrap_or_else(|| default_step(&p)));
            cfg.adaptive = !scan.strict;
            let mut doc = Document::new(cfg);
            doc.negative_bands = Some(bands);
            Ok(doc)
        }
        Command::Flat { k_max } => {
            let p = params(cli)?;
            let k_max = positive("k-max", *k_max)?;
            let mut cfg = base_config(cli, "flat");
            cfg.params = Some(p);
            cfg.k_max = Some(k_max);
            let mut doc = Document::new(cfg);
            doc.flat_bands = Some(enumerate_flat_bands(&p, k_max));
            Ok(doc)
        }
        Command::Prob { cutoffs, ladder } => {
            let p = params(cli)?;
            let ks = match (cutoffs.as_slice(), ladder) {
                ([], _) => return Err(config_err("--K is required")),
                (&[top], Some(n)) if *n > 0 => energy_ladder(positive("K", top)?, *n),
                (_, Some(_)) => return Err(config_err("--ladder takes a single positive --K")),
                (ks, None) => {
                    for &k in ks {
                        positive("K", k)?;
                    }
                    ks.to_vec()
                }
            };
            let est = probability_of_spectrum(&p, &ks)?;
            let mut cfg = base_config(cli, "prob");
            cfg.params = Some(p);
            cfg.k_ladder = Some(ks);
            cfg.step = Some(default_step(&p));
            let mut doc = Document::new(cfg);
            doc.probability = Some(est);
            Ok(doc)
        }
        Command::Asym {
            series,
            n_min,
            n_max,
        } => {
            let p = params(cli)?;
            if !(1..=3).contains(series) {
                return Err(config_err(format!(
                    "--series must be 1, 2 or 3, got {series}"
                )));
            }
            if n_min > n_max {
                return Err(config_err("--n-min exceeds --n-max"));
            }
            let ns: Vec<u64> = (*n_min..=*n_max).collect();
            let rows = asymptotic_vs_scan_report(&p, *series, &ns);
            let mut cfg = base_config(cli, "asym");
            cfg.params = Some(p);
            cfg.series = Some(*series);
            cfg.n_range = Some((*n_min, *n_max));
            let mut doc = Document::new(cfg);
            doc.asymptotics = Some(rows);
            Ok(doc)
        }
        Command::Map {
            free,
            grid,
            k_min,
            k_max,
            k_samples,
        } => {
            let values = parse_grid(grid)?;
            // the free length is replaced row by row, so any valid placeholder works
            let placeholder = Length::Value(1.0);
            let (l1, l3, fp) = match free {
                Free::L1 => (
                    placeholder,
                    cli.l3.ok_or_else(|| config_err("--l3 is required"))?,
                    FreeParam::Ell1,
                ),
                Free::L3 => (
                    cli.l1.ok_or_else(|| config_err("--l1 is required"))?,
                    placeholder,
                    FreeParam::Ell3,
                ),
            };
            let base = ChainParams::from_lengths(l1, l3, cli.ell)?;
            if !(*k_max > *k_min) || *k_min < 0.0 || *k_samples == 0 {
                return Err(config_err("need 0 <= k-min < k-max and k-samples > 0"));
            }
            let m = spectrum_map(&base, fp, &values, *k_min, *k_max, *k_samples)?;
            let mut cfg = base_config(cli, "map");
            match free {
                Free::L1 => cfg.l1 = None,
                Free::L3 => cfg.l3 = None,
            }
            cfg.free_param = Some(match free {
                Free::L1 => "l1".into(),
                Free::L3 => "l3".into(),
            });
            cfg.grid = Some(grid.clone());
            cfg.k_min = Some(*k_min);
            cfg.k_max = Some(*k_max);
            cfg.k_samples = Some(*k_samples);
            let mut doc = Document::new(cfg);
            doc.map = Some(m);
            Ok(doc)
        }
        Command::OracleCheck { samples, seed } => {
            if *samples == 0 {
                return Err(config_err("--samples must be at least 1"));
            }
            let summary = oracle_check(*samples, *seed);
            if summary.disagreements > 0 {
                return Err(OracleDisagreement(summary.disagreements).into());
            }
            let mut cfg = base_config(cli, "oracle-check");
            cfg.samples = Some(*samples);
            cfg.seed = Some(*seed);
            let mut doc = Document::new(cfg);
            doc.oracle = Some(summary);
            Ok(doc)
        }
    }
}

/// Size of the condition's terms at `k` with all trigonometric factors set to one.
fn natural_scale(p: &ChainParams, k: f64) -> f64 {
    let kl = k * p.ell();
    (kl * kl + 3.0).powi(2) + 16.0 * (kl * kl + 1.0) + 32.0 * kl
}

#[derive(PartialEq)]
enum Class {
    Zero,
    NonZero,
    Ambiguous,
}

fn classify(v: f64) -> Class {
    if v.abs() < 1e-8 {
        Class::Zero
    } else if v.abs() >= 1e-6 {
        Class::NonZero
    } else {
        Class::Ambiguous
    }
}

/// Random geometries and momenta, half of them on the dispersion curve.
pub fn oracle_check(samples: usize, seed: u64) -> OracleSummary {
    use std::f64::consts::PI;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut done, mut on_curve, mut disagreements) = (0, 0, 0);
    let mut max_deviation = 0.0f64;
    while done < samples {
        let Ok(p) = ChainParams::new(
            rng.gen_range(0.1..6.0),
            rng.gen_range(0.1..6.1),
            rng.gen_range(0.3..2.0),
        ) else {
            continue;
        };
        let k: f64 = rng.gen_range(0.05..20.0);
        let theta = if done % 2 == 0 {
            match dispersion_theta(&p, k) {
                Ok(Some((t, _))) => t,
                _ => continue,
            }
        } else {
            rng.gen_range(-PI..PI)
        };
        let Ok(closed) = eval_full_condition(&p, k, theta) else {
            continue;
        };
        let s = natural_scale(&p, k);
        let oracle = oracle_value(&p, k, theta);
        max_deviation = max_deviation.max((oracle.re - closed).hypot(oracle.im) / s);
        let (a, b) = (classify(closed / s), classify(oracle.norm() / s));
        if a == Class::Zero {
            on_curve += 1;
        }
        if a != b || a == Class::Ambiguous {
            disagreements += 1;
        }
        done += 1;
    }
    OracleSummary {
        samples,
        on_curve,
        disagreements,
        max_deviation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_inclusive() {
        let g = parse_grid("0:1:5").unwrap();
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(
            parse_grid("0:2pi:3").unwrap()[2],
            2.0 * std::f64::consts::PI
        );
        for bad in ["0:1", "1:0:4", "0:1:0", "a:1:3"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn exit_codes_by_error() {
        let e: anyhow::Error = Error::StepTooCoarse {
            lo: 0.0,
            hi: 1.0,
            step: 1.0,
        }
        .into();
        assert_eq!(exit_code(&e), 3);
        let e: anyhow::Error = Error::RootCountViolation {
            found: 3,
            allowed: 2,
        }
        .into();
        assert_eq!(exit_code(&e), 4);
        let e: anyhow::Error = Error::DoubleDegenerate.into();
        assert_eq!(exit_code(&e), 2);
        assert_eq!(exit_code(&config_err("x")), 2);
    }

    #[test]
    fn oracle_check_is_clean() {
        let s = oracle_check(40, 7);
        assert_eq!(s.disagreements, 0);
        assert_eq!(oracle_check(40, 7), s);
    }
}
