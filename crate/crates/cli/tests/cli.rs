use std::path::Path;
use std::process::{Command, Output};

use ringchain_cli::output::BAND_HEADER;
use ringchain_cli::Document;
use ringchain_core::scanner::default_kappa_max;
use ringchain_core::{spectrum_report, ChainParams, ScanOptions};

fn ringchain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ringchain"))
        .args(args)
        .env_remove("RINGCHAIN_OUTPUT_DIR")
        .output()
        .expect("spawn ringchain")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn json_round_trip_reproduces_report() {
    let out = stdout(&ringchain(&[
        "--l1", "1", "--l3", "2", "--ell", "0.5", "--format", "json", "bands", "--k-max", "6",
    ]));
    let doc: Document = serde_json::from_str(&out).unwrap();
    let mut again = Vec::new();
    doc.write_json(&mut again).unwrap();
    assert_eq!(String::from_utf8(again).unwrap(), out);

    let p = ChainParams::new(1.0, 2.0, 0.5).unwrap();
    let direct = spectrum_report(&p, 6.0, default_kappa_max(&p), ScanOptions::default()).unwrap();
    assert_eq!(doc.spectrum_report().unwrap(), direct);

    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(|s| s.as_str()).collect();
    for k in [
        "config",
        "positive_bands",
        "flat_bands",
        "negative_bands",
        "probability",
        "asymptotics",
        "version",
    ] {
        assert!(keys.contains(&k), "missing {k}");
    }
}

#[test]
fn band_csv_schema() {
    let out = stdout(&ringchain(&[
        "--l1", "pi", "--l3", "pi", "bands", "--k-max", "8",
    ]));
    let mut lines = out.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("# ringchain "));
    assert!(
        header.contains("step=")
            && header.contains("kappa_max=")
            && header.contains("theta_samples=32")
    );
    assert_eq!(lines.next().unwrap(), BAND_HEADER.join(","));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(rows.len() > 8);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.len(), 8);
        assert_eq!(r[0], i.to_string());
        let (lo, hi): (f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap());
        assert!(lo <= hi);
        assert!(matches!(r[5], "ac" | "ac_unresolved" | "flat"));
    }
    // splitting at contacts puts integers on piece boundaries
    assert!(rows.iter().any(|r| r[2] == "3" && r[5] == "ac"));
}

#[test]
fn exit_codes() {
    assert_eq!(ringchain(&["--l1", "pi", "bands"]).status.code(), Some(2));
    assert_eq!(
        ringchain(&["--l1", "pi", "--l3", "9", "bands"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        ringchain(&["--l1", "x", "--l3", "1", "bands"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        ringchain(&["--l1", "1", "--l3", "1", "bogus"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        ringchain(&["--l1", "1", "--l3", "1", "prob", "--K", "100,10"])
            .status
            .code(),
        Some(2)
    );
    let coarse = ringchain(&[
        "--l1", "pi", "--l3", "pi", "bands", "--strict", "--step", "0.5",
    ]);
    assert_eq!(coarse.status.code(), Some(3));
    let ok = ringchain(&["oracle-check", "--samples", "20"]);
    assert_eq!(ok.status.code(), Some(0));
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_ringchain"))
        .args([
            "--l1", "0", "--l3", "pi/2", "--format", "json", "flat", "--k-max", "10",
        ])
        .env("RINGCHAIN_OUTPUT_DIR", dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let path = dir.path().join("flat.json");
    let doc: Document = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!(!doc.flat_bands.unwrap().is_empty());

    let explicit = dir.path().join("sub/prob.csv");
    let o = ringchain(&[
        "--l1",
        "0",
        "--l3",
        "1",
        "--output",
        explicit.to_str().unwrap(),
        "prob",
        "--K",
        "1e3",
        "--ladder",
        "3",
    ]);
    assert!(o.status.success() && o.stdout.is_empty());
    let text = std::fs::read_to_string(Path::new(&explicit)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[1], "K,measure,p_hat");
    assert_eq!(lines.len(), 5);
}

#[test]
fn identical_runs_are_byte_identical() {
    let args = [
        "--l1", "4/11pi", "--l3", "4/11pi", "asym", "--n-min", "20", "--n-max", "26",
    ];
    let a = stdout(&ringchain(&args));
    let mut threaded = vec!["--threads", "2"];
    threaded.extend_from_slice(&args);
    let b = stdout(&ringchain(&threaded));
    assert_eq!(a, b);
    assert!(a
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("series,n,center_k,branch"));
    assert_eq!(a.lines().count(), 2 + 7);
}

#[test]
fn map_rows_cover_grid() {
    let out = stdout(&ringchain(&[
        "--l1",
        "0",
        "--ell",
        "0.3333333",
        "map",
        "--free",
        "l3",
        "--grid",
        "0.5:1.5:3",
        "--k-max",
        "4",
        "--k-samples",
        "40",
    ]));
    let rows: Vec<&str> = out.lines().skip(2).collect();
    assert_eq!(rows.len(), 3 * 40);
    assert!(rows
        .iter()
        .all(|r| matches!(r.rsplit(',').next(), Some("0" | "1" | "2"))));
}
