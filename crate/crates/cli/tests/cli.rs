use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const FIGURE1: &str = "[edges]\nTotal,A\nTotal,B\nA,AA\nA,AB\nB,BA\nB,BB\n";
const XYZ: &str = "[edges]\nX,Y\nX,Z\n";

fn recon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recon"))
        .args(args)
        .env("RECON_LOG", "info")
        .output()
        .expect("run recon")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_values(path: &Path) -> Vec<(String, Vec<f64>)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let mut it = l.split(',');
            let label = it.next().unwrap().to_string();
            (label, it.map(|v| v.parse().unwrap()).collect())
        })
        .collect()
}

#[test]
fn immutable_top_fixture() {
    let dir = TempDir::new().unwrap();
    let h = write(dir.path(), "h.txt", XYZ);
    let f = write(dir.path(), "f.csv", "series,h1\nX,10\nY,4\nZ,5\n");
    let out = dir.path().join("out.csv");
    let o = recon(&[
        "reconcile",
        "--hierarchy",
        s(&h),
        "--forecasts",
        s(&f),
        "--immutable",
        "X",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(&out).unwrap(), "series,h1\nX,10\nY,4.5\nZ,5.5\n");
    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out.diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["immutable"], serde_json::json!(["X"]));
    assert!(diag["g_s_residual"].as_f64().unwrap() <= 1e-12);
    assert!(diag["coherence_residual"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn empty_immutable_matches_unconstrained() {
    let dir = TempDir::new().unwrap();
    let h = write(dir.path(), "h.txt", XYZ);
    let f = write(dir.path(), "f.csv", "series,h1,h2\nZ,5,1\nX,10,3\nY,4,-1\n");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert!(recon(&[
        "reconcile",
        "--hierarchy",
        s(&h),
        "--forecasts",
        s(&f),
        "--immutable",
        "",
        "--out",
        s(&a)
    ])
    .status
    .success());
    assert!(
        recon(&["reconcile", "--hierarchy", s(&h), "--forecasts", s(&f), "--out", s(&b)])
            .status
            .success()
    );
    let (va, vb) = (read_values(&a), read_values(&b));
    // Rows keep the input order.
    assert_eq!(va.iter().map(|r| r.0.as_str()).collect::<Vec<_>>(), ["Z", "X", "Y"]);
    for (ra, rb) in va.iter().zip(&vb) {
        assert_eq!(ra.0, rb.0);
        for (x, y) in ra.1.iter().zip(&rb.1) {
            assert!((x - y).abs() <= 1e-9);
        }
    }
    assert!((vb[1].1[0] - 29.0 / 3.0).abs() <= 1e-10);
}

#[test]
fn shrink_weights_need_errors() {
    let dir = TempDir::new().unwrap();
    let h = write(dir.path(), "h.txt", XYZ);
    let f = write(dir.path(), "f.csv", "series,h1\nX,10\nY,4\nZ,5\n");
    let out = dir.path().join("out.csv");
    let o = recon(&[
        "reconcile",
        "--hierarchy",
        s(&h),
        "--forecasts",
        s(&f),
        "--weights",
        "mint_shrink",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--errors"));
}

#[test]
fn shrink_weights_with_errors() {
    let dir = TempDir::new().unwrap();
    let h = write(dir.path(), "h.txt", FIGURE1);
    let f = write(
        dir.path(),
        "f.csv",
        "series,h1\nTotal,30\nA,14\nB,15\nAA,6\nAB,7\nBA,8\nBB,9\n",
    );
    let mut errors = String::from("series");
    for t in 1..=12 {
        errors.push_str(&format!(",t{t}"));
    }
    errors.push('\n');
    for (i, l) in ["Total", "A", "B", "AA", "AB", "BA", "BB"].iter().enumerate() {
        errors.push_str(l);
        for t in 0..12 {
            errors.push_str(&format!(
                ",{:.4}",
                ((t * (i + 2)) as f64 * 0.7).sin() * (1.0 + i as f64)
            ));
        }
        errors.push('\n');
    }
    let e = write(dir.path(), "e.csv", &errors);
    let out = dir.path().join("out.csv");
    let o = recon(&[
        "reconcile",
        "--hierarchy",
        s(&h),
        "--forecasts",
        s(&f),
        "--errors",
        s(&e),
        "--weights",
        "mint_shrink",
        "--immutable",
        "Total,AA",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_values(&out);
    assert_eq!(v[0].1[0], 30.0);
    assert_eq!(v[3].1[0], 6.0);
    assert!((v[0].1[0] - v[1].1[0] - v[2].1[0]).abs() <= 1e-9);
}

#[test]
fn unknown_immutable_label_is_rejected() {
    let dir = TempDir::new().unwrap();
    let h = write(dir.path(), "h.txt", XYZ);
    let f = write(dir.path(), "f.csv", "series,h1\nX,10\nY,4\nZ,5\n");
    let out = dir.path().join("out.csv");
    let o = recon(&[
        "reconcile",
        "--hierarchy",
        s(&h),
        "--forecasts",
        s(&f),
        "--immutable",
        "W",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn negative_immutable_warns_but_succeeds() {
    let dir = TempDir::new().unwrap();
    let h = write(dir.path(), "h.txt", XYZ);
    let f = write(dir.path(), "f.csv", "series,h1\nX,-3\nY,4\nZ,5\n");
    let out = dir.path().join("out.csv");
    let o = recon(&[
        "reconcile",
        "--hierarchy",
        s(&h),
        "--forecasts",
        s(&f),
        "--immutable",
        "X",
        "--nonneg",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("WARN") && stderr.contains("X"), "{stderr}");
}

#[test]
fn nonneg_without_immutable() {
    let dir = TempDir::new().unwrap();
    let h = write(dir.path(), "h.txt", XYZ);
    let f = write(dir.path(), "f.csv", "series,h1\nX,2\nY,5\nZ,-4\n");
    let out = dir.path().join("out.csv");
    let o = recon(&[
        "reconcile",
        "--hierarchy",
        s(&h),
        "--forecasts",
        s(&f),
        "--nonneg",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(&out).unwrap(), "series,h1\nX,3.5\nY,3.5\nZ,0\n");
}

#[test]
fn round_trip_is_stable() {
    let dir = TempDir::new().unwrap();
    let h = write(dir.path(), "h.txt", FIGURE1);
    let f = write(
        dir.path(),
        "f.csv",
        "series,h1,h2\nTotal,31.7,29\nA,12.2,15\nB,17.9,16\nAA,5.1,7\nAB,8.3,6\nBA,9.4,8\nBB,6.6,9\n",
    );
    let once = dir.path().join("once.csv");
    let twice = dir.path().join("twice.csv");
    let args = |input: &Path, out: &Path| {
        recon(&[
            "reconcile",
            "--hierarchy",
            s(&h),
            "--forecasts",
            s(input),
            "--weights",
            "wls_s",
            "--immutable",
            "A",
            "--out",
            s(out),
        ])
    };
    assert!(args(&f, &once).status.success());
    assert!(args(&once, &twice).status.success());
    for (a, b) in read_values(&once).iter().zip(read_values(&twice).iter()) {
        for (x, y) in a.1.iter().zip(&b.1) {
            assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()), "{} {x} vs {y}", a.0);
        }
    }
}

#[test]
fn validate_basis_cases() {
    let dir = TempDir::new().unwrap();
    let h = write(dir.path(), "h.txt", FIGURE1);
    let o = recon(&["validate-basis", "--hierarchy", s(&h), "--basis", "Total,A,AA,AB"]);
    assert_eq!(o.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.starts_with("invalid") && stdout.contains("witness"), "{stdout}");
    for basis in ["AA,AB,BA,BB", "Total,A,AA,BA"] {
        let o = recon(&["validate-basis", "--hierarchy", s(&h), "--basis", basis]);
        assert_eq!(o.status.code(), Some(0), "{basis}");
        assert!(String::from_utf8_lossy(&o.stdout).starts_with("valid"));
    }
    let o = recon(&["validate-basis", "--hierarchy", s(&h), "--basis", "Total,A"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = recon(&[
            "simulate",
            "--scenario",
            "one",
            "--replications",
            "2",
            "--seed",
            "7",
            "--out",
            s(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(
        fs::read(dir.path().join("a.log.jsonl")).unwrap(),
        fs::read(dir.path().join("b.log.jsonl")).unwrap()
    );
    // Level 0 of every constrained column repeats Base.
    let text = fs::read_to_string(&a).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let level0: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    for (name, v) in header.iter().zip(&level0) {
        if name.ends_with("_C") {
            assert_eq!(*v, level0[1]);
        }
    }
}

#[test]
fn simulate_rejects_bad_input() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x.csv");
    assert_eq!(
        recon(&["simulate", "--replications", "0", "--out", s(&out)])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        recon(&["simulate", "--plan", "arima", "--out", s(&out)]).status.code(),
        Some(2)
    );
}
