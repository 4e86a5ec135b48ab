use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

fn sdgame(dir: &Path, args: &[&str]) -> i32 {
    let status = Command::new(env!("CARGO_BIN_EXE_sdgame"))
        .args(args)
        .current_dir(dir)
        .env_remove("SDGAME_OUT_DIR")
        .status()
        .expect("binary runs");
    status.code().expect("exit code")
}

fn config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run_pde(dir: &Path, h: f64, out: &str) {
    let cfg = config(dir, &format!("{out}.json"), &format!(r#"{{"fixture": "eigenfixture", "pde": {{"h": {h}, "residuals": false}}}}"#));
    assert_eq!(sdgame(dir, &["solve-pde", "--config", cfg.to_str().unwrap(), "--out", out]), 0);
}

#[test]
fn validate_unit_disk_has_no_violations() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(
        tmp.path(),
        "disk.json",
        r#"{
            "spec": {
                "shape": {"kind": "ball", "dimension": 2, "radius": 1.0},
                "coefficients": {
                    "drift": {"kind": "zero"},
                    "diffusion": {"kind": "constant", "scale": 1.0},
                    "g": {},
                    "f": {},
                    "terminal": {"kind": "quadratic", "constant": 0.0, "coefficient": 1.0}
                },
                "controls_u": [[0.0, 0.0]],
                "controls_v": [[0.0, 0.0]],
                "horizon": 1.0
            },
            "validate": {"samples": 512}
        }"#,
    );
    assert_eq!(sdgame(tmp.path(), &["validate", "--config", cfg.to_str().unwrap(), "--out", "v"]), 0);
    let violations = std::fs::read_to_string(tmp.path().join("v/violations.json")).unwrap();
    assert_eq!(violations.trim(), "[]");
}

#[test]
fn solve_pde_matches_the_eigenfunction() {
    let tmp = TempDir::new().unwrap();
    run_pde(tmp.path(), 0.01, "pde");
    let csv = std::fs::read_to_string(tmp.path().join("pde/value.csv")).unwrap();
    let row = csv.lines().find(|l| l.starts_with("9e-1,0e0,")).expect("row at t = 0.9, x = 0");
    let value: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
    assert!((value - 0.3727).abs() <= 0.01, "{value}");
    assert!(tmp.path().join("pde/manifest.json").exists());
}

#[test]
fn unknown_key_writes_nothing() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "bad.json", r#"{"fixture": "eigenfixture", "pde": {"h": 0.1, "mesh": 3}}"#);
    assert_eq!(sdgame(tmp.path(), &["solve-pde", "--config", cfg.to_str().unwrap(), "--out", "out"]), 1);
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn failed_check_exits_with_two() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(
        tmp.path(),
        "tc.json",
        r#"{
            "spec": {
                "shape": {"kind": "interval1d"},
                "coefficients": {
                    "drift": {"kind": "zero"},
                    "diffusion": {"kind": "constant", "scale": 1.0},
                    "g": {"y": -1.0, "z": [1.0]},
                    "f": {"constant": 1.0},
                    "terminal": {"kind": "constant", "value": 0.0}
                },
                "horizon": 1.0
            },
            "timechange": {"representation": {"t": 1.5, "y": 1.0, "z": [2.0], "paths": 1000, "steps": 20, "relative_tolerance": 0.0}}
        }"#,
    );
    assert_eq!(sdgame(tmp.path(), &["timechange", "--config", cfg.to_str().unwrap(), "--out", "tc"]), 2);
    let manifest = std::fs::read_to_string(tmp.path().join("tc/manifest.json")).unwrap();
    assert!(manifest.contains("\"passed\": false"));
}

#[test]
fn report_slopes_and_duplicates() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    for (h, out) in [(0.04, "a"), (0.02, "b"), (0.01, "c")] {
        run_pde(dir, h, out);
    }
    assert_eq!(sdgame(dir, &["report", "a", "--out", "single"]), 0);
    let single = std::fs::read_to_string(dir.join("single/convergence.csv")).unwrap();
    assert_eq!(single.lines().count(), 2);
    assert!(single.lines().nth(1).unwrap().ends_with(",,"));

    assert_eq!(sdgame(dir, &["report", "a", "b", "c", "--out", "r1"]), 0);
    assert_eq!(sdgame(dir, &["report", "c", "b", "a", "--out", "r2"]), 0);
    let r1 = std::fs::read(dir.join("r1/convergence.csv")).unwrap();
    assert_eq!(r1, std::fs::read(dir.join("r2/convergence.csv")).unwrap());
    let text = String::from_utf8(r1).unwrap();
    let slope: f64 = text.lines().nth(1).unwrap().split(',').nth(5).unwrap().parse().unwrap();
    assert!(slope >= 0.9, "{slope}");
}

#[test]
fn report_needs_manifests() {
    let tmp = TempDir::new().unwrap();
    std::fs::create_dir(tmp.path().join("empty")).unwrap();
    assert_eq!(sdgame(tmp.path(), &["report", "empty", "--out", "r"]), 1);
}

#[test]
fn artifacts_do_not_depend_on_thread_count() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let cfg = config(
        dir,
        "run.json",
        r#"{"fixture": "uv-game", "seed": 7, "simulate": {"paths": 300, "steps": 40}, "dpp": {"h": 0.05, "delta": 0.01, "check": {"mode": "strong", "paths": 2000, "probes": 8}}}"#,
    );
    let cfg = cfg.to_str().unwrap();
    for cmd in ["simulate", "dpp"] {
        for threads in ["1", "3"] {
            let out = format!("{cmd}-{threads}");
            assert_eq!(sdgame(dir, &[cmd, "--config", cfg, "--out", &out, "--threads", threads]), 0);
        }
        for entry in std::fs::read_dir(dir.join(format!("{cmd}-1"))).unwrap() {
            let name = entry.unwrap().file_name();
            let a = std::fs::read(dir.join(format!("{cmd}-1")).join(&name)).unwrap();
            let b = std::fs::read(dir.join(format!("{cmd}-3")).join(&name)).unwrap();
            assert_eq!(a, b, "{cmd}: {name:?}");
        }
    }
}

#[test]
fn output_directory_comes_from_the_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "sim.json", r#"{"fixture": "trivial", "simulate": {"paths": 4, "steps": 4}}"#);
    let status = Command::new(env!("CARGO_BIN_EXE_sdgame"))
        .args(["simulate", "--config", cfg.to_str().unwrap(), "--seed", "3"])
        .current_dir(tmp.path())
        .env("SDGAME_OUT_DIR", tmp.path().join("from-env"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let manifest = std::fs::read_to_string(tmp.path().join("from-env/manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 3"));
}
