//! Convergence table across runs: error against resolution per fixture,
//! with least-squares slopes of `log error` on `log h` and `log Δt`.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::manifest::Manifest;
use crate::CliError;

pub const REPORT_FILE: &str = "convergence.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub fixture: String,
    pub subcommand: String,
    pub h: f64,
    pub dt: f64,
    pub error: Option<f64>,
    pub slope_h: Option<f64>,
    pub slope_dt: Option<f64>,
}

/// Slope of the least-squares line through `(ln x, ln y)`; `None` with
/// fewer than two distinct abscissae.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> =
        points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    if logs.len() < 2 {
        return None;
    }
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 1e-300).then(|| sxy / sxx)
}

pub fn convergence_table(manifests: &[Manifest]) -> Vec<ConvergenceRow> {
    let mut rows: Vec<ConvergenceRow> = manifests
        .iter()
        .filter_map(|m| {
            Some(ConvergenceRow {
                fixture: m.fixture.clone(),
                subcommand: m.subcommand.clone(),
                h: *m.metrics.get("h")?,
                dt: m.metrics.get("dt").copied().unwrap_or(f64::NAN),
                error: m.metrics.get("error").copied(),
                slope_h: None,
                slope_dt: None,
            })
        })
        .collect();
    rows.sort_by(|a, b| {
        (&a.fixture, &a.subcommand).cmp(&(&b.fixture, &b.subcommand)).then(b.h.total_cmp(&a.h)).then(b.dt.total_cmp(&a.dt))
    });
    let mut start = 0;
    while start < rows.len() {
        let key = (rows[start].fixture.clone(), rows[start].subcommand.clone());
        let end = start + rows[start..].iter().take_while(|r| (r.fixture.clone(), r.subcommand.clone()) == key).count();
        let group = &rows[start..end];
        let by_h: Vec<(f64, f64)> = group.iter().filter_map(|r| Some((r.h, r.error?))).collect();
        let by_dt: Vec<(f64, f64)> = group.iter().filter_map(|r| Some((r.dt, r.error?))).collect();
        let (sh, st) = (log_log_slope(&by_h), log_log_slope(&by_dt));
        for r in &mut rows[start..end] {
            r.slope_h = sh;
            r.slope_dt = st;
        }
        start = end;
    }
    rows
}

pub fn write_table<W: Write>(rows: &[ConvergenceRow], mut w: W) -> std::io::Result<()> {
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:e}"));
    writeln!(w, "fixture,subcommand,h,dt,error,slope_h,slope_dt")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:e},{:e},{},{},{}",
            r.fixture,
            r.subcommand,
            r.h,
            r.dt,
            opt(r.error),
            opt(r.slope_h),
            opt(r.slope_dt)
        )?;
    }
    Ok(())
}

pub fn run(dirs: &[PathBuf], out: &Path) -> Result<bool, CliError> {
    let manifests = dirs.iter().map(|d| Manifest::read(d)).collect::<Result<Vec<_>, _>>()?;
    let rows = convergence_table(&manifests);
    std::fs::create_dir_all(out)?;
    let mut file = std::io::BufWriter::new(std::fs::File::create(out.join(REPORT_FILE))?);
    write_table(&rows, &mut file)?;
    file.flush()?;
    println!("report: {} rows -> {}", rows.len(), out.join(REPORT_FILE).display());
    Ok(true)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;

    fn manifest(h: f64, error: f64) -> Manifest {
        Manifest {
            subcommand: "solve-pde".into(),
            fixture: "eigenfixture".into(),
            config_sha256: String::new(),
            seed: 0,
            version: "0".into(),
            passed: true,
            artifacts: vec![],
            metrics: BTreeMap::from([("h".to_string(), h), ("dt".to_string(), h * h), ("error".to_string(), error)]),
        }
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [0.1, 0.05, 0.025].iter().map(|&h| (h, 3.0 * h * h)).collect();
        assert!((log_log_slope(&pts).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(log_log_slope(&pts[..1]), None);
    }

    #[test]
    fn single_run_has_no_slope() {
        let rows = convergence_table(&[manifest(0.1, 0.01)]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].slope_h, None);
        let mut text = Vec::new();
        write_table(&rows, &mut text).unwrap();
        assert!(String::from_utf8(text).unwrap().lines().nth(1).unwrap().ends_with(",,"));
    }

    #[test]
    fn slopes_are_shared_by_the_group() {
        let rows = convergence_table(&[manifest(0.05, 0.005), manifest(0.1, 0.01)]);
        assert_eq!(rows[0].h, 0.1);
        assert!((rows[1].slope_h.unwrap() - 1.0).abs() < 1e-12);
        assert!((rows[0].slope_dt.unwrap() - 0.5).abs() < 1e-12);
    }
}
