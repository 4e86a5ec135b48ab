//! Projected Euler scheme for the controlled reflected SDE
//!
//! ```text
//! dX = b(t, X, u, v) dt + σ(t, X, u, v) dB + ∇φ(X) dη,   X ∈ closure(O)
//! ```
//!
//! Each step takes an unconstrained Euler move and projects it back onto
//! `closure(O)`; the projection distance is the local-time increment `Δη`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::ProblemSpec;
use crate::error::{Error, Result};
use crate::rng::GaussianStream;

/// Feedback control: maps `(t, x)` to an index into a control grid.
pub trait Policy: Sync {
    fn control(&self, t: f64, x: &[f64]) -> usize;
}

/// Always plays the same grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedControl(pub usize);

impl Policy for FixedControl {
    fn control(&self, _t: f64, _x: &[f64]) -> usize {
        self.0
    }
}

impl<F> Policy for F
where
    F: Fn(f64, &[f64]) -> usize + Sync,
{
    fn control(&self, t: f64, x: &[f64]) -> usize {
        self(t, x)
    }
}

/// Sampling parameters shared by every Monte Carlo routine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub antithetic: bool,
}

impl EnsembleConfig {
    pub fn new(paths: usize, steps: usize, seed: u64) -> Self {
        EnsembleConfig { paths, steps, seed, antithetic: false }
    }

    pub fn antithetic(mut self) -> Self {
        self.antithetic = true;
        self
    }

    pub fn stream(&self) -> GaussianStream {
        GaussianStream::with_antithetic(self.seed, self.antithetic)
    }

    fn check(&self) -> Result<()> {
        if self.paths == 0 || self.steps == 0 {
            return Err(Error::invalid("ensembles need at least one path and one step"));
        }
        Ok(())
    }
}

/// Reflected paths on a common time grid. Storage is path-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    times: Vec<f64>,
    n: usize,
    d: usize,
    paths: usize,
    x: Vec<f64>,
    eta: Vec<f64>,
    db: Vec<f64>,
    increment_var: Vec<f64>,
    seed: u64,
}

impl PathEnsemble {
    /// Assembles an ensemble from raw arrays. `increment_var[k]` is the
    /// variance of each component of `dB` on step `k` (the quadratic
    /// variation increment of the driver).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        times: Vec<f64>,
        n: usize,
        d: usize,
        x: Vec<f64>,
        eta: Vec<f64>,
        db: Vec<f64>,
        increment_var: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        if times.len() < 2 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("time grid must be strictly increasing with at least 2 nodes"));
        }
        let m = times.len() - 1;
        let paths = eta.len() / (m + 1);
        if paths == 0
            || eta.len() != paths * (m + 1)
            || x.len() != paths * (m + 1) * n
            || db.len() != paths * m * d
            || increment_var.len() != m
        {
            return Err(Error::Dimension("ensemble arrays have inconsistent lengths".into()));
        }
        Ok(PathEnsemble { times, n, d, paths, x, eta, db, increment_var, seed })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dt(&self, step: usize) -> f64 {
        self.times[step + 1] - self.times[step]
    }

    pub fn increment_var(&self, step: usize) -> f64 {
        self.increment_var[step]
    }

    pub fn state(&self, path: usize, step: usize) -> &[f64] {
        let at = (path * (self.steps() + 1) + step) * self.n;
        &self.x[at..at + self.n]
    }

    pub fn eta(&self, path: usize, step: usize) -> f64 {
        self.eta[path * (self.steps() + 1) + step]
    }

    pub fn d_eta(&self, path: usize, step: usize) -> f64 {
        self.eta(path, step + 1) - self.eta(path, step)
    }

    pub fn db(&self, path: usize, step: usize) -> &[f64] {
        let at = (path * self.steps() + step) * self.d;
        &self.db[at..at + self.d]
    }

    /// Same paths restricted to the first `steps` steps.
    pub fn truncated(&self, steps: usize) -> PathEnsemble {
        let m = self.steps();
        let steps = steps.clamp(1, m);
        let mut x = Vec::with_capacity(self.paths * (steps + 1) * self.n);
        let mut eta = Vec::with_capacity(self.paths * (steps + 1));
        let mut db = Vec::with_capacity(self.paths * steps * self.d);
        for p in 0..self.paths {
            let xs = p * (m + 1) * self.n;
            x.extend_from_slice(&self.x[xs..xs + (steps + 1) * self.n]);
            let es = p * (m + 1);
            eta.extend_from_slice(&self.eta[es..es + steps + 1]);
            let ds = p * m * self.d;
            db.extend_from_slice(&self.db[ds..ds + steps * self.d]);
        }
        PathEnsemble {
            times: self.times[..=steps].to_vec(),
            n: self.n,
            d: self.d,
            paths: self.paths,
            x,
            eta,
            db,
            increment_var: self.increment_var[..steps].to_vec(),
            seed: self.seed,
        }
    }

    /// Paths `range` only, in order.
    pub fn select(&self, range: std::ops::Range<usize>) -> PathEnsemble {
        let m = self.steps();
        let count = range.len();
        PathEnsemble {
            times: self.times.clone(),
            n: self.n,
            d: self.d,
            paths: count,
            x: self.x[range.start * (m + 1) * self.n..range.end * (m + 1) * self.n].to_vec(),
            eta: self.eta[range.start * (m + 1)..range.end * (m + 1)].to_vec(),
            db: self.db[range.start * m * self.d..range.end * m * self.d].to_vec(),
            increment_var: self.increment_var.clone(),
            seed: self.seed,
        }
    }

    /// Columnar dump: `path,step,t,x0..x{n-1},eta`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let xs: Vec<String> = (0..self.n).map(|i| format!("x{i}")).collect();
        writeln!(w, "path,step,t,{},eta", xs.join(","))?;
        for p in 0..self.paths {
            for k in 0..=self.steps() {
                let state: Vec<String> = self.state(p, k).iter().map(|v| format!("{v:e}")).collect();
                writeln!(w, "{p},{k},{:e},{},{:e}", self.times[k], state.join(","), self.eta(p, k))?;
            }
        }
        Ok(())
    }
}

/// One projected Euler step. Returns the new state and `Δη`.
#[allow(clippy::too_many_arguments)]
pub fn step(
    spec: &ProblemSpec,
    x: &[f64],
    u: &[f64],
    v: &[f64],
    t: f64,
    dt: f64,
    db: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let n = spec.n();
    let d = spec.d();
    let mut b = vec![0.0; n];
    let mut sigma = vec![0.0; n * d];
    spec.b_into(t, x, u, v, &mut b);
    spec.sigma_into(t, x, u, v, &mut sigma);
    let tentative: Vec<f64> = (0..n)
        .map(|i| {
            let noise: f64 = (0..d).map(|j| sigma[i * d + j] * db[j]).sum();
            x[i] + b[i] * dt + noise
        })
        .collect();
    let projected = spec.domain.project(&tentative)?;
    Ok((projected.point, projected.overshoot))
}

/// Simulates `cfg.paths` reflected paths from `(t0, x0)` to the horizon on a
/// uniform grid of `cfg.steps` steps.
pub fn simulate(
    spec: &ProblemSpec,
    u_policy: &dyn Policy,
    v_policy: &dyn Policy,
    t0: f64,
    x0: &[f64],
    cfg: &EnsembleConfig,
) -> Result<PathEnsemble> {
    simulate_until(spec, u_policy, v_policy, t0, spec.horizon, x0, cfg)
}

/// As [`simulate`] but on `[t0, t_end]`.
pub fn simulate_until(
    spec: &ProblemSpec,
    u_policy: &dyn Policy,
    v_policy: &dyn Policy,
    t0: f64,
    t_end: f64,
    x0: &[f64],
    cfg: &EnsembleConfig,
) -> Result<PathEnsemble> {
    cfg.check()?;
    if !(t_end > t0) {
        return Err(Error::invalid(format!("empty time interval [{t0}, {t_end}]")));
    }
    let n = spec.n();
    let d = spec.d();
    if x0.len() != n {
        return Err(Error::Dimension(format!("x0 has {} coordinates, expected {n}", x0.len())));
    }
    let phi0 = spec.domain.phi(x0);
    if phi0 < -spec.domain.boundary_tol {
        return Err(Error::InvalidInitialState { point: x0.to_vec(), phi: phi0 });
    }
    let m = cfg.steps;
    let dt = (t_end - t0) / m as f64;
    let times: Vec<f64> = (0..=m).map(|k| if k == m { t_end } else { t0 + k as f64 * dt }).collect();
    let stream = cfg.stream();

    let per_path: Vec<Result<(Vec<f64>, Vec<f64>, Vec<f64>)>> = (0..cfg.paths)
        .into_par_iter()
        .map(|p| {
            let mut normals = vec![0.0; m * d];
            stream.fill(p as u64, &mut normals);
            let mut xs = Vec::with_capacity((m + 1) * n);
            let mut etas = Vec::with_capacity(m + 1);
            let mut dbs = Vec::with_capacity(m * d);
            xs.extend_from_slice(x0);
            etas.push(0.0);
            let mut x = x0.to_vec();
            let mut eta = 0.0;
            for k in 0..m {
                let h = times[k + 1] - times[k];
                let sq = h.sqrt();
                let db: Vec<f64> = normals[k * d..(k + 1) * d].iter().map(|z| z * sq).collect();
                let u = spec.controls_u.point(u_policy.control(times[k], &x));
                let v = spec.controls_v.point(v_policy.control(times[k], &x));
                let (next, d_eta) = step(spec, &x, u, v, times[k], h, &db)?;
                eta += d_eta;
                x = next;
                xs.extend_from_slice(&x);
                etas.push(eta);
                dbs.extend_from_slice(&db);
            }
            Ok((xs, etas, dbs))
        })
        .collect();

    let mut x = Vec::with_capacity(cfg.paths * (m + 1) * n);
    let mut eta = Vec::with_capacity(cfg.paths * (m + 1));
    let mut db = Vec::with_capacity(cfg.paths * m * d);
    for r in per_path {
        let (xs, es, ds) = r?;
        x.extend(xs);
        eta.extend(es);
        db.extend(ds);
    }
    let increment_var = times.windows(2).map(|w| w[1] - w[0]).collect();
    PathEnsemble::from_parts(times, n, d, x, eta, db, increment_var, cfg.seed)
}

/// Initial data `(t, ζ)` and `(t', ζ')` of one coupled-path comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialPair {
    pub t: f64,
    pub zeta: Vec<f64>,
    pub t_prime: f64,
    pub zeta_prime: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub separation: f64,
    pub time_gap: f64,
    pub sup_x4: f64,
    pub sup_eta4: f64,
    /// `(Ê sup|ΔX|⁴ + Ê sup|Δη|⁴) / (|ζ−ζ'|⁴ + |t−t'|²)`, `0` when both sides vanish.
    pub ratio: f64,
    /// `Ê[exp(λ η_T)]` for the `(t, ζ)` member.
    pub exp_eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub lambda: f64,
    pub rows: Vec<MomentRow>,
}

impl MomentTable {
    pub fn max_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.ratio).fold(0.0, f64::max)
    }

    /// Rows with a nonzero denominator; the ratio column is bounded by a
    /// common constant when `max / min ≤ spread`.
    pub fn ratio_spread(&self) -> f64 {
        let live: Vec<f64> = self.rows.iter().filter(|r| r.ratio > 0.0).map(|r| r.ratio).collect();
        if live.is_empty() {
            return 1.0;
        }
        let max = live.iter().cloned().fold(f64::MIN, f64::max);
        let min = live.iter().cloned().fold(f64::MAX, f64::min);
        max / min
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "separation,time_gap,sup_x4,sup_eta4,ratio,exp_eta")?;
        for r in &self.rows {
            writeln!(
                w,
                "{:e},{:e},{:e},{:e},{:e},{:e}",
                r.separation, r.time_gap, r.sup_x4, r.sup_eta4, r.ratio, r.exp_eta
            )?;
        }
        Ok(())
    }
}

/// Coupled reflected paths under common random numbers.
///
/// Both members of a pair live on the absolute grid `k·T/M`; before its
/// start time a path is frozen at its initial state with `η = 0`.
pub fn moment_experiment(
    spec: &ProblemSpec,
    u_policy: &dyn Policy,
    v_policy: &dyn Policy,
    pairs: &[InitialPair],
    cfg: &EnsembleConfig,
    lambda: f64,
) -> Result<MomentTable> {
    cfg.check()?;
    let m = cfg.steps;
    let n = spec.n();
    let d = spec.d();
    let dt = spec.horizon / m as f64;
    let stream = cfg.stream();
    let start_index = |t: f64| -> Result<usize> {
        let k = (t / dt).round();
        if (k * dt - t).abs() > 1e-9 * spec.horizon.max(1.0) || k < 0.0 || k as usize > m {
            return Err(Error::invalid(format!("start time {t} is not on the grid of step {dt}")));
        }
        Ok(k as usize)
    };

    let mut rows = Vec::with_capacity(pairs.len());
    for pair in pairs {
        for z in [&pair.zeta, &pair.zeta_prime] {
            if z.len() != n {
                return Err(Error::Dimension("initial state has wrong dimension".into()));
            }
            let phi = spec.domain.phi(z);
            if phi < -spec.domain.boundary_tol {
                return Err(Error::InvalidInitialState { point: z.clone(), phi });
            }
        }
        let k1 = start_index(pair.t)?;
        let k2 = start_index(pair.t_prime)?;
        let per_path: Vec<Result<(f64, f64, f64)>> = (0..cfg.paths)
            .into_par_iter()
            .map(|p| {
                let mut normals = vec![0.0; m * d];
                stream.fill(p as u64, &mut normals);
                let mut x1 = pair.zeta.clone();
                let mut x2 = pair.zeta_prime.clone();
                let (mut e1, mut e2) = (0.0, 0.0);
                let (mut sx, mut se) = (0.0f64, 0.0f64);
                for k in 0..m {
                    let t = k as f64 * dt;
                    let db: Vec<f64> = normals[k * d..(k + 1) * d].iter().map(|z| z * dt.sqrt()).collect();
                    if k >= k1 {
                        let u = spec.controls_u.point(u_policy.control(t, &x1));
                        let v = spec.controls_v.point(v_policy.control(t, &x1));
                        let (nx, de) = step(spec, &x1, u, v, t, dt, &db)?;
                        x1 = nx;
                        e1 += de;
                    }
                    if k >= k2 {
                        let u = spec.controls_u.point(u_policy.control(t, &x2));
                        let v = spec.controls_v.point(v_policy.control(t, &x2));
                        let (nx, de) = step(spec, &x2, u, v, t, dt, &db)?;
                        x2 = nx;
                        e2 += de;
                    }
                    let gap: f64 = x1.iter().zip(&x2).map(|(a, b)| (a - b).powi(2)).sum();
                    sx = sx.max(gap * gap);
                    se = se.max((e1 - e2).powi(4));
                }
                let init_gap: f64 = pair.zeta.iter().zip(&pair.zeta_prime).map(|(a, b)| (a - b).powi(2)).sum();
                sx = sx.max(init_gap * init_gap);
                Ok((sx, se, (lambda * e1).exp()))
            })
            .collect();
        let (mut sx, mut se, mut ex) = (0.0, 0.0, 0.0);
        for r in per_path {
            let (a, b, c) = r?;
            sx += a;
            se += b;
            ex += c;
        }
        let count = cfg.paths as f64;
        let (sx, se, ex) = (sx / count, se / count, ex / count);
        let separation = pair
            .zeta
            .iter()
            .zip(&pair.zeta_prime)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let time_gap = (pair.t - pair.t_prime).abs();
        let denom = separation.powi(4) + time_gap.powi(2);
        let ratio = if denom > 0.0 { (sx + se) / denom } else { 0.0 };
        rows.push(MomentRow { separation, time_gap, sup_x4: sx, sup_eta4: se, ratio, exp_eta: ex });
    }
    Ok(MomentTable { lambda, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_abs_diff_eq;

    #[test]
    fn step_examples() {
        let spec = fixtures::reflected_bm();
        let (x, de) = step(&spec, &[0.95], &[0.0], &[0.0], 0.0, 0.01, &[0.10]).unwrap();
        assert_eq!(x, vec![1.0]);
        assert_abs_diff_eq!(de, 0.05, epsilon = 1e-12);
        let (x, de) = step(&spec, &[0.0], &[0.0], &[0.0], 0.0, 0.01, &[0.10]).unwrap();
        assert_eq!(x, vec![0.10]);
        assert_eq!(de, 0.0);

        let disk = fixtures::reflected_bm_ball(2, 1.0);
        let (x, de) = step(&disk, &[0.6, 0.8], &[0.0], &[0.0], 0.0, 0.01, &[0.06, 0.08]).unwrap();
        assert_abs_diff_eq!(x[0], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(de, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn frozen_dynamics_stay_constant() {
        let spec = fixtures::trivial(0.0);
        let e = simulate(&spec, &FixedControl(0), &FixedControl(0), 0.0, &[0.3], &EnsembleConfig::new(4, 10, 1)).unwrap();
        for p in 0..4 {
            for k in 0..=10 {
                assert_eq!(e.state(p, k), &[0.3]);
                assert_eq!(e.eta(p, k), 0.0);
            }
        }
    }

    #[test]
    fn drift_into_wall_accumulates_local_time() {
        // x0 = 0.9, b = 1, dt = 0.05: 0.95, 1.0, then tentative 1.05 -> 1.0 each step
        let spec = fixtures::drift_reflection();
        let e = simulate(&spec, &FixedControl(0), &FixedControl(0), 0.0, &[0.9], &EnsembleConfig::new(1, 20, 0)).unwrap();
        assert_abs_diff_eq!(e.state(0, 1)[0], 0.95, epsilon = 1e-12);
        assert_abs_diff_eq!(e.state(0, 2)[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.eta(0, 2), 0.0, epsilon = 1e-12);
        for k in 2..20 {
            assert_eq!(e.state(0, k + 1), &[1.0]);
            assert_abs_diff_eq!(e.d_eta(0, k), 0.05, epsilon = 1e-12);
        }
    }

    #[test]
    fn invalid_initial_state_is_rejected() {
        let spec = fixtures::reflected_bm();
        let err = simulate(&spec, &FixedControl(0), &FixedControl(0), 0.0, &[1.5], &EnsembleConfig::new(1, 1, 0));
        assert!(matches!(err, Err(Error::InvalidInitialState { .. })));
    }

    #[test]
    fn local_time_grows_only_at_the_boundary() {
        let spec = fixtures::reflected_bm();
        let e = simulate(&spec, &FixedControl(0), &FixedControl(0), 0.0, &[0.5], &EnsembleConfig::new(200, 100, 3)).unwrap();
        let tol = spec.domain.boundary_tol;
        for p in 0..e.paths() {
            assert_eq!(e.eta(p, 0), 0.0);
            for k in 0..e.steps() {
                assert!(spec.domain.phi(e.state(p, k + 1)) >= -tol);
                let de = e.d_eta(p, k);
                assert!(de >= 0.0);
                if de > 0.0 {
                    assert!(spec.domain.phi(e.state(p, k + 1)) <= tol);
                }
            }
        }
    }

    #[test]
    fn identical_pairs_have_zero_moments() {
        let spec = fixtures::reflected_bm();
        let pair = InitialPair { t: 0.0, zeta: vec![0.3], t_prime: 0.0, zeta_prime: vec![0.3] };
        let table = moment_experiment(&spec, &FixedControl(0), &FixedControl(0), &[pair], &EnsembleConfig::new(100, 50, 1), 1.0).unwrap();
        let row = &table.rows[0];
        assert_eq!((row.sup_x4, row.sup_eta4, row.ratio), (0.0, 0.0, 0.0));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let spec = fixtures::reflected_bm();
        let e = simulate(&spec, &FixedControl(0), &FixedControl(0), 0.0, &[0.0], &EnsembleConfig::new(2, 3, 0)).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("path,step,t,x0,eta\n"));
        assert_eq!(text.lines().count(), 1 + 2 * 4);
    }
}
