//! Backward solver for the generalized BSDE
//!
//! ```text
//! Y_t = ξ + ∫_t^T g(s, X_s, Y_s, Z_s) ds + ∫_t^T f(s, X_s, Y_s) dη_s − ∫_t^T Z_s dB_s
//! ```
//!
//! on a simulated path ensemble, plus the backward semigroup `G` built on it.
//!
//! One backward step, with `Ê_k` the cross-path regression on `X_k`:
//!
//! ```text
//! ŷ_k = Ê_k[Y_{k+1}]
//! Z_k = Ê_k[(Y_{k+1} − ŷ_k) ΔB_k] / v_k
//! Y_k = Ê_k[Y_{k+1} + f(t_k, X_k, ŷ_k) Δη_k] + g(t_k, X_k, ŷ_k, Z_k) Δt_k
//! ```
//!
//! where `v_k` is the per-component variance of `ΔB_k`. The `f Δη` term sits
//! inside the conditional expectation so that `Y_k` stays a function of
//! `X_k`. Stiff generators switch to a fixed-point iteration in `Y_k`.

pub mod regression;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::ProblemSpec;
use crate::error::{Error, Result};
use crate::rsde::{simulate, simulate_until, EnsembleConfig, PathEnsemble, Policy};

pub use regression::{Basis, Fitted, Fitter, RegressionSpec};

/// Stiffness threshold on `λ₁Δt` and `λ₂ max Δη`.
pub const STIFF: f64 = 0.1;
pub const IMPLICIT_MAX_ITER: usize = 20;
pub const IMPLICIT_TOL: f64 = 1e-10;

/// Read access to simulated forward paths.
pub trait Paths: Sync {
    fn paths(&self) -> usize;
    fn steps(&self) -> usize;
    /// State dimension (regression variables).
    fn n(&self) -> usize;
    /// Brownian dimension.
    fn d(&self) -> usize;
    fn time(&self, step: usize) -> f64;
    fn dt(&self, step: usize) -> f64;
    fn increment_var(&self, step: usize) -> f64;
    fn state(&self, path: usize, step: usize) -> &[f64];
    fn d_eta(&self, path: usize, step: usize) -> f64;
    fn db_into(&self, path: usize, step: usize, out: &mut [f64]);
}

impl Paths for PathEnsemble {
    fn paths(&self) -> usize {
        PathEnsemble::paths(self)
    }
    fn steps(&self) -> usize {
        PathEnsemble::steps(self)
    }
    fn n(&self) -> usize {
        PathEnsemble::n(self)
    }
    fn d(&self) -> usize {
        PathEnsemble::d(self)
    }
    fn time(&self, step: usize) -> f64 {
        self.times()[step]
    }
    fn dt(&self, step: usize) -> f64 {
        PathEnsemble::dt(self, step)
    }
    fn increment_var(&self, step: usize) -> f64 {
        PathEnsemble::increment_var(self, step)
    }
    fn state(&self, path: usize, step: usize) -> &[f64] {
        PathEnsemble::state(self, path, step)
    }
    fn d_eta(&self, path: usize, step: usize) -> f64 {
        PathEnsemble::d_eta(self, path, step)
    }
    fn db_into(&self, path: usize, step: usize, out: &mut [f64]) {
        out.copy_from_slice(self.db(path, step))
    }
}

/// Generator pair `(g, f)` evaluated at grid step `k`.
pub trait Generators: Sync {
    fn g(&self, step: usize, x: &[f64], y: f64, z: &[f64]) -> f64;
    fn f(&self, step: usize, x: &[f64], y: f64) -> f64;
    /// Lipschitz constants of `g` and `f` in `y`, used to detect stiffness.
    fn y_lipschitz(&self) -> (f64, f64) {
        (0.0, 0.0)
    }
}

/// `(g, f)` of a [`ProblemSpec`] under feedback policies.
pub struct SpecGenerators<'a> {
    pub spec: &'a ProblemSpec,
    pub times: &'a [f64],
    pub u_policy: &'a dyn Policy,
    pub v_policy: &'a dyn Policy,
}

impl SpecGenerators<'_> {
    fn controls(&self, t: f64, x: &[f64]) -> (&[f64], &[f64]) {
        (
            self.spec.controls_u.point(self.u_policy.control(t, x)),
            self.spec.controls_v.point(self.v_policy.control(t, x)),
        )
    }
}

impl Generators for SpecGenerators<'_> {
    fn g(&self, step: usize, x: &[f64], y: f64, z: &[f64]) -> f64 {
        let t = self.times[step];
        let (u, v) = self.controls(t, x);
        self.spec.g(t, x, y, z, u, v)
    }

    fn f(&self, step: usize, x: &[f64], y: f64) -> f64 {
        let t = self.times[step];
        let (u, v) = self.controls(t, x);
        self.spec.f(t, x, y, u, v)
    }

    fn y_lipschitz(&self) -> (f64, f64) {
        let c = &self.spec.coeffs;
        (c.g.y.abs() + 20.0 * c.g.y_sq.abs(), c.f.y.abs() + 20.0 * c.f.y_sq.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Implicit {
    /// Iterate only when the generator is stiff on this grid.
    Auto,
    Never,
    Always,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveOptions {
    pub regression: RegressionSpec,
    /// Explicit predictor sweeps (1 or 2).
    pub sweeps: usize,
    pub implicit: Implicit,
    /// Keep `Y` and `Z` for every step; otherwise only `Y` at step 0.
    pub keep_history: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { regression: RegressionSpec::affine(), sweeps: 1, implicit: Implicit::Auto, keep_history: true }
    }
}

impl SolveOptions {
    pub fn new(regression: RegressionSpec) -> Self {
        SolveOptions { regression, ..Default::default() }
    }

    pub fn without_history(mut self) -> Self {
        self.keep_history = false;
        self
    }
}

/// Value with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackwardSolution {
    paths: usize,
    steps: usize,
    d: usize,
    history: bool,
    /// Step-major `(steps + 1) × paths` with history, else `1 × paths`.
    y: Vec<f64>,
    /// Step-major `steps × paths × d` with history, else empty.
    z: Vec<f64>,
    /// Regression condition number per step.
    pub condition: Vec<f64>,
    /// Mean of `Y` at step 0.
    pub value: f64,
    /// Standard error of the pathwise cash-flow estimator of `Y_0`.
    pub stderr: f64,
    /// `max_k |Y_k|²` per path.
    pub sup_y_sq: Vec<f64>,
    /// `Σ_k |Z_k|² Δt_k` per path.
    pub z_energy: Vec<f64>,
}

impl BackwardSolution {
    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn has_history(&self) -> bool {
        self.history
    }

    pub fn y0(&self, path: usize) -> f64 {
        self.y[path]
    }

    /// `Y` at `(path, step)`; requires history.
    pub fn y(&self, path: usize, step: usize) -> f64 {
        assert!(self.history || step == 0, "solution kept no history");
        self.y[step * self.paths + path]
    }

    /// `Z` at `(path, step)`; requires history.
    pub fn z(&self, path: usize, step: usize) -> &[f64] {
        assert!(self.history, "solution kept no history");
        let at = (step * self.paths + path) * self.d;
        &self.z[at..at + self.d]
    }

    pub fn max_condition(&self) -> f64 {
        self.condition.iter().cloned().fold(1.0, f64::max)
    }

    pub fn estimate(&self) -> Estimate {
        Estimate { value: self.value, stderr: self.stderr }
    }

    pub fn summary(&self) -> BackwardSummary {
        BackwardSummary {
            value: self.value,
            stderr: self.stderr,
            max_condition: self.max_condition(),
            paths: self.paths,
            steps: self.steps,
        }
    }
}

/// JSON record of one backward solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackwardSummary {
    pub value: f64,
    pub stderr: f64,
    pub max_condition: f64,
    pub paths: usize,
    pub steps: usize,
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Backward recursion on `paths` with per-path terminal values.
///
/// `stop[p]` is the step at which path `p` is stopped (default: the last
/// step); stopped paths keep `Y = terminal[p]`, `Z = 0` from there on and
/// drop out of later regressions.
pub fn solve_paths<P: Paths + ?Sized>(
    paths: &P,
    generators: &dyn Generators,
    terminal: &[f64],
    stop: Option<&[usize]>,
    opts: &SolveOptions,
) -> Result<BackwardSolution> {
    let count = paths.paths();
    let m = paths.steps();
    let n = paths.n();
    let d = paths.d();
    if terminal.len() != count {
        return Err(Error::Dimension(format!("{} terminal values for {count} paths", terminal.len())));
    }
    if let Some(s) = stop {
        if s.len() != count || s.iter().any(|&k| k > m) {
            return Err(Error::Dimension("stop steps must be one per path and at most the step count".into()));
        }
    }
    if terminal.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("terminal values must be finite"));
    }
    let stop_at = |p: usize| stop.map_or(m, |s| s[p]);

    let history = opts.keep_history;
    let mut y_hist = if history { vec![0.0; (m + 1) * count] } else { Vec::new() };
    let mut z_hist = if history { vec![0.0; m * count * d] } else { Vec::new() };
    if history {
        for k in 0..=m {
            for p in 0..count {
                if k >= stop_at(p) {
                    y_hist[k * count + p] = terminal[p];
                }
            }
        }
    }

    let (l1, l2) = generators.y_lipschitz();
    let stiff = match opts.implicit {
        Implicit::Always => true,
        Implicit::Never => false,
        Implicit::Auto => {
            let max_dt = (0..m).map(|k| paths.dt(k)).fold(0.0, f64::max);
            let max_deta = if l2 > 0.0 {
                (0..count)
                    .flat_map(|p| (0..m).map(move |k| (p, k)))
                    .map(|(p, k)| paths.d_eta(p, k))
                    .fold(0.0, f64::max)
            } else {
                0.0
            };
            l1 * max_dt > STIFF || l2 * max_deta > STIFF
        }
    };

    let mut next = terminal.to_vec();
    let mut cash = terminal.to_vec();
    let mut sup_y_sq: Vec<f64> = terminal.iter().map(|v| v * v).collect();
    let mut z_energy = vec![0.0; count];
    let mut condition = vec![1.0; m];

    for k in (0..m).rev() {
        let active: Vec<usize> = (0..count).filter(|&p| stop_at(p) > k).collect();
        if active.is_empty() {
            continue;
        }
        let mut points = Vec::with_capacity(active.len() * n);
        for &p in &active {
            points.extend_from_slice(paths.state(p, k));
        }
        let fitter = Fitter::new(&opts.regression, &points, n, k)?;
        condition[k] = fitter.condition();

        let y_next: Vec<f64> = active.iter().map(|&p| next[p]).collect();
        let pred = fitter.project(&y_next);
        let dt = paths.dt(k);
        let qv = paths.increment_var(k);

        let db: Vec<f64> = active
            .par_iter()
            .flat_map_iter(|&p| {
                let mut buf = vec![0.0; d];
                paths.db_into(p, k, &mut buf);
                buf
            })
            .collect();
        let mut z = vec![0.0; active.len() * d];
        for j in 0..d {
            let target: Vec<f64> =
                (0..active.len()).map(|i| (y_next[i] - pred[i]) * db[i * d + j]).collect();
            let fitted = fitter.project(&target);
            for i in 0..active.len() {
                z[i * d + j] = fitted[i] / qv;
            }
        }
        let d_eta: Vec<f64> = active.iter().map(|&p| paths.d_eta(p, k)).collect();
        let any_eta = d_eta.iter().any(|&e| e != 0.0);

        let evaluate = |y_in: &[f64]| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
            let terms: Vec<(f64, f64)> = (0..active.len())
                .into_par_iter()
                .map(|i| {
                    let x = paths.state(active[i], k);
                    let f = if d_eta[i] != 0.0 { generators.f(k, x, y_in[i]) * d_eta[i] } else { 0.0 };
                    let g = generators.g(k, x, y_in[i], &z[i * d..(i + 1) * d]) * dt;
                    (f, g)
                })
                .collect();
            let base = if any_eta {
                let target: Vec<f64> = (0..active.len()).map(|i| y_next[i] + terms[i].0).collect();
                fitter.project(&target)
            } else {
                pred.clone()
            };
            let y_out = (0..active.len()).map(|i| base[i] + terms[i].1).collect();
            (y_out, terms.iter().map(|t| t.0).collect(), terms.iter().map(|t| t.1).collect())
        };

        let mut y_cur = pred.clone();
        let (mut y_new, mut f_terms, mut g_terms) = evaluate(&y_cur);
        if stiff {
            let mut iterations = 1;
            loop {
                let change = y_new.iter().zip(&y_cur).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if change <= IMPLICIT_TOL * (1.0 + y_new.iter().map(|v| v.abs()).fold(0.0, f64::max)) {
                    break;
                }
                if iterations >= IMPLICIT_MAX_ITER {
                    return Err(Error::NonConvergence { iterations, residual: change });
                }
                y_cur = y_new;
                (y_new, f_terms, g_terms) = evaluate(&y_cur);
                iterations += 1;
            }
        } else {
            for _ in 1..opts.sweeps.max(1) {
                y_cur = y_new;
                (y_new, f_terms, g_terms) = evaluate(&y_cur);
            }
        }

        for (i, &p) in active.iter().enumerate() {
            let y = y_new[i];
            if !y.is_finite() {
                return Err(Error::Divergence { layer: k, value: y });
            }
            next[p] = y;
            cash[p] += f_terms[i] + g_terms[i];
            sup_y_sq[p] = sup_y_sq[p].max(y * y);
            let zz = &z[i * d..(i + 1) * d];
            z_energy[p] += zz.iter().map(|v| v * v).sum::<f64>() * dt;
            if history {
                y_hist[k * count + p] = y;
                let at = (k * count + p) * d;
                z_hist[at..at + d].copy_from_slice(zz);
            }
        }
    }

    let value = next.iter().sum::<f64>() / count as f64;
    let (_, stderr) = mean_and_stderr(&cash);
    Ok(BackwardSolution {
        paths: count,
        steps: m,
        d,
        history,
        y: if history { y_hist } else { next },
        z: z_hist,
        condition,
        value,
        stderr,
        sup_y_sq,
        z_energy,
    })
}

/// Solves on an ensemble from [`crate::rsde::simulate`] with `Y_M = terminal(X_M)`.
pub fn solve_on_ensemble(
    ensemble: &PathEnsemble,
    spec: &ProblemSpec,
    u_policy: &dyn Policy,
    v_policy: &dyn Policy,
    terminal: &(dyn Fn(&[f64]) -> f64 + Sync),
    opts: &SolveOptions,
) -> Result<BackwardSolution> {
    let m = ensemble.steps();
    let xi: Vec<f64> = (0..ensemble.paths()).map(|p| terminal(ensemble.state(p, m))).collect();
    let generators = SpecGenerators { spec, times: ensemble.times(), u_policy, v_policy };
    solve_paths(ensemble, &generators, &xi, None, opts)
}

/// `G^{t,x;u,v}_{t,s}[ξ]`: the GBSDE value at `t` on `[t, s]` with terminal
/// `ξ = xi(X_s)`.
#[allow(clippy::too_many_arguments)]
pub fn semigroup_g(
    spec: &ProblemSpec,
    t: f64,
    x: &[f64],
    u_policy: &dyn Policy,
    v_policy: &dyn Policy,
    s: f64,
    xi: &(dyn Fn(&[f64]) -> f64 + Sync),
    cfg: &EnsembleConfig,
    opts: &SolveOptions,
) -> Result<Estimate> {
    if !(t <= s && s <= spec.horizon) {
        return Err(Error::invalid(format!("need t <= s <= T, got t={t}, s={s}")));
    }
    if s == t {
        return Ok(Estimate { value: xi(x), stderr: 0.0 });
    }
    let ensemble = simulate_until(spec, u_policy, v_policy, t, s, x, cfg)?;
    Ok(solve_on_ensemble(&ensemble, spec, u_policy, v_policy, xi, opts)?.estimate())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    /// `G_{t,T}[Φ(X_T)]`.
    pub direct: Estimate,
    /// `G_{t,s}[Ŷ_s(X_s)]` on independent paths.
    pub nested: Estimate,
    pub residual: f64,
    pub budget: f64,
    pub passed: bool,
}

/// Statistical allowance used by the flow and DPP checks on top of
/// three standard errors.
pub const BIAS_BUDGET: f64 = 0.02;

/// Flow property `G_{t,T}[Φ] = G_{t,s}[G_{s,T}[Φ]]`.
///
/// `2N` paths are simulated on `[t, T]`. The first `N` give the direct value
/// and a regression fit of `Y_s` as a function of `X_s`; the other `N`,
/// truncated at `s`, are solved with that fit as terminal condition.
#[allow(clippy::too_many_arguments)]
pub fn flow_check(
    spec: &ProblemSpec,
    t: f64,
    x: &[f64],
    u_policy: &dyn Policy,
    v_policy: &dyn Policy,
    s: f64,
    cfg: &EnsembleConfig,
    opts: &SolveOptions,
) -> Result<FlowReport> {
    if !(t < s && s < spec.horizon) {
        return Err(Error::invalid(format!("need t < s < T, got t={t}, s={s}")));
    }
    let m = cfg.steps;
    let dt = (spec.horizon - t) / m as f64;
    let ks = ((s - t) / dt).round() as usize;
    if ks == 0 || ks >= m || ((t + ks as f64 * dt) - s).abs() > 1e-9 {
        return Err(Error::invalid(format!("intermediate time {s} is not an interior grid node")));
    }
    let n = cfg.paths;
    let both = EnsembleConfig { paths: 2 * n, ..*cfg };
    let ensemble = simulate(spec, u_policy, v_policy, t, x, &both)?;
    let first = ensemble.select(0..n);
    let second = ensemble.select(n..2 * n).truncated(ks);

    let opts_hist = SolveOptions { keep_history: true, ..*opts };
    let terminal = |x: &[f64]| spec.terminal(x);
    let direct = solve_on_ensemble(&first, spec, u_policy, v_policy, &terminal, &opts_hist)?;

    let mut points = Vec::with_capacity(n * spec.n());
    for p in 0..n {
        points.extend_from_slice(first.state(p, ks));
    }
    let fitter = Fitter::new(&opts.regression, &points, spec.n(), ks)?;
    let y_s: Vec<f64> = (0..n).map(|p| direct.y(p, ks)).collect();
    let fitted = fitter.fit(&y_s);
    let xi: Vec<f64> = (0..n).map(|p| fitter.predict(&fitted, second.state(p, ks))).collect();
    let generators = SpecGenerators { spec, times: second.times(), u_policy, v_policy };
    let nested = solve_paths(&second, &generators, &xi, None, &opts.without_history())?;

    let residual = (direct.value - nested.value).abs();
    let budget = 3.0 * (direct.stderr.powi(2) + nested.stderr.powi(2)).sqrt() + BIAS_BUDGET;
    Ok(FlowReport {
        direct: direct.estimate(),
        nested: nested.estimate(),
        residual,
        budget,
        passed: residual <= budget,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub checked: usize,
    pub violations: usize,
    /// `max (Y¹ − Y²)⁺` over all paths and steps.
    pub max_violation: f64,
    pub tolerance: f64,
}

impl ComparisonReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Counts `(path, step)` with `Y¹ > Y² + tol` for two solves sharing one
/// ensemble and regression.
pub fn compare_solutions(first: &BackwardSolution, second: &BackwardSolution, tol: f64) -> Result<ComparisonReport> {
    if first.paths != second.paths || first.steps != second.steps || !first.history || !second.history {
        return Err(Error::Dimension("comparison needs two full-history solves on one ensemble".into()));
    }
    let mut report = ComparisonReport { checked: 0, violations: 0, max_violation: 0.0, tolerance: tol };
    for (a, b) in first.y.iter().zip(&second.y) {
        report.checked += 1;
        let gap = a - b;
        report.max_violation = report.max_violation.max(gap);
        if gap > tol {
            report.violations += 1;
        }
    }
    Ok(report)
}

/// Comparison check for two specs that differ only in `(Φ, g, f)`, solved on
/// one shared ensemble.
pub fn comparison_check(
    ensemble: &PathEnsemble,
    lower: &ProblemSpec,
    upper: &ProblemSpec,
    u_policy: &dyn Policy,
    v_policy: &dyn Policy,
    opts: &SolveOptions,
    tol: f64,
) -> Result<ComparisonReport> {
    let opts = SolveOptions { keep_history: true, ..*opts };
    let y1 = solve_on_ensemble(ensemble, lower, u_policy, v_policy, &|x| lower.terminal(x), &opts)?;
    let y2 = solve_on_ensemble(ensemble, upper, u_policy, v_policy, &|x| upper.terminal(x), &opts)?;
    compare_solutions(&y1, &y2, tol)
}

/// `sup_k Ê|Y_k|² / (1 + Ê|ξ|² + Ê Σ|g(·,0,0)|²Δt + Ê Σ|f(·,0)|²Δη)`.
pub fn apriori_ratio<P: Paths + ?Sized>(
    paths: &P,
    generators: &dyn Generators,
    terminal: &[f64],
    solution: &BackwardSolution,
) -> Result<f64> {
    if !solution.history {
        return Err(Error::invalid("a priori ratio needs a full-history solve"));
    }
    let count = paths.paths();
    let m = paths.steps();
    let zero_z = vec![0.0; paths.d()];
    let mut sup = 0.0f64;
    for k in 0..=m {
        let second: f64 = (0..count).map(|p| solution.y(p, k).powi(2)).sum::<f64>() / count as f64;
        sup = sup.max(second);
    }
    let data: f64 = (0..count)
        .map(|p| {
            let mut acc = terminal[p].powi(2);
            for k in 0..m {
                let x = paths.state(p, k);
                acc += generators.g(k, x, 0.0, &zero_z).powi(2) * paths.dt(k);
                acc += generators.f(k, x, 0.0).powi(2) * paths.d_eta(p, k);
            }
            acc
        })
        .sum::<f64>()
        / count as f64;
    Ok(sup / (1.0 + data))
}

/// `Ê[sup_k |Y_k|² + Σ_k |Z_k|² Δt] / (1 + |ζ|²)`.
pub fn growth_ratio(solution: &BackwardSolution, zeta: &[f64]) -> f64 {
    let count = solution.paths as f64;
    let e: f64 = solution.sup_y_sq.iter().zip(&solution.z_energy).map(|(a, b)| a + b).sum::<f64>() / count;
    e / (1.0 + zeta.iter().map(|v| v * v).sum::<f64>())
}
