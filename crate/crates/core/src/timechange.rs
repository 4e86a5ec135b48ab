//! Random time change for GBSDEs driven by an increasing process `A`.
//!
//! With base point `t`, the clock is `ψ_s = A_s + s − A_t` (so `ψ_t = t`),
//! `τ` is its inverse and `(a, b)` are the densities of `dτ` and `dA∘τ`
//! against `dr`, with `a + b = 1`. Under this change of clock
//!
//! ```text
//! ∫ g ds + ∫ f dA  =  ∫ (a_r g(τ_r, ·) + b_r f(τ_r, ·)) dr
//! ```
//!
//! and a GBSDE on `[t, T]` becomes a BSDE on `[t, ψ_T]` driven by `B∘τ`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Generator, Terminal};
use crate::error::{Error, Result};
use crate::gbsde::{solve_paths, Estimate, Generators, Paths, SolveOptions};
use crate::rsde::{simulate, EnsembleConfig, FixedControl};
use crate::ProblemSpec;

/// Lower clamp of the density `a`.
pub const A_FLOOR: f64 = 1e-9;
/// Default resolution of the `r`-grid built by [`TimeChange::build`].
pub const DEFAULT_R_GRID: usize = 4097;
pub const DEFAULT_EPSILONS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

#[derive(Debug, Clone, PartialEq)]
pub struct TimeChange {
    s: Vec<f64>,
    a_path: Vec<f64>,
    psi: Vec<f64>,
    r: Vec<f64>,
    tau: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

/// Index `i` with `grid[i] <= x <= grid[i + 1]`, clamped to the grid.
fn cell(grid: &[f64], x: f64) -> usize {
    let i = grid.partition_point(|&g| g <= x);
    i.saturating_sub(1).min(grid.len() - 2)
}

fn interp(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let i = cell(grid, x);
    let w = (x - grid[i]) / (grid[i + 1] - grid[i]);
    values[i] + w * (values[i + 1] - values[i])
}

/// Uniform sample of `f` on `[t0, t1]` with `count` nodes; node values are
/// computed as `t0 + i·(t1 − t0)/(count − 1)` so interior dyadic points land
/// exactly.
pub fn sample_path(f: &dyn Fn(f64) -> f64, t0: f64, t1: f64, count: usize) -> (Vec<f64>, Vec<f64>) {
    let count = count.max(2);
    let s: Vec<f64> = (0..count)
        .map(|i| if i + 1 == count { t1 } else { t0 + (i as f64 * (t1 - t0)) / (count - 1) as f64 })
        .collect();
    let a = s.iter().map(|&x| f(x)).collect();
    (s, a)
}

/// `A_s = 0` on `[0, 1]`, `A_s = s − 1` on `[1, 2]`.
pub fn piecewise_a(s: f64) -> f64 {
    (s - 1.0).max(0.0)
}

/// Restriction of a sampled path to `[t, end]`, inserting `t` if needed.
pub fn restrict(s: &[f64], a: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if s.len() < 2 || s.len() != a.len() {
        return Err(Error::Dimension("A path needs matching grids of length >= 2".into()));
    }
    if !(t >= s[0] && t < s[s.len() - 1]) {
        return Err(Error::invalid(format!("base point {t} outside the sampled interval")));
    }
    let first = s.partition_point(|&x| x <= t);
    let mut ss = vec![t];
    let mut aa = vec![interp(s, a, t)];
    for i in first..s.len() {
        if s[i] > t {
            ss.push(s[i]);
            aa.push(a[i]);
        }
    }
    Ok((ss, aa))
}

impl TimeChange {
    /// Builds the clock from `A` sampled on `s_grid` (base point `s_grid[0]`)
    /// and samples `τ`, `a`, `b` on a uniform `r`-grid of `r_grid_size` nodes.
    pub fn build(s_grid: &[f64], a_values: &[f64], r_grid_size: usize) -> Result<TimeChange> {
        if s_grid.len() < 2 || s_grid.len() != a_values.len() || r_grid_size < 2 {
            return Err(Error::Dimension("time change needs >= 2 samples and >= 2 r-nodes".into()));
        }
        if s_grid.iter().chain(a_values).any(|v| !v.is_finite()) {
            return Err(Error::invalid("A path must be finite"));
        }
        if s_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("s-grid must be strictly increasing"));
        }
        let mut a_path = Vec::with_capacity(a_values.len());
        let mut running = a_values[0];
        for (i, &v) in a_values.iter().enumerate() {
            if v < running - 1e-12 {
                return Err(Error::NotMonotone { index: i, drop: running - v });
            }
            running = running.max(v);
            a_path.push(running);
        }
        let t = s_grid[0];
        let a0 = a_path[0];
        let psi: Vec<f64> = s_grid.iter().zip(&a_path).map(|(s, a)| a + s - a0).collect();
        let end = psi[psi.len() - 1];
        let (r, _) = sample_path(&|x| x, t, end, r_grid_size);

        let mut tc = TimeChange { s: s_grid.to_vec(), a_path, psi, r, tau: Vec::new(), a: Vec::new(), b: Vec::new() };
        tc.tau = tc.r.iter().map(|&r| tc.tau_at(r)).collect();
        let last = r_grid_size - 1;
        tc.a = (0..r_grid_size)
            .map(|j| {
                let (lo, hi) = (j.saturating_sub(1), (j + 1).min(last));
                let slope = (tc.tau[hi] - tc.tau[lo]) / (tc.r[hi] - tc.r[lo]);
                slope.clamp(A_FLOOR, 1.0)
            })
            .collect();
        tc.b = tc.a.iter().map(|a| 1.0 - a).collect();
        Ok(tc)
    }

    pub fn t(&self) -> f64 {
        self.s[0]
    }

    pub fn horizon(&self) -> f64 {
        self.s[self.s.len() - 1]
    }

    /// `ψ_T`.
    pub fn psi_end(&self) -> f64 {
        self.psi[self.psi.len() - 1]
    }

    pub fn s_grid(&self) -> &[f64] {
        &self.s
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    pub fn r_grid(&self) -> &[f64] {
        &self.r
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// `A_s` by linear interpolation.
    pub fn a_at(&self, s: f64) -> f64 {
        interp(&self.s, &self.a_path, s.clamp(self.t(), self.horizon()))
    }

    pub fn psi_at(&self, s: f64) -> f64 {
        interp(&self.s, &self.psi, s.clamp(self.t(), self.horizon()))
    }

    /// Exact inverse of the piecewise-linear `ψ`.
    pub fn tau_at(&self, r: f64) -> f64 {
        let r = r.clamp(self.t(), self.psi_end());
        let i = cell(&self.psi, r);
        let w = (r - self.psi[i]) / (self.psi[i + 1] - self.psi[i]);
        (self.s[i] + w * (self.s[i + 1] - self.s[i])).min(self.s[i + 1])
    }

    /// `(a_r, b_r)` interpolated on the `r`-grid; `b = 1 − a`.
    pub fn density_at(&self, r: f64) -> (f64, f64) {
        let a = interp(&self.r, &self.a, r.clamp(self.t(), self.psi_end())).clamp(A_FLOOR, 1.0);
        (a, 1.0 - a)
    }

    /// `max |ψ(τ(r)) − r|` over the `r`-grid and `max |τ(ψ(s)) − s|` over the `s`-grid.
    pub fn round_trip_error(&self) -> f64 {
        let forward = self.r.iter().zip(&self.tau).map(|(r, t)| (self.psi_at(*t) - r).abs()).fold(0.0, f64::max);
        let back = self.s.iter().zip(&self.psi).map(|(s, p)| (self.tau_at(*p) - s).abs()).fold(0.0, f64::max);
        forward.max(back)
    }

    /// `|(τ_{t+ε} − t) + (A_{τ_{t+ε}} − A_t) − ε|`.
    pub fn clock_budget_error(&self, eps: f64) -> f64 {
        let t = self.t();
        let tau = self.tau_at(t + eps);
        ((tau - t) + (self.a_at(tau) - self.a_at(t)) - eps).abs()
    }

    /// `max |a + b − 1|` over the `r`-grid (zero by construction).
    pub fn density_identity_error(&self) -> f64 {
        self.a.iter().zip(&self.b).map(|(a, b)| (a + b - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Columns `r,tau,a,b`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "r,tau,a,b")?;
        for j in 0..self.r.len() {
            writeln!(w, "{:e},{:e},{:e},{:e}", self.r[j], self.tau[j], self.a[j], self.b[j])?;
        }
        Ok(())
    }
}

/// `|∫_t^{τ_r} H dA − ∫_t^r H(τ_ρ) b_ρ dρ|`.
///
/// The left side integrates `H` exactly cell by cell against the
/// piecewise-linear `A` (Simpson on each cell); the right side uses `cells`
/// uniform cells in the new clock with `b_ρ dρ` taken as the increment of
/// `A∘τ`.
pub fn commutation_residual(tc: &TimeChange, h: &dyn Fn(f64) -> f64, r_end: f64, cells: usize) -> f64 {
    let t = tc.t();
    let r_end = r_end.clamp(t, tc.psi_end());
    let s_end = tc.tau_at(r_end);
    let mut lhs = 0.0;
    for i in 0..tc.s.len() - 1 {
        let (lo, hi) = (tc.s[i], tc.s[i + 1].min(s_end));
        if hi <= lo {
            break;
        }
        let slope = (tc.a_path[i + 1] - tc.a_path[i]) / (tc.s[i + 1] - tc.s[i]);
        let mid = 0.5 * (lo + hi);
        lhs += slope * (hi - lo) * (h(lo) + 4.0 * h(mid) + h(hi)) / 6.0;
    }
    let cells = cells.max(1);
    let dr = (r_end - t) / cells as f64;
    let mut rhs = 0.0;
    let mut a_prev = tc.a_at(t);
    for j in 0..cells {
        let r1 = if j + 1 == cells { r_end } else { t + (j + 1) as f64 * dr };
        let a1 = tc.a_at(tc.tau_at(r1));
        let mid = tc.tau_at(t + (j as f64 + 0.5) * dr);
        rhs += h(mid) * (a1 - a_prev);
        a_prev = a1;
    }
    (lhs - rhs).abs()
}

/// Brownian paths `B − B_t` on a grid with prescribed increment variances,
/// with a shared deterministic `η` (the increments of `A`).
pub struct BrownianPaths {
    times: Vec<f64>,
    d: usize,
    paths: usize,
    x: Vec<f64>,
    eta: Vec<f64>,
    qv: Vec<f64>,
}

impl BrownianPaths {
    /// `qv[k]` is the variance of each component of the `k`-th increment.
    pub fn generate(times: Vec<f64>, qv: Vec<f64>, eta: Vec<f64>, d: usize, cfg: &EnsembleConfig) -> Result<Self> {
        let m = times.len().saturating_sub(1);
        if m == 0 || qv.len() != m || eta.len() != m + 1 || d == 0 || cfg.paths == 0 {
            return Err(Error::Dimension("Brownian grid, variances and η must agree".into()));
        }
        if qv.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::invalid("increment variances must be positive"));
        }
        let stream = cfg.stream();
        let x: Vec<f64> = (0..cfg.paths)
            .into_par_iter()
            .flat_map_iter(|p| {
                let mut normals = vec![0.0; m * d];
                stream.fill(p as u64, &mut normals);
                let mut out = Vec::with_capacity((m + 1) * d);
                let mut b = vec![0.0; d];
                out.extend_from_slice(&b);
                for k in 0..m {
                    let sd = qv[k].sqrt();
                    for j in 0..d {
                        b[j] += sd * normals[k * d + j];
                    }
                    out.extend_from_slice(&b);
                }
                out
            })
            .collect();
        Ok(BrownianPaths { times, d, paths: cfg.paths, x, eta, qv })
    }

    pub fn terminal_state(&self, path: usize) -> &[f64] {
        self.state(path, self.times.len() - 1)
    }
}

impl Paths for BrownianPaths {
    fn paths(&self) -> usize {
        self.paths
    }
    fn steps(&self) -> usize {
        self.times.len() - 1
    }
    fn n(&self) -> usize {
        self.d
    }
    fn d(&self) -> usize {
        self.d
    }
    fn time(&self, step: usize) -> f64 {
        self.times[step]
    }
    fn dt(&self, step: usize) -> f64 {
        self.times[step + 1] - self.times[step]
    }
    fn increment_var(&self, step: usize) -> f64 {
        self.qv[step]
    }
    fn state(&self, path: usize, step: usize) -> &[f64] {
        let at = (path * self.times.len() + step) * self.d;
        &self.x[at..at + self.d]
    }
    fn d_eta(&self, _path: usize, step: usize) -> f64 {
        self.eta[step + 1] - self.eta[step]
    }
    fn db_into(&self, path: usize, step: usize, out: &mut [f64]) {
        let a = self.state(path, step);
        let b = self.state(path, step + 1);
        for j in 0..self.d {
            out[j] = b[j] - a[j];
        }
    }
}

/// `(g, f)` in the original clock: `g(s, B, y, z)` against `ds`, `f(s, B, y)`
/// against `dA`.
struct OriginalClock<'a> {
    g: &'a Generator,
    f: &'a Generator,
    times: &'a [f64],
}

impl Generators for OriginalClock<'_> {
    fn g(&self, step: usize, x: &[f64], y: f64, z: &[f64]) -> f64 {
        self.g.eval(self.times[step], x, y, z, &[], &[])
    }
    fn f(&self, step: usize, x: &[f64], y: f64) -> f64 {
        self.f.eval(self.times[step], x, y, &[], &[], &[])
    }
    fn y_lipschitz(&self) -> (f64, f64) {
        (self.g.y.abs(), self.f.y.abs())
    }
}

/// Time-changed generator `a_k g(τ_k, ·) + b_k f(τ_k, ·)` against `dr`.
struct ChangedClock<'a> {
    g: &'a Generator,
    f: &'a Generator,
    tau: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Generators for ChangedClock<'_> {
    fn g(&self, step: usize, x: &[f64], y: f64, z: &[f64]) -> f64 {
        let t = self.tau[step];
        self.a[step] * self.g.eval(t, x, y, z, &[], &[]) + self.b[step] * self.f.eval(t, x, y, &[], &[], &[])
    }
    fn f(&self, _step: usize, _x: &[f64], _y: f64) -> f64 {
        0.0
    }
    fn y_lipschitz(&self) -> (f64, f64) {
        (self.g.y.abs() + self.f.y.abs(), 0.0)
    }
}

fn brownian_dim(g: &Generator) -> usize {
    g.z.len().max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationRow {
    pub epsilon: f64,
    pub estimate: f64,
    pub target: f64,
    pub abs_error: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationTable {
    pub rows: Vec<RepresentationRow>,
}

impl RepresentationTable {
    /// Errors strictly decrease along the `ε` list.
    pub fn errors_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].abs_error < w[0].abs_error)
    }

    /// `|estimate − target| / |target|` at the last `ε`.
    pub fn final_relative_error(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.abs_error / r.target.abs())
    }

    /// Columns `epsilon,estimate,target,abs_error,stderr`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epsilon,estimate,target,abs_error,stderr")?;
        for r in &self.rows {
            writeln!(w, "{:e},{:e},{:e},{:e},{:e}", r.epsilon, r.estimate, r.target, r.abs_error, r.stderr)?;
        }
        Ok(())
    }
}

/// Point `(t, y, z)` at which the representation limit is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepresentationPoint {
    pub t: f64,
    pub y: f64,
    pub z: Vec<f64>,
}

/// `(Ŷ^ε_t − y)/ε` for the GBSDE on `[t, τ_{t+ε}]` with terminal
/// `y + ⟨z, B_{τ_{t+ε}} − B_t⟩`, against `a_t g(t, y, z) + b_t f(t, y)`.
///
/// `A` is deterministic, sampled on `(s_grid, a_values)`; each `ε` uses
/// `cfg.steps` uniform steps on `[t, τ_{t+ε}]`.
pub fn representation_limit(
    g: &Generator,
    f: &Generator,
    s_grid: &[f64],
    a_values: &[f64],
    point: &RepresentationPoint,
    epsilons: &[f64],
    cfg: &EnsembleConfig,
    opts: &SolveOptions,
) -> Result<RepresentationTable> {
    let d = brownian_dim(g);
    if point.z.len() > d {
        return Err(Error::Dimension("z has more components than the generator's z-coefficients".into()));
    }
    let (s, a) = restrict(s_grid, a_values, point.t)?;
    let tc = TimeChange::build(&s, &a, DEFAULT_R_GRID)?;
    let t = point.t;
    let mut z = point.z.clone();
    z.resize(d, 0.0);
    let origin = vec![0.0; d];
    let (at, bt) = tc.density_at(t);
    let target = at * g.eval(t, &origin, point.y, &z, &[], &[]) + bt * f.eval(t, &origin, point.y, &[], &[], &[]);

    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        if !(eps > 0.0 && eps <= tc.psi_end() - t + 1e-12) {
            return Err(Error::invalid(format!("epsilon {eps} outside (0, ψ_T − t]")));
        }
        let end = tc.tau_at(t + eps);
        let (times, _) = sample_path(&|x| x, t, end, cfg.steps + 1);
        let qv: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        let a0 = tc.a_at(t);
        let eta: Vec<f64> = times.iter().map(|&s| tc.a_at(s) - a0).collect();
        let paths = BrownianPaths::generate(times.clone(), qv, eta, d, cfg)?;
        let xi: Vec<f64> = (0..cfg.paths)
            .map(|p| point.y + z.iter().zip(paths.terminal_state(p)).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let gens = OriginalClock { g, f, times: &times };
        let sol = solve_paths(&paths, &gens, &xi, None, &opts.without_history())?;
        let estimate = (sol.value - point.y) / eps;
        rows.push(RepresentationRow {
            epsilon: eps,
            estimate,
            target,
            abs_error: (estimate - target).abs(),
            stderr: sol.stderr / eps,
        });
    }
    Ok(RepresentationTable { rows })
}

/// Representation limit with `A` the local time of a reflected path.
///
/// `a_paths` local-time paths of `spec` from `x0` are simulated on
/// `[0, T]` with `a_steps` steps; each is used as a deterministic `A` and
/// the per-path estimates and targets are averaged.
#[allow(clippy::too_many_arguments)]
pub fn representation_limit_local_time(
    g: &Generator,
    f: &Generator,
    spec: &ProblemSpec,
    x0: &[f64],
    point: &RepresentationPoint,
    epsilons: &[f64],
    a_paths: usize,
    a_steps: usize,
    cfg: &EnsembleConfig,
    opts: &SolveOptions,
) -> Result<RepresentationTable> {
    let local = simulate(
        spec,
        &FixedControl(0),
        &FixedControl(0),
        0.0,
        x0,
        &EnsembleConfig::new(a_paths, a_steps, cfg.seed ^ 0x5eed),
    )?;
    let mut per_path = Vec::with_capacity(a_paths);
    for p in 0..a_paths {
        let eta: Vec<f64> = (0..=a_steps).map(|k| local.eta(p, k)).collect();
        let inner = EnsembleConfig { seed: cfg.seed.wrapping_add(p as u64), ..*cfg };
        per_path.push(representation_limit(g, f, local.times(), &eta, point, epsilons, &inner, opts)?);
    }
    let count = a_paths as f64;
    let rows = (0..epsilons.len())
        .map(|i| {
            let est: Vec<f64> = per_path.iter().map(|t| t.rows[i].estimate).collect();
            let estimate = est.iter().sum::<f64>() / count;
            let target = per_path.iter().map(|t| t.rows[i].target).sum::<f64>() / count;
            let var = est.iter().map(|e| (e - estimate).powi(2)).sum::<f64>() / (count - 1.0).max(1.0);
            RepresentationRow {
                epsilon: epsilons[i],
                estimate,
                target,
                abs_error: (estimate - target).abs(),
                stderr: (var / count).sqrt(),
            }
        })
        .collect();
    Ok(RepresentationTable { rows })
}

/// How the time-changed problem is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    /// `r_k = ψ(s_k)` with cell densities; same Gaussian draws as the
    /// original solve.
    Matched,
    /// Uniform `r`-grid on `[t, ψ_T]` with `(a, b)` from [`TimeChange`].
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub original: Estimate,
    pub changed: Estimate,
    pub difference: f64,
}

/// Solves the GBSDE on `[t, T]` (with `t = s_grid[0]`) and the time-changed
/// BSDE on `[t, ψ_T]`, both with terminal `terminal(B_T − B_t)`, and
/// reports the difference of the values at `t`.
pub fn equivalence_check(
    g: &Generator,
    f: &Generator,
    s_grid: &[f64],
    a_values: &[f64],
    terminal: &Terminal,
    clock: Clock,
    cfg: &EnsembleConfig,
    opts: &SolveOptions,
) -> Result<EquivalenceReport> {
    let d = brownian_dim(g);
    let tc = TimeChange::build(s_grid, a_values, DEFAULT_R_GRID)?;
    let t = tc.t();
    let m = cfg.steps;
    let opts = opts.without_history();

    let (times, _) = sample_path(&|x| x, t, tc.horizon(), m + 1);
    let ds: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let a0 = tc.a_at(t);
    let eta: Vec<f64> = times.iter().map(|&s| tc.a_at(s) - a0).collect();
    let original = {
        let paths = BrownianPaths::generate(times.clone(), ds.clone(), eta.clone(), d, cfg)?;
        let xi: Vec<f64> = (0..cfg.paths).map(|p| terminal.eval(paths.terminal_state(p))).collect();
        solve_paths(&paths, &OriginalClock { g, f, times: &times }, &xi, None, &opts)?
    };

    let (r_times, tau, qv, a, b) = match clock {
        Clock::Matched => {
            let r: Vec<f64> = times.iter().zip(&eta).map(|(s, e)| s + e).collect();
            let a: Vec<f64> = (0..m).map(|k| (ds[k] / (r[k + 1] - r[k])).clamp(A_FLOOR, 1.0)).collect();
            let b = a.iter().map(|a| 1.0 - a).collect();
            (r, times.clone(), ds.clone(), a, b)
        }
        Clock::Uniform => {
            let (r, _) = sample_path(&|x| x, t, tc.psi_end(), m + 1);
            let tau: Vec<f64> = r.iter().map(|&r| tc.tau_at(r)).collect();
            let qv: Vec<f64> = tau.windows(2).map(|w| (w[1] - w[0]).max(f64::MIN_POSITIVE)).collect();
            let (a, b): (Vec<f64>, Vec<f64>) = r[..m].iter().map(|&r| tc.density_at(r)).unzip();
            (r, tau, qv, a, b)
        }
    };
    let changed = {
        let zero_eta = vec![0.0; m + 1];
        let paths = BrownianPaths::generate(r_times, qv, zero_eta, d, cfg)?;
        let xi: Vec<f64> = (0..cfg.paths).map(|p| terminal.eval(paths.terminal_state(p))).collect();
        solve_paths(&paths, &ChangedClock { g, f, tau, a, b }, &xi, None, &opts)?
    };
    Ok(EquivalenceReport {
        original: original.estimate(),
        changed: changed.estimate(),
        difference: (original.value - changed.value).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn piecewise(count: usize) -> TimeChange {
        let (s, a) = sample_path(&piecewise_a, 0.0, 2.0, count);
        TimeChange::build(&s, &a, 3001).unwrap()
    }

    #[test]
    fn zero_a_is_identity_clock() {
        let (s, a) = sample_path(&|_| 0.0, 0.0, 1.0, 11);
        let tc = TimeChange::build(&s, &a, 101).unwrap();
        for (r, tau) in tc.r_grid().iter().zip(tc.tau()) {
            assert_abs_diff_eq!(r, tau, epsilon = 1e-15);
        }
        assert!(tc.a().iter().all(|&a| a == 1.0));
        assert!(tc.b().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn piecewise_inverse_by_hand() {
        let tc = piecewise(201);
        assert_abs_diff_eq!(tc.psi_end(), 3.0, epsilon = 1e-12);
        for &r in &[0.0, 0.3, 0.99, 1.0] {
            assert_abs_diff_eq!(tc.tau_at(r), r, epsilon = 1e-12);
        }
        for &r in &[1.2, 2.0, 2.9, 3.0] {
            assert_abs_diff_eq!(tc.tau_at(r), (r + 1.0) / 2.0, epsilon = 1e-12);
        }
        let (a, b) = tc.density_at(0.5);
        assert_abs_diff_eq!((a, b).0, 1.0, epsilon = 1e-12);
        let (a, b) = tc.density_at(2.0);
        assert_abs_diff_eq!(a, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(b, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn linear_a_gives_half_densities() {
        let (s, a) = sample_path(&|s| s, 0.0, 1.0, 50);
        let tc = TimeChange::build(&s, &a, 77).unwrap();
        for (a, b) in tc.a().iter().zip(tc.b()) {
            assert_abs_diff_eq!(*a, 0.5, epsilon = 1e-12);
            assert_eq!(a + b, 1.0);
        }
    }

    #[test]
    fn decreasing_a_is_rejected() {
        let err = TimeChange::build(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.5], 10).unwrap_err();
        assert!(matches!(err, Error::NotMonotone { index: 2, .. }));
        assert!(TimeChange::build(&[0.0, 1.0], &[0.0, -1e-13], 10).is_ok());
    }

    #[test]
    fn round_trip_and_clock_budget() {
        let tc = piecewise(2001);
        assert!(tc.round_trip_error() <= 1e-9);
        for eps in [2.5, 1.0, 0.5, 0.2, 0.025] {
            assert!(tc.clock_budget_error(eps) <= 1e-9, "{eps}");
        }
        assert_eq!(tc.density_identity_error(), 0.0);
    }

    #[test]
    fn base_point_shifts_clock() {
        let (s, a) = sample_path(&piecewise_a, 0.0, 2.0, 201);
        let (s, a) = restrict(&s, &a, 1.5).unwrap();
        let tc = TimeChange::build(&s, &a, 101).unwrap();
        assert_eq!(tc.psi_at(1.5), 1.5);
        assert_abs_diff_eq!(tc.psi_end(), 2.5, epsilon = 1e-12);
        let (a, _) = tc.density_at(1.5);
        assert_abs_diff_eq!(a, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn commutation_on_smooth_integrand() {
        let tc = piecewise(401);
        let h = |s: f64| (2.0 * s).sin() + s * s;
        for r in [0.5, 1.7, 3.0] {
            let res = commutation_residual(&tc, &h, r, 100_000);
            assert!(res <= 1e-6, "r={r} residual {res}");
        }
    }

    #[test]
    fn constant_generator_representation_is_exact() {
        let (s, a) = sample_path(&|s| s, 0.0, 1.0, 101);
        let point = RepresentationPoint { t: 0.3, y: 0.7, z: vec![0.0] };
        let table = representation_limit(
            &Generator::constant(2.0),
            &Generator::constant(4.0),
            &s,
            &a,
            &point,
            &DEFAULT_EPSILONS,
            &EnsembleConfig::new(2, 10, 0),
            &SolveOptions::default(),
        )
        .unwrap();
        for row in &table.rows {
            assert_abs_diff_eq!(row.estimate, 3.0, epsilon = 1e-10);
            assert_abs_diff_eq!(row.target, 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_a_representation_recovers_g() {
        let (s, a) = sample_path(&|_| 0.0, 0.0, 1.0, 11);
        let point = RepresentationPoint { t: 0.0, y: 1.0, z: vec![] };
        let table = representation_limit(
            &Generator::constant(-1.5),
            &Generator::constant(9.0),
            &s,
            &a,
            &point,
            &DEFAULT_EPSILONS,
            &EnsembleConfig::new(4, 8, 0),
            &SolveOptions::default(),
        )
        .unwrap();
        for row in &table.rows {
            assert_abs_diff_eq!(row.estimate, -1.5, epsilon = 1e-10);
        }
    }

    #[test]
    fn equivalence_trivial_cases() {
        let (s, a) = sample_path(&piecewise_a, 0.0, 2.0, 401);
        let cfg = EnsembleConfig::new(8, 100, 3);
        for clock in [Clock::Matched, Clock::Uniform] {
            let r = equivalence_check(
                &Generator::zero(),
                &Generator::zero(),
                &s,
                &a,
                &Terminal::Constant { value: 2.0 },
                clock,
                &cfg,
                &SolveOptions::default(),
            )
            .unwrap();
            assert_eq!(r.original.value, 2.0);
            assert_eq!(r.changed.value, 2.0);
        }
        let r = equivalence_check(
            &Generator { y: -1.0, ..Default::default() },
            &Generator::constant(1.0),
            &s,
            &a,
            &Terminal::Constant { value: 1.0 },
            Clock::Matched,
            &cfg,
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(r.difference < 1e-12, "{r:?}");
    }
}
