//! Game values by a semi-Lagrangian dynamic-programming recursion over
//! one-step feedback strategies, with DPP, regularity and cross-validation
//! checks.

use std::io::Write;

use gauss_quad::GaussHermite;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::ProblemSpec;
use crate::error::{Error, Result};
use crate::gbsde::{self, Estimate, SolveOptions, SpecGenerators, BIAS_BUDGET};
use crate::isaacs::{self, hamiltonian, minimax, HamiltonianEval, Kind, Mesh, SchemeParams, ValueGrid};
use crate::rng::{GaussianStream, UniformStream};
use crate::rsde::{self, EnsembleConfig, FixedControl, Policy};

pub const DEFAULT_GH_POINTS: usize = 5;
pub const DEFAULT_MC_SAMPLES: usize = 512;
pub const DEFAULT_K_CAP: usize = 5;
pub const MIN_DYADIC_SEPARATIONS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Quadrature {
    /// Tensor Gauss–Hermite rule with `q` points per Brownian dimension.
    GaussHermite { q: usize },
    /// The same `samples` Gaussian draws at every node and layer.
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TauRule {
    /// `τ = t + δ`.
    Fixed,
    /// First grid time after `t` with `φ(X) ≤ εbd`, capped at `t + cap·δ`.
    BoundaryHitCapped { cap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DppConfig {
    pub delta: f64,
    pub quadrature: Quadrature,
    pub tau_rule: TauRule,
}

impl DppConfig {
    /// Gauss–Hermite for `d ≤ 2`, Monte Carlo otherwise; capped boundary-hit `τ`.
    pub fn new(delta: f64, d: usize) -> Self {
        let quadrature = if d <= 2 {
            Quadrature::GaussHermite { q: DEFAULT_GH_POINTS }
        } else {
            Quadrature::MonteCarlo { samples: DEFAULT_MC_SAMPLES, seed: 0 }
        };
        DppConfig { delta, quadrature, tau_rule: TauRule::BoundaryHitCapped { cap: DEFAULT_K_CAP } }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid(format!("dpp step must be positive, got {}", self.delta)));
        }
        match self.quadrature {
            Quadrature::GaussHermite { q: 0 } | Quadrature::MonteCarlo { samples: 0, .. } => {
                Err(Error::invalid("quadrature needs at least one point"))
            }
            _ => Ok(()),
        }
    }

    /// Layer count `T/δ`, which must be an integer.
    fn layers(&self, horizon: f64) -> Result<usize> {
        self.validate()?;
        let layers = (horizon / self.delta).round() as usize;
        if layers == 0 || (layers as f64 * self.delta - horizon).abs() > 1e-9 * horizon.max(1.0) {
            return Err(Error::invalid(format!("dpp step {} does not divide the horizon {horizon}", self.delta)));
        }
        Ok(layers)
    }
}

/// Probability weights and Brownian increments `ΔB` of one step.
fn quadrature_points(quadrature: Quadrature, d: usize, delta: f64) -> Result<Vec<(f64, Vec<f64>)>> {
    let scale = delta.sqrt();
    match quadrature {
        Quadrature::GaussHermite { q } => {
            // Weight e^{−x²} rule, so a standard normal sits at √2·x with weight w/√π.
            let rule: Vec<(f64, f64)> = if q == 1 {
                vec![(0.0, 1.0)]
            } else {
                let gh = GaussHermite::new(q).map_err(|e| Error::invalid(format!("Gauss-Hermite rule: {e}")))?;
                let mut r: Vec<(f64, f64)> = gh
                    .iter()
                    .map(|(x, w)| (std::f64::consts::SQRT_2 * x, w / std::f64::consts::PI.sqrt()))
                    .collect();
                r.sort_by(|a, b| a.0.total_cmp(&b.0));
                r
            };
            let total = rule.len().pow(d as u32);
            let mut points = Vec::with_capacity(total);
            for flat in 0..total {
                let mut rem = flat;
                let mut weight = 1.0;
                let mut db = vec![0.0; d];
                for slot in db.iter_mut() {
                    let (x, w) = rule[rem % rule.len()];
                    rem /= rule.len();
                    *slot = scale * x;
                    weight *= w;
                }
                points.push((weight, db));
            }
            Ok(points)
        }
        Quadrature::MonteCarlo { samples, seed } => {
            let stream = GaussianStream::new(seed);
            Ok((0..samples)
                .map(|s| {
                    let mut db = vec![0.0; d];
                    stream.fill(s as u64, &mut db);
                    db.iter_mut().for_each(|v| *v *= scale);
                    (1.0 / samples as f64, db)
                })
                .collect())
        }
    }
}

/// Foot point of one quadrature branch.
struct Branch {
    stencil: Vec<(usize, f64)>,
    d_eta: f64,
}

/// `W(t_k, x) = max_u min_v Ĝ` (lower; min-max for upper) with
/// `Ĝ = ŷ + g(t,x,ŷ,ẑ,u,v)δ + f(t,x,ŷ,u,v)·Ê[Δη]`, `ŷ = Ê[W(t_{k+1}, X')]`,
/// `ẑ = Ê[W(t_{k+1}, X')ΔB]/δ`, where `X'` is one projected Euler step and
/// `W(t_{k+1}, ·)` is interpolated multilinearly.
pub fn dpp_value(spec: &ProblemSpec, kind: Kind, mesh: Mesh, cfg: &DppConfig) -> Result<ValueGrid> {
    if mesh.dim() != spec.n() {
        return Err(Error::Dimension("mesh and state dimensions differ".into()));
    }
    let horizon = spec.horizon;
    let layers = cfg.layers(horizon)?;
    let delta = cfg.delta;
    let d = spec.d();
    let points = quadrature_points(cfg.quadrature, d, delta)?;
    let (nu, nv) = (spec.controls_u.len(), spec.controls_v.len());
    let pairs = nu * nv;

    // b and σ do not depend on t, so every foot point is fixed in advance.
    let branches: Vec<Vec<Branch>> = mesh
        .nodes()
        .par_iter()
        .map(|node| {
            let mut out = Vec::with_capacity(pairs * points.len());
            for iu in 0..nu {
                for iv in 0..nv {
                    for (_, db) in &points {
                        let (x1, d_eta) = rsde::step(
                            spec,
                            &node.x,
                            spec.controls_u.point(iu),
                            spec.controls_v.point(iv),
                            0.0,
                            delta,
                            db,
                        )?;
                        out.push(Branch { stencil: mesh.stencil(&x1), d_eta });
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let (lo, hi) = clamp_range(spec, &mesh, &points, layers, delta);
    let times: Vec<f64> = (0..=layers).map(|l| horizon * l as f64 / layers as f64).collect();
    let m = mesh.len();
    let mut values = vec![0.0; (layers + 1) * m];
    for (slot, node) in values[layers * m..].iter_mut().zip(mesh.nodes()) {
        *slot = spec.terminal(&node.x);
    }
    for l in (0..layers).rev() {
        let t = times[l];
        let (head, tail) = values.split_at_mut((l + 1) * m);
        let next = &tail[..m];
        head[l * m..].par_iter_mut().enumerate().for_each(|(i, out)| {
            let x = &mesh.node(i).x;
            let mut table = Vec::with_capacity(pairs);
            let mut w = vec![0.0; points.len()];
            let mut z = vec![0.0; d];
            for iu in 0..nu {
                let u = spec.controls_u.point(iu);
                for iv in 0..nv {
                    let v = spec.controls_v.point(iv);
                    let br = &branches[i][(iu * nv + iv) * points.len()..(iu * nv + iv + 1) * points.len()];
                    for (j, b) in br.iter().enumerate() {
                        w[j] = b.stencil.iter().map(|(k, c)| c * next[*k]).sum();
                    }
                    // Centred on the first branch so equal branches reproduce it exactly.
                    let base = w[0];
                    let mut y_hat = base;
                    let mut eta = 0.0;
                    z.iter_mut().for_each(|c| *c = 0.0);
                    for (j, ((weight, db), b)) in points.iter().zip(br).enumerate() {
                        y_hat += weight * (w[j] - base);
                        eta += weight * b.d_eta;
                        for (zc, dbc) in z.iter_mut().zip(db) {
                            *zc += weight * (w[j] - base) * dbc;
                        }
                    }
                    z.iter_mut().for_each(|c| *c /= delta);
                    let value = y_hat + spec.g(t, x, y_hat, &z, u, v) * delta + spec.f(t, x, y_hat, u, v) * eta;
                    table.push(value);
                }
            }
            *out = minimax(&table, nu, nv, kind).value.clamp(lo, hi);
        });
    }
    ValueGrid::from_layers(kind, mesh, times, values)
}

/// Terminal range widened by `T·|g|∞` and by `|f|∞` times the largest
/// local time the recursion can accumulate.
fn clamp_range(spec: &ProblemSpec, mesh: &Mesh, points: &[(f64, Vec<f64>)], layers: usize, delta: f64) -> (f64, f64) {
    let n = spec.n();
    let terminal: Vec<f64> = mesh.nodes().iter().map(|nd| spec.terminal(&nd.x)).collect();
    let lo = terminal.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = terminal.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let zero = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut sigma = vec![0.0; n * n];
    let (mut g_max, mut f_max, mut push): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let max_db = points.iter().flat_map(|(_, db)| db.iter()).fold(0.0f64, |a, v| a.max(v.abs()));
    for node in mesh.nodes() {
        for u in spec.controls_u.points() {
            for v in spec.controls_v.points() {
                for t in [0.0, spec.horizon] {
                    for y in [lo, hi] {
                        g_max = g_max.max(spec.g(t, &node.x, y, &zero, u, v).abs());
                        f_max = f_max.max(spec.f(t, &node.x, y, u, v).abs());
                    }
                }
                spec.b_into(0.0, &node.x, u, v, &mut b);
                spec.sigma_into(0.0, &node.x, u, v, &mut sigma);
                let step: f64 = (0..n)
                    .map(|i| b[i].abs() * delta + (0..n).map(|j| sigma[i * n + j].abs()).sum::<f64>() * max_db)
                    .sum();
                push = push.max(step);
            }
        }
    }
    let margin = spec.horizon * g_max + f_max * push * layers as f64;
    (lo - margin, hi + margin)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DppMode {
    Weak,
    Strong,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DppCheckConfig {
    pub mode: DppMode,
    /// Monte Carlo paths per control pair and probe.
    pub paths: usize,
    pub probes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DppProbe {
    pub t: f64,
    pub x: Vec<f64>,
    pub lhs: f64,
    pub rhs: Estimate,
    pub residual: f64,
    pub u_star: usize,
    pub v_star: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DppReport {
    pub mode: DppMode,
    pub probes: Vec<DppProbe>,
    pub mean_residual: f64,
    pub max_residual: f64,
    pub mean_stderr: f64,
    pub budget: f64,
    pub passed: bool,
}

impl DppReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.probes.first().map_or(0, |p| p.x.len());
        let xs: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        writeln!(w, "t,{},lhs,rhs,stderr,residual,u_star,v_star", xs.join(","))?;
        for p in &self.probes {
            let x: Vec<String> = p.x.iter().map(|c| format!("{c:e}")).collect();
            writeln!(
                w,
                "{:e},{},{:e},{:e},{:e},{:e},{},{}",
                p.t,
                x.join(","),
                p.lhs,
                p.rhs.value,
                p.rhs.stderr,
                p.residual,
                p.u_star,
                p.v_star
            )?;
        }
        Ok(())
    }
}

fn probe_seed(seed: u64, probe: usize) -> u64 {
    seed ^ (probe as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Right side of the DPP at `(t_l, x)`: `max_u min_v G_{t,τ}[W(τ, X_τ)]`
/// with constant controls on `[t, τ]`, each pair on the same draws.
/// `cap` is the largest number of `δ`-steps `τ` may take; `cap = 0` gives
/// `τ = t`.
#[allow(clippy::too_many_arguments)]
pub fn dpp_rhs(
    spec: &ProblemSpec,
    kind: Kind,
    w: &ValueGrid,
    layer: usize,
    x: &[f64],
    rule: TauRule,
    paths: usize,
    seed: u64,
) -> Result<(Estimate, HamiltonianEval)> {
    let t = w.times()[layer];
    let cap = match rule {
        TauRule::Fixed => 1,
        TauRule::BoundaryHitCapped { cap } => cap.min(w.layers() - layer),
    };
    if layer + cap > w.layers() {
        return Err(Error::invalid("the DPP interval runs past the horizon"));
    }
    let (nu, nv) = (spec.controls_u.len(), spec.controls_v.len());
    if cap == 0 {
        let value = w.value_at(t, x);
        let eval = HamiltonianEval { value, u_star: 0, v_star: 0 };
        return Ok((Estimate { value, stderr: 0.0 }, eval));
    }
    let t_end = w.times()[layer + cap];
    let cfg = EnsembleConfig::new(paths, cap, seed);
    let opts = SolveOptions::default().without_history();
    let mut table = Vec::with_capacity(nu * nv);
    let mut errors = Vec::with_capacity(nu * nv);
    for iu in 0..nu {
        for iv in 0..nv {
            let (up, vp) = (FixedControl(iu), FixedControl(iv));
            let ens = rsde::simulate_until(spec, &up, &vp, t, t_end, x, &cfg)?;
            let stop: Vec<usize> = (0..paths)
                .map(|p| match rule {
                    TauRule::Fixed => cap,
                    TauRule::BoundaryHitCapped { .. } => (1..=cap)
                        .find(|&k| spec.domain.phi(ens.state(p, k)) <= spec.domain.boundary_tol)
                        .unwrap_or(cap),
                })
                .collect();
            let terminal: Vec<f64> =
                (0..paths).map(|p| w.value_at(w.times()[layer + stop[p]], ens.state(p, stop[p]))).collect();
            let gens = SpecGenerators { spec, times: ens.times(), u_policy: &up, v_policy: &vp };
            let stop_arg = matches!(rule, TauRule::BoundaryHitCapped { .. }).then_some(stop.as_slice());
            let sol = gbsde::solve_paths(&ens, &gens, &terminal, stop_arg, &opts)?;
            table.push(sol.value);
            errors.push(sol.stderr);
        }
    }
    let eval = minimax(&table, nu, nv, kind);
    let stderr = errors[eval.u_star * nv + eval.v_star];
    Ok((Estimate { value: eval.value, stderr }, eval))
}

/// Compares `W(t,x)` with [`dpp_rhs`] at `probes` random `(layer, node)`
/// pairs. Weak mode uses `τ = t + δ`; strong mode uses `cfg.tau_rule`.
/// Passes when the mean residual is at most three mean standard errors
/// plus [`BIAS_BUDGET`].
pub fn dpp_check(
    spec: &ProblemSpec,
    kind: Kind,
    w: &ValueGrid,
    cfg: &DppConfig,
    check: &DppCheckConfig,
) -> Result<DppReport> {
    cfg.validate()?;
    let step = w.times()[1] - w.times()[0];
    if (step - cfg.delta).abs() > 1e-9 {
        return Err(Error::MeshMismatch(format!("grid time step {step} differs from dpp step {}", cfg.delta)));
    }
    if check.paths == 0 || check.probes == 0 {
        return Err(Error::invalid("dpp_check needs at least one path and one probe"));
    }
    let rule = match check.mode {
        DppMode::Weak => TauRule::Fixed,
        DppMode::Strong => cfg.tau_rule,
    };
    let reach = match rule {
        TauRule::Fixed => 1,
        TauRule::BoundaryHitCapped { cap } => cap,
    };
    let last = w.layers().saturating_sub(reach.max(1));
    let mut rng = UniformStream::new(check.seed, 0xD99);
    let picks: Vec<(usize, usize)> =
        (0..check.probes).map(|_| (rng.index(last + 1), rng.index(w.mesh().len()))).collect();
    let probes = picks
        .par_iter()
        .enumerate()
        .map(|(k, &(layer, node))| {
            let x = w.mesh().node(node).x.clone();
            let lhs = w.layer(layer)[node];
            let (rhs, eval) = dpp_rhs(spec, kind, w, layer, &x, rule, check.paths, probe_seed(check.seed, k))?;
            Ok(DppProbe {
                t: w.times()[layer],
                x,
                lhs,
                rhs,
                residual: (lhs - rhs.value).abs(),
                u_star: eval.u_star,
                v_star: eval.v_star,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let count = probes.len() as f64;
    let mean_residual = probes.iter().map(|p| p.residual).sum::<f64>() / count;
    let max_residual = probes.iter().map(|p| p.residual).fold(0.0, f64::max);
    let mean_stderr = probes.iter().map(|p| p.rhs.stderr).sum::<f64>() / count;
    let budget = 3.0 * mean_stderr + BIAS_BUDGET;
    Ok(DppReport {
        mode: check.mode,
        probes,
        mean_residual,
        max_residual,
        mean_stderr,
        budget,
        passed: mean_residual <= budget,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityRow {
    /// Space axis, or `None` for the time direction.
    pub axis: Option<usize>,
    pub separation: f64,
    pub max_difference: f64,
    pub modulus: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub c_x: f64,
    pub c_t: f64,
    pub rows: Vec<RegularityRow>,
    pub passed: bool,
}

impl RegularityReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "direction,separation,max_difference,modulus,constant,slack")?;
        for r in &self.rows {
            let (dir, c) = match r.axis {
                Some(k) => (format!("x{k}"), self.c_x),
                None => ("t".to_string(), self.c_t),
            };
            writeln!(w, "{dir},{:e},{:e},{:e},{:e},{:e}", r.separation, r.max_difference, r.modulus, c, r.slack)?;
        }
        Ok(())
    }
}

pub fn x_modulus(r: f64) -> f64 {
    r + r.sqrt()
}

pub fn t_modulus(s: f64) -> f64 {
    s.sqrt() + s.powf(0.25)
}

/// Dyadic moduli of continuity of `W` in `x` (per axis, `|x − x'| = 2^j hₖ`)
/// and in `t` (`|t − t'| = 2^j Δt`). The check passes when
/// `C·modulus − max_difference ≥ 0` at every separation.
pub fn regularity_check(w: &ValueGrid) -> Result<RegularityReport> {
    let mesh = w.mesh();
    let n = mesh.dim();
    let info = mesh.info();
    let layers = w.layers();
    let mut x_rows = Vec::new();
    for k in 0..n {
        let span = info.counts[k] - 1;
        let mut j = 0;
        while (1usize << j) * 2 <= span {
            let offset = 1usize << j;
            let mut worst: f64 = 0.0;
            for (i, node) in mesh.nodes().iter().enumerate() {
                let mut cur = Some(i);
                for _ in 0..offset {
                    cur = cur.and_then(|c| mesh.node(c).neighbors[2 * k + 1]);
                }
                let Some(other) = cur else { continue };
                debug_assert!(node.x[k] < mesh.node(other).x[k]);
                for l in 0..=layers {
                    let row = w.layer(l);
                    worst = worst.max((row[i] - row[other]).abs());
                }
            }
            let r = offset as f64 * mesh.h()[k];
            x_rows.push(RegularityRow { axis: Some(k), separation: r, max_difference: worst, modulus: x_modulus(r), slack: 0.0 });
            j += 1;
        }
    }
    let mut t_rows = Vec::new();
    let mut j = 0;
    while (1usize << j) * 2 <= layers {
        let offset = 1usize << j;
        let mut worst: f64 = 0.0;
        for l in 0..=layers - offset {
            for (a, b) in w.layer(l).iter().zip(w.layer(l + offset)) {
                worst = worst.max((a - b).abs());
            }
        }
        let s = w.times()[offset] - w.times()[0];
        t_rows.push(RegularityRow { axis: None, separation: s, max_difference: worst, modulus: t_modulus(s), slack: 0.0 });
        j += 1;
    }
    let per_axis_min = (0..n).map(|k| x_rows.iter().filter(|r| r.axis == Some(k)).count()).min().unwrap_or(0);
    if per_axis_min < MIN_DYADIC_SEPARATIONS || t_rows.len() < MIN_DYADIC_SEPARATIONS {
        return Err(Error::invalid(format!(
            "regularity needs {MIN_DYADIC_SEPARATIONS} dyadic separations per direction; mesh gives {per_axis_min} in x, {} in t",
            t_rows.len()
        )));
    }
    // C is the smallest constant dominating the coarser half of the
    // separations; the finer half must then be dominated as well.
    let fit = |rows: &[RegularityRow]| -> f64 {
        let mut c: f64 = 0.0;
        for k in 0..n.max(1) {
            let dir: Vec<&RegularityRow> =
                rows.iter().filter(|r| r.axis.is_none() || r.axis == Some(k)).collect();
            for r in &dir[dir.len() / 2..] {
                if r.modulus > 0.0 {
                    let mut ratio = r.max_difference / r.modulus;
                    while ratio * r.modulus < r.max_difference {
                        ratio *= 1.0 + f64::EPSILON;
                    }
                    c = c.max(ratio);
                }
            }
        }
        c
    };
    let c_x = fit(&x_rows);
    let c_t = fit(&t_rows);
    for r in x_rows.iter_mut() {
        r.slack = c_x * r.modulus - r.max_difference;
    }
    for r in t_rows.iter_mut() {
        r.slack = c_t * r.modulus - r.max_difference;
    }
    let mut rows = x_rows;
    rows.extend(t_rows);
    let passed = rows.iter().all(|r| r.slack >= 0.0);
    Ok(RegularityReport { c_x, c_t, rows, passed })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossConfig {
    pub kind: Kind,
    pub pde: SchemeParams,
    pub dpp: DppConfig,
    pub mc: EnsembleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub pde: f64,
    pub dpp: f64,
    pub mc: Estimate,
    pub pde_dpp: f64,
    pub pde_mc: f64,
    pub dpp_mc: f64,
}

impl CrossRow {
    pub fn max_pairwise(&self) -> f64 {
        self.pde_dpp.max(self.pde_mc).max(self.dpp_mc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossTable {
    pub fixture: String,
    pub kind: Kind,
    pub rows: Vec<CrossRow>,
}

impl CrossTable {
    pub fn max_pairwise(&self) -> f64 {
        self.rows.iter().map(CrossRow::max_pairwise).fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.rows.first().map_or(0, |r| r.x.len());
        let xs: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        writeln!(w, "fixture,kind,t,{},pde,dpp,mc,mc_stderr,pde_dpp,pde_mc,dpp_mc", xs.join(","))?;
        for r in &self.rows {
            let x: Vec<String> = r.x.iter().map(|c| format!("{c:e}")).collect();
            writeln!(
                w,
                "{},{},{:e},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                self.fixture,
                self.kind.name(),
                r.t,
                x.join(","),
                r.pde,
                r.dpp,
                r.mc.value,
                r.mc.stderr,
                r.pde_dpp,
                r.pde_mc,
                r.dpp_mc
            )?;
        }
        Ok(())
    }
}

/// Hamiltonian optimizers of a solved grid, with `∇W` and `D²W` from
/// central differences of the interpolant at spacing `h`.
pub struct GridFeedback<'a> {
    pub spec: &'a ProblemSpec,
    pub grid: &'a ValueGrid,
    pub kind: Kind,
}

impl GridFeedback<'_> {
    pub fn eval(&self, t: f64, x: &[f64]) -> HamiltonianEval {
        let n = x.len();
        let h = self.grid.mesh().max_h();
        let w = |y: &[f64]| self.grid.value_at(t, y);
        let w0 = w(x);
        let mut p = vec![0.0; n];
        let mut a = vec![0.0; n * n];
        let mut y = x.to_vec();
        for i in 0..n {
            y[i] = x[i] + h;
            let up = w(&y);
            y[i] = x[i] - h;
            let down = w(&y);
            y[i] = x[i];
            p[i] = (up - down) / (2.0 * h);
            a[i * n + i] = (up - 2.0 * w0 + down) / (h * h);
            for j in 0..i {
                let mut corner = |si: f64, sj: f64| {
                    y[i] = x[i] + si * h;
                    y[j] = x[j] + sj * h;
                    let v = w(&y);
                    y[i] = x[i];
                    y[j] = x[j];
                    v
                };
                let mixed = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0)) / (4.0 * h * h);
                a[i * n + j] = mixed;
                a[j * n + i] = mixed;
            }
        }
        hamiltonian(self.spec, t, x, w0, &p, &a, self.kind)
    }
}

struct UPlayer<'a, 'b>(&'a GridFeedback<'b>);
struct VPlayer<'a, 'b>(&'a GridFeedback<'b>);

impl Policy for UPlayer<'_, '_> {
    fn control(&self, t: f64, x: &[f64]) -> usize {
        self.0.eval(t, x).u_star
    }
}

impl Policy for VPlayer<'_, '_> {
    fn control(&self, t: f64, x: &[f64]) -> usize {
        self.0.eval(t, x).v_star
    }
}

/// PDE value, DPP value and a Monte Carlo semigroup evaluation of the cost
/// under the PDE's feedback optimizers, at each probe `(t, x)`.
pub fn cross_validate(
    spec: &ProblemSpec,
    fixture: &str,
    probes: &[(f64, Vec<f64>)],
    cfg: &CrossConfig,
) -> Result<CrossTable> {
    let pde = isaacs::solve(spec, cfg.kind, &cfg.pde)?;
    let dpp = dpp_value(spec, cfg.kind, pde.mesh().clone(), &cfg.dpp)?;
    let feedback = GridFeedback { spec, grid: &pde, kind: cfg.kind };
    let singleton = spec.controls_u.len() == 1 && spec.controls_v.len() == 1;
    let opts = SolveOptions::default().without_history();
    let terminal = |x: &[f64]| spec.terminal(x);
    let mut rows = Vec::with_capacity(probes.len());
    for (t, x) in probes {
        let (pv, dv) = (pde.value_at(*t, x), dpp.value_at(*t, x));
        let mc = if *t >= spec.horizon {
            Estimate { value: spec.terminal(x), stderr: 0.0 }
        } else if singleton {
            gbsde::semigroup_g(spec, *t, x, &FixedControl(0), &FixedControl(0), spec.horizon, &terminal, &cfg.mc, &opts)?
        } else {
            let (up, vp) = (UPlayer(&feedback), VPlayer(&feedback));
            gbsde::semigroup_g(spec, *t, x, &up, &vp, spec.horizon, &terminal, &cfg.mc, &opts)?
        };
        rows.push(CrossRow {
            t: *t,
            x: x.clone(),
            pde: pv,
            dpp: dv,
            mc,
            pde_dpp: (pv - dv).abs(),
            pde_mc: (pv - mc.value).abs(),
            dpp_mc: (dv - mc.value).abs(),
        });
    }
    Ok(CrossTable { fixture: fixture.to_string(), kind: cfg.kind, rows })
}
