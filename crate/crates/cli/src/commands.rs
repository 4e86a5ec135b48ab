use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;

use sdgame::dynamics::validate_assumptions;
use sdgame::game::{self, CrossConfig, DppCheckConfig, DppConfig};
use sdgame::gbsde::{self, SolveOptions};
use sdgame::isaacs::{self, Mesh, SchemeParams};
use sdgame::rsde::{self, EnsembleConfig};
use sdgame::timechange::{self, RepresentationPoint, TimeChange};
use sdgame::{FixedControl, ProblemSpec, ValidationReport, Violation};

use crate::config::{APath, ExperimentConfig};
use crate::{CliError, Command};

/// What a subcommand produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub artifacts: Vec<String>,
    pub metrics: BTreeMap<String, f64>,
}

struct Artifacts<'a> {
    dir: &'a Path,
    outcome: Outcome,
}

impl<'a> Artifacts<'a> {
    fn open(dir: &'a Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Artifacts { dir, outcome: Outcome { passed: true, ..Default::default() } })
    }

    fn csv(&mut self, name: &str, write: impl FnOnce(BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
        write(BufWriter::new(File::create(self.dir.join(name))?))?;
        self.outcome.artifacts.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        std::fs::write(self.dir.join(name), serde_json::to_string_pretty(value)? + "\n")?;
        self.outcome.artifacts.push(name.to_string());
        Ok(())
    }

    fn metric(&mut self, name: &str, value: f64) {
        self.outcome.metrics.insert(name.to_string(), value);
    }

    fn check(&mut self, passed: bool) {
        self.outcome.passed &= passed;
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn start_point(spec: &ProblemSpec, x0: &Option<Vec<f64>>) -> Result<Vec<f64>, CliError> {
    let x0 = x0.clone().unwrap_or_else(|| vec![0.0; spec.n()]);
    if x0.len() != spec.n() {
        return Err(config_err(format!("x0 has {} coordinates, the domain has {}", x0.len(), spec.n())));
    }
    Ok(x0)
}

fn controls(spec: &ProblemSpec, u: usize, v: usize) -> Result<(FixedControl, FixedControl), CliError> {
    if u >= spec.controls_u.len() || v >= spec.controls_v.len() {
        return Err(config_err(format!(
            "control indices ({u}, {v}) outside the grids of sizes ({}, {})",
            spec.controls_u.len(),
            spec.controls_v.len()
        )));
    }
    Ok((FixedControl(u), FixedControl(v)))
}

/// Closed-form values of the catalog fixtures that have one.
pub fn exact_value(fixture: &str) -> Option<fn(f64, &[f64]) -> f64> {
    match fixture {
        "eigenfixture" => Some(|t, x| sdgame::fixtures::eigen_solution(t, x[0])),
        "trivial" => Some(|t, x| 0.5 + 0.25 * x[0] * x[0] + (1.0 - t)),
        "drift-reflection" => Some(|t, x| (x[0] - t).max(0.0)),
        _ => None,
    }
}

pub fn dispatch(command: &Command, cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let spec = cfg.problem()?;
    match command {
        Command::Validate => validate(&spec, cfg, out),
        Command::Simulate => simulate(&spec, cfg, out),
        Command::SolveGbsde => solve_gbsde(&spec, cfg, out),
        Command::Timechange => time_change(&spec, cfg, out),
        Command::SolvePde => solve_pde(&spec, cfg, out),
        Command::Dpp => dpp(&spec, cfg, out),
        Command::CrossValidate => cross_validate(&spec, cfg, out),
        Command::Report { .. } => unreachable!("report does not take a config"),
    }
}

fn validate(spec: &ProblemSpec, cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let samples = cfg.validate.samples;
    if samples < 2 {
        return Err(config_err("validate.samples must be at least 2"));
    }
    let domain = spec.domain.validate(samples, cfg.seed);
    let assumptions = validate_assumptions(spec, samples, cfg.seed)?;
    let violations: Vec<&Violation> = domain.violations.iter().chain(&assumptions.violations).collect();
    let mut art = Artifacts::open(out)?;
    let reports: [&ValidationReport; 2] = [&domain, &assumptions];
    art.json("validation.json", &reports)?;
    art.json("violations.json", &violations)?;
    art.metric("violations", violations.len() as f64);
    art.check(violations.is_empty());
    Ok(art.outcome)
}

#[derive(Serialize)]
struct EnsembleSummary {
    paths: usize,
    steps: usize,
    mean_terminal_state: Vec<f64>,
    mean_terminal_local_time: f64,
    max_terminal_local_time: f64,
    min_phi: f64,
}

fn simulate(spec: &ProblemSpec, cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let p = &cfg.simulate;
    let x0 = start_point(spec, &p.x0)?;
    let (u, v) = controls(spec, p.u, p.v)?;
    let ens_cfg = EnsembleConfig { paths: p.paths, steps: p.steps, seed: cfg.seed, antithetic: p.antithetic };
    let ensemble = rsde::simulate(spec, &u, &v, p.t0, &x0, &ens_cfg)?;
    let m = ensemble.steps();
    let count = ensemble.paths();
    let mut mean = vec![0.0; spec.n()];
    let (mut eta_sum, mut eta_max, mut min_phi) = (0.0, 0.0f64, f64::INFINITY);
    for path in 0..count {
        for (acc, x) in mean.iter_mut().zip(ensemble.state(path, m)) {
            *acc += x / count as f64;
        }
        eta_sum += ensemble.eta(path, m);
        eta_max = eta_max.max(ensemble.eta(path, m));
        for k in 0..=m {
            min_phi = min_phi.min(spec.domain.phi(ensemble.state(path, k)));
        }
    }
    let summary = EnsembleSummary {
        paths: count,
        steps: m,
        mean_terminal_state: mean,
        mean_terminal_local_time: eta_sum / count as f64,
        max_terminal_local_time: eta_max,
        min_phi,
    };
    let mut art = Artifacts::open(out)?;
    if p.dump_paths {
        art.csv("paths.csv", |w| ensemble.write_csv(w))?;
    }
    art.json("ensemble.json", &summary)?;
    art.metric("mean_terminal_local_time", summary.mean_terminal_local_time);
    art.check(min_phi >= -spec.domain.boundary_tol);
    Ok(art.outcome)
}

fn solve_gbsde(spec: &ProblemSpec, cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let p = &cfg.gbsde;
    let x0 = start_point(spec, &p.x0)?;
    let (u, v) = controls(spec, p.u, p.v)?;
    p.regression.validate().map_err(|e| config_err(e.to_string()))?;
    if matches!(p.comparison_shift, Some(s) if s < 0.0) {
        return Err(config_err("gbsde.comparison_shift must be nonnegative"));
    }
    let ens_cfg = EnsembleConfig::new(p.paths, p.steps, cfg.seed);
    let opts = SolveOptions::new(p.regression);
    let ensemble = rsde::simulate(spec, &u, &v, p.t0, &x0, &ens_cfg)?;
    let solution = gbsde::solve_on_ensemble(&ensemble, spec, &u, &v, &|x| spec.terminal(x), &opts.without_history())?;

    let mut art = Artifacts::open(out)?;
    let summary = solution.summary();
    art.json("gbsde.json", &summary)?;
    art.metric("value", summary.value);
    art.metric("stderr", summary.stderr);
    if let Some(s) = p.flow_s {
        let flow = gbsde::flow_check(spec, p.t0, &x0, &u, &v, s, &ens_cfg, &opts)?;
        art.json("flow.json", &flow)?;
        art.metric("flow_residual", flow.residual);
        art.check(flow.passed);
    }
    if let Some(shift) = p.comparison_shift {
        let c = &spec.coeffs;
        let upper = spec.with_costs(c.g.clone(), c.f.clone(), c.terminal.shifted(shift));
        let report = gbsde::comparison_check(&ensemble, spec, &upper, &u, &v, &opts, p.comparison_tol)?;
        art.json("comparison.json", &report)?;
        art.metric("comparison_violations", report.violations as f64);
        art.check(report.passed());
    }
    Ok(art.outcome)
}

fn a_path(spec: &ProblemSpec, path: &APath, seed: u64) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    Ok(match path {
        APath::Piecewise { samples } => timechange::sample_path(&timechange::piecewise_a, 0.0, 2.0, *samples),
        APath::Linear { rate, horizon, samples } => {
            let rate = *rate;
            timechange::sample_path(&move |s| rate * s, 0.0, *horizon, *samples)
        }
        APath::LocalTime { x0, steps } => {
            let x0 = start_point(spec, &Some(x0.clone()))?;
            let e = rsde::simulate(spec, &FixedControl(0), &FixedControl(0), 0.0, &x0, &EnsembleConfig::new(1, *steps, seed))?;
            (e.times().to_vec(), (0..=*steps).map(|k| e.eta(0, k)).collect())
        }
        APath::Samples { s, a } => (s.clone(), a.clone()),
    })
}

#[derive(Serialize)]
struct Structure {
    density_identity_error: f64,
    round_trip_error: f64,
    clock_budget: Vec<(f64, f64)>,
    tolerance: f64,
}

fn time_change(spec: &ProblemSpec, cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let p = &cfg.timechange;
    let (s, a) = a_path(spec, &p.a_path, cfg.seed)?;
    let tc = TimeChange::build(&s, &a, p.r_grid).map_err(|e| config_err(e.to_string()))?;
    let span = tc.psi_end() - tc.t();
    if let Some(eps) = p.epsilons.iter().find(|&&e| !(e > 0.0 && e <= span)) {
        return Err(config_err(format!("epsilon {eps} outside (0, {span}]")));
    }
    let structure = Structure {
        density_identity_error: tc.density_identity_error(),
        round_trip_error: tc.round_trip_error(),
        clock_budget: p.epsilons.iter().map(|&e| (e, tc.clock_budget_error(e))).collect(),
        tolerance: p.tolerance,
    };
    let mut art = Artifacts::open(out)?;
    art.csv("timechange.csv", |w| tc.write_csv(w))?;
    art.json("structure.json", &structure)?;
    art.metric("round_trip_error", structure.round_trip_error);
    art.check(
        structure.density_identity_error == 0.0
            && structure.round_trip_error <= p.tolerance
            && structure.clock_budget.iter().all(|(_, err)| *err <= p.tolerance),
    );
    if let Some(r) = &p.representation {
        let point = RepresentationPoint { t: r.t, y: r.y, z: r.z.clone() };
        let ens_cfg = EnsembleConfig::new(r.paths, r.steps, cfg.seed).antithetic();
        let c = &spec.coeffs;
        let table =
            timechange::representation_limit(&c.g, &c.f, &s, &a, &point, &p.epsilons, &ens_cfg, &SolveOptions::default())?;
        art.csv("representation.csv", |w| table.write_csv(w))?;
        let relative = table.final_relative_error();
        art.metric("representation_relative_error", relative);
        art.check(table.errors_decreasing() && relative <= r.relative_tolerance);
    }
    Ok(art.outcome)
}

fn scheme_params(p: &crate::config::PdeParams) -> SchemeParams {
    let mut params = SchemeParams::new(p.h);
    params.layers = p.layers;
    params.substeps = p.substeps;
    params.c_cfl = p.c_cfl;
    params
}

fn solve_pde(spec: &ProblemSpec, cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let p = &cfg.pde;
    if !(p.h > 0.0 && p.c_cfl > 0.0 && p.c_cfl <= 1.0) {
        return Err(config_err("pde.h must be positive and pde.c_cfl in (0, 1]"));
    }
    let grid = isaacs::solve(spec, p.kind, &scheme_params(p))?;
    let mut art = Artifacts::open(out)?;
    art.csv("value.csv", |w| grid.write_csv(w))?;
    art.json("grid.json", &grid.header())?;
    art.metric("h", grid.mesh().max_h());
    art.metric("dt", grid.times()[1] - grid.times()[0]);
    if let Some(exact) = exact_value(&cfg.fixture_name()) {
        let m = grid.mesh().len();
        let error = grid
            .values()
            .iter()
            .enumerate()
            .map(|(k, w)| (w - exact(grid.times()[k / m], &grid.mesh().node(k % m).x)).abs())
            .fold(0.0, f64::max);
        art.metric("error", error);
    }
    if p.residuals {
        let residual = isaacs::viscosity_residual(&grid, spec)?;
        art.csv("residual.csv", |w| residual.write_csv(w))?;
        art.json("residual.json", &residual.summary())?;
    }
    Ok(art.outcome)
}

fn dpp(spec: &ProblemSpec, cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let p = &cfg.dpp;
    let mut dpp_cfg = DppConfig::new(p.delta, spec.d());
    if let Some(q) = p.quadrature {
        dpp_cfg.quadrature = q;
    }
    if let Some(rule) = p.tau_rule {
        dpp_cfg.tau_rule = rule;
    }
    dpp_cfg.validate().map_err(|e| config_err(e.to_string()))?;
    let mesh = Mesh::new(&spec.domain, p.h).map_err(|e| config_err(e.to_string()))?;
    let grid = game::dpp_value(spec, p.kind, mesh, &dpp_cfg)?;
    let mut art = Artifacts::open(out)?;
    art.csv("dpp_value.csv", |w| grid.write_csv(w))?;
    art.json("grid.json", &grid.header())?;
    if let Some(c) = &p.check {
        let check = DppCheckConfig { mode: c.mode, paths: c.paths, probes: c.probes, seed: cfg.seed };
        let report = game::dpp_check(spec, p.kind, &grid, &dpp_cfg, &check)?;
        art.csv("dpp_check.csv", |w| report.write_csv(w))?;
        art.metric("dpp_mean_residual", report.mean_residual);
        art.metric("dpp_budget", report.budget);
        art.check(report.passed);
    }
    if p.regularity {
        let report = game::regularity_check(&grid)?;
        art.csv("regularity.csv", |w| report.write_csv(w))?;
        art.metric("c_x", report.c_x);
        art.metric("c_t", report.c_t);
        art.check(report.passed);
    }
    Ok(art.outcome)
}

fn cross_validate(spec: &ProblemSpec, cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let p = &cfg.cross;
    if let Some(probe) = p.probes.iter().find(|q| q.x.len() != spec.n() || !(0.0..=spec.horizon).contains(&q.t)) {
        return Err(config_err(format!("probe {probe:?} does not fit the problem")));
    }
    let cross = CrossConfig {
        kind: p.kind,
        pde: SchemeParams::new(p.h),
        dpp: DppConfig::new(p.delta, spec.d()),
        mc: EnsembleConfig::new(p.paths, p.steps, cfg.seed),
    };
    let probes: Vec<(f64, Vec<f64>)> = p.probes.iter().map(|q| (q.t, q.x.clone())).collect();
    let table = game::cross_validate(spec, &cfg.fixture_name(), &probes, &cross)?;
    let mut art = Artifacts::open(out)?;
    art.csv("cross.csv", |w| table.write_csv(w))?;
    art.metric("max_pairwise", table.max_pairwise());
    art.check(table.max_pairwise() <= p.tolerance);
    Ok(art.outcome)
}
