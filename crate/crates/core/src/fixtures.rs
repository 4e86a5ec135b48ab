//! Named problem catalog.

use std::f64::consts::SQRT_2;

use crate::dynamics::{
    AssumptionConstants, CoefficientSet, ControlLabel, ControlSet, Diffusion, Drift, Generator, ProblemSpec,
    Terminal,
};
use crate::error::{Error, Result};
use crate::geometry::Domain;

pub const CATALOG: [&str; 5] = ["trivial", "eigenfixture", "uv-game", "separable-game", "drift-reflection"];

pub fn by_name(name: &str) -> Result<ProblemSpec> {
    Ok(match name {
        "trivial" => trivial(1.0),
        "eigenfixture" => eigenfixture(),
        "uv-game" => uv_game(),
        "separable-game" => separable_game(),
        "drift-reflection" => drift_reflection(),
        other => return Err(Error::invalid(format!("unknown fixture '{other}'"))),
    })
}

fn uncontrolled() -> (ControlSet, ControlSet) {
    (ControlSet::singleton(ControlLabel::U, vec![0.0]), ControlSet::singleton(ControlLabel::V, vec![0.0]))
}

fn coeffs(drift: Drift, diffusion: Diffusion, g: Generator, f: Generator, terminal: Terminal) -> CoefficientSet {
    CoefficientSet { drift, diffusion, g, f, terminal, constants: AssumptionConstants::default() }
}

fn cosine() -> Terminal {
    Terminal::Cosine { amplitude: 1.0, pi_multiple: 1.0, offset: 0.0 }
}

/// No motion, running cost `c`: every value is `Φ(x) + c(T − t)`.
pub fn trivial(c: f64) -> ProblemSpec {
    let (u, v) = uncontrolled();
    let terminal = Terminal::Quadratic { constant: 0.5, coefficient: 0.25 };
    let c = coeffs(Drift::Zero, Diffusion::Zero, Generator::constant(c), Generator::zero(), terminal);
    ProblemSpec::new(Domain::interval(), c, u, v, 1.0).expect("trivial fixture")
}

/// Interval, `σ = √2`, `Φ = cos(πx)`, `T = 1`; exact value
/// `e^{−π²(T−t)} cos(πx)`.
pub fn eigenfixture() -> ProblemSpec {
    let (u, v) = uncontrolled();
    let c = coeffs(Drift::Zero, Diffusion::Constant { scale: SQRT_2 }, Generator::zero(), Generator::zero(), cosine());
    ProblemSpec::new(Domain::interval(), c, u, v, 1.0).expect("eigenfixture")
}

/// Eigenfixture value `e^{−π²(T−t)} cos(πx)`.
pub fn eigen_solution(t: f64, x: f64) -> f64 {
    let pi = std::f64::consts::PI;
    (-pi * pi * (1.0 - t)).exp() * (pi * x).cos()
}

/// `g = u·v` on `U = V = {−1, 1}`; the Isaacs condition fails.
pub fn uv_game() -> ProblemSpec {
    let u = ControlSet::new(ControlLabel::U, vec![vec![-1.0], vec![1.0]]).expect("grid");
    let v = ControlSet::new(ControlLabel::V, vec![vec![-1.0], vec![1.0]]).expect("grid");
    let g = Generator { uv: 1.0, ..Default::default() };
    let c = coeffs(Drift::Zero, Diffusion::Constant { scale: SQRT_2 }, g, Generator::zero(), cosine());
    ProblemSpec::new(Domain::interval(), c, u, v, 1.0).expect("uv-game")
}

/// Unit disk, `g = u + v²` on `{−1, 0, 1}` grids, constant boundary cost;
/// the Isaacs condition holds.
pub fn separable_game() -> ProblemSpec {
    let u = ControlSet::uniform_grid(ControlLabel::U, 1, 3).expect("grid");
    let v = ControlSet::uniform_grid(ControlLabel::V, 1, 3).expect("grid");
    let g = Generator { u: 1.0, v_sq: 1.0, ..Default::default() };
    let c = coeffs(
        Drift::Zero,
        Diffusion::Constant { scale: 0.5 },
        g,
        Generator::constant(0.3),
        Terminal::Quadratic { constant: 0.0, coefficient: 0.5 },
    );
    ProblemSpec::new(Domain::ball(2, 1.0).expect("disk"), c, u, v, 0.5).expect("separable-game")
}

/// Interval, `b = 1`, `σ = 0`, `f = 1`: the value is the local time the
/// deterministic path accumulates against the right wall.
pub fn drift_reflection() -> ProblemSpec {
    let (u, v) = uncontrolled();
    let c = coeffs(
        Drift::Constant { value: vec![1.0] },
        Diffusion::Zero,
        Generator::zero(),
        Generator::constant(1.0),
        Terminal::Constant { value: 0.0 },
    );
    ProblemSpec::new(Domain::interval(), c, u, v, 1.0).expect("drift-reflection")
}

/// Reflected Brownian motion on `[−1, 1]` with `Φ = cos(πx)`, zero costs.
pub fn reflected_bm() -> ProblemSpec {
    let (u, v) = uncontrolled();
    let c = coeffs(Drift::Zero, Diffusion::Constant { scale: 1.0 }, Generator::zero(), Generator::zero(), cosine());
    ProblemSpec::new(Domain::interval(), c, u, v, 1.0).expect("reflected bm")
}

/// Reflected Brownian motion in a ball, zero costs, `Φ = |x|²`.
pub fn reflected_bm_ball(dimension: usize, radius: f64) -> ProblemSpec {
    let (u, v) = uncontrolled();
    let c = coeffs(
        Drift::Zero,
        Diffusion::Constant { scale: 1.0 },
        Generator::zero(),
        Generator::zero(),
        Terminal::Quadratic { constant: 0.0, coefficient: 1.0 },
    );
    ProblemSpec::new(Domain::ball(dimension, radius).expect("ball"), c, u, v, 1.0).expect("reflected bm ball")
}
