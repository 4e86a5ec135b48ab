//! Coefficients `(b, σ, g, f, Φ)`, finite control grids and the problem
//! bundle, plus a sampling auditor for the standing assumptions.
//!
//! Coefficients come from a closed catalog of parametric families so that
//! problems can be declared in configuration files. The Brownian dimension
//! `d` equals the state dimension `n` for every diffusion family.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{norm_sq, Domain};
use crate::report::ValidationReport;
use crate::rng::UniformStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControlLabel {
    U,
    V,
}

/// Finite grid standing in for a compact control space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSet {
    label: ControlLabel,
    points: Vec<Vec<f64>>,
}

impl ControlSet {
    /// Drops exact duplicates, keeping first occurrences in order.
    pub fn new(label: ControlLabel, points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid(format!("control set {label:?} is empty")));
        }
        let dim = points[0].len();
        let mut unique: Vec<Vec<f64>> = Vec::with_capacity(points.len());
        for p in points {
            if p.len() != dim {
                return Err(Error::Dimension(format!("control points of {label:?} have mixed lengths")));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("non-finite control point {p:?}")));
            }
            if !unique.contains(&p) {
                unique.push(p);
            }
        }
        Ok(ControlSet { label, points: unique })
    }

    /// Uniform tensor grid of `[-1, 1]^dim` with `per_axis` points per axis
    /// (`per_axis = 1` gives the single point `0`).
    pub fn uniform_grid(label: ControlLabel, dim: usize, per_axis: usize) -> Result<Self> {
        if dim == 0 || per_axis == 0 {
            return Err(Error::invalid("control grid needs dim >= 1 and per_axis >= 1"));
        }
        let axis: Vec<f64> = if per_axis == 1 {
            vec![0.0]
        } else {
            (0..per_axis)
                .map(|i| -1.0 + 2.0 * i as f64 / (per_axis - 1) as f64)
                .collect()
        };
        let mut points = vec![Vec::new()];
        for _ in 0..dim {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |a| {
                        let mut q = p.clone();
                        q.push(*a);
                        q
                    })
                })
                .collect();
        }
        ControlSet::new(label, points)
    }

    pub fn singleton(label: ControlLabel, point: Vec<f64>) -> Self {
        ControlSet { label, points: vec![point] }
    }

    pub fn label(&self) -> ControlLabel {
        self.label
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> &[f64] {
        &self.points[index]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
}

fn first(c: &[f64]) -> f64 {
    c.first().copied().unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Drift {
    Zero,
    Constant { value: Vec<f64> },
    /// `b(x) = offset + matrix·x`
    Linear { matrix: Vec<Vec<f64>>, offset: Vec<f64> },
    /// `bᵢ = u_gain·uᵢ + v_gain·vᵢ` (missing control components count as 0)
    Controlled { u_gain: f64, v_gain: f64 },
}

impl Drift {
    pub fn eval_into(&self, _t: f64, x: &[f64], u: &[f64], v: &[f64], out: &mut [f64]) {
        match self {
            Drift::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            Drift::Constant { value } => out.copy_from_slice(value),
            Drift::Linear { matrix, offset } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = offset[i] + matrix[i].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            Drift::Controlled { u_gain, v_gain } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = u_gain * u.get(i).copied().unwrap_or(0.0)
                        + v_gain * v.get(i).copied().unwrap_or(0.0);
                }
            }
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        let ok = match self {
            Drift::Zero | Drift::Controlled { .. } => true,
            Drift::Constant { value } => value.len() == n,
            Drift::Linear { matrix, offset } => {
                offset.len() == n && matrix.len() == n && matrix.iter().all(|r| r.len() == n)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(format!("drift does not match state dimension {n}")))
        }
    }
}

/// Diagonal diffusion families; `σ` is `n × n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Diffusion {
    Zero,
    Constant { scale: f64 },
    /// `σᵢᵢ = scale + slope·xᵢ`
    Affine { scale: f64, slope: f64 },
    /// `σᵢᵢ = clamp(xᵢ, lo, hi)`
    Clamped { lo: f64, hi: f64 },
    /// `σ = (base + u_gain·|u₀| + v_gain·|v₀|)·I`
    Controlled { base: f64, u_gain: f64, v_gain: f64 },
}

impl Diffusion {
    pub fn eval_into(&self, _t: f64, x: &[f64], u: &[f64], v: &[f64], out: &mut [f64]) {
        let n = x.len();
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..n {
            out[i * n + i] = match self {
                Diffusion::Zero => 0.0,
                Diffusion::Constant { scale } => *scale,
                Diffusion::Affine { scale, slope } => scale + slope * x[i],
                Diffusion::Clamped { lo, hi } => x[i].clamp(*lo, *hi),
                Diffusion::Controlled { base, u_gain, v_gain } => {
                    base + u_gain * first(u).abs() + v_gain * first(v).abs()
                }
            };
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Diffusion::Zero | Diffusion::Constant { scale: 0.0 })
    }
}

/// Affine-in-`y` generator family (plus a quadratic `y²` term used to
/// exhibit monotonicity failures):
///
/// `constant + y·Y + y_sq·Y² + ⟨z, Z⟩ + uv·u₀v₀ + u·u₀ + u_sq·u₀² + v·v₀ + v_sq·v₀² + x·Σxᵢ + t·T`
///
/// The boundary generator `f` uses the same family with `z` left empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Generator {
    pub constant: f64,
    pub y: f64,
    pub y_sq: f64,
    pub z: Vec<f64>,
    pub uv: f64,
    pub u: f64,
    pub u_sq: f64,
    pub v: f64,
    pub v_sq: f64,
    pub x: f64,
    pub t: f64,
}

impl Generator {
    pub fn zero() -> Self {
        Generator::default()
    }

    pub fn constant(c: f64) -> Self {
        Generator { constant: c, ..Default::default() }
    }

    pub fn eval(&self, t: f64, x: &[f64], y: f64, z: &[f64], u: &[f64], v: &[f64]) -> f64 {
        let (u0, v0) = (first(u), first(v));
        let mut value = self.constant
            + self.y * y
            + self.y_sq * y * y
            + self.uv * u0 * v0
            + self.u * u0
            + self.u_sq * u0 * u0
            + self.v * v0
            + self.v_sq * v0 * v0
            + self.t * t;
        if self.x != 0.0 {
            value += self.x * x.iter().sum::<f64>();
        }
        for (c, zi) in self.z.iter().zip(z) {
            value += c * zi;
        }
        value
    }

    /// `∂g/∂z`, constant for this family.
    pub fn z_gradient(&self) -> &[f64] {
        &self.z
    }

    pub fn is_y_independent(&self) -> bool {
        self.y == 0.0 && self.y_sq == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Terminal {
    Constant { value: f64 },
    /// `offset + amplitude·Πᵢ cos(pi_multiple·π·xᵢ)`
    Cosine { amplitude: f64, pi_multiple: f64, offset: f64 },
    /// `constant + coefficient·|x|²`
    Quadratic { constant: f64, coefficient: f64 },
    /// `constant + ⟨gradient, x⟩`
    Linear { constant: f64, gradient: Vec<f64> },
}

impl Terminal {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Terminal::Constant { value } => *value,
            Terminal::Cosine { amplitude, pi_multiple, offset } => {
                let w = pi_multiple * std::f64::consts::PI;
                offset + amplitude * x.iter().map(|xi| (w * xi).cos()).product::<f64>()
            }
            Terminal::Quadratic { constant, coefficient } => constant + coefficient * norm_sq(x),
            Terminal::Linear { constant, gradient } => {
                constant + gradient.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            }
        }
    }

    /// Same function shifted by `delta`.
    pub fn shifted(&self, delta: f64) -> Terminal {
        match self.clone() {
            Terminal::Constant { value } => Terminal::Constant { value: value + delta },
            Terminal::Cosine { amplitude, pi_multiple, offset } => {
                Terminal::Cosine { amplitude, pi_multiple, offset: offset + delta }
            }
            Terminal::Quadratic { constant, coefficient } => {
                Terminal::Quadratic { constant: constant + delta, coefficient }
            }
            Terminal::Linear { constant, gradient } => Terminal::Linear { constant: constant + delta, gradient },
        }
    }
}

/// Claimed assumption constants; the auditor compares them with what it
/// measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssumptionConstants {
    /// Lipschitz / linear-growth constant `K`.
    pub k: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Uniform bound on `|b|` and `|σ|`.
    pub coefficient_bound: f64,
}

impl Default for AssumptionConstants {
    fn default() -> Self {
        AssumptionConstants { k: 10.0, lambda1: 0.0, lambda2: 0.0, coefficient_bound: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSet {
    pub drift: Drift,
    pub diffusion: Diffusion,
    pub g: Generator,
    pub f: Generator,
    pub terminal: Terminal,
    #[serde(default)]
    pub constants: AssumptionConstants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub domain: Domain,
    pub coeffs: CoefficientSet,
    pub controls_u: ControlSet,
    pub controls_v: ControlSet,
    pub horizon: f64,
}

impl ProblemSpec {
    pub fn new(
        domain: Domain,
        coeffs: CoefficientSet,
        controls_u: ControlSet,
        controls_v: ControlSet,
        horizon: f64,
    ) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        let n = domain.dim();
        coeffs.drift.check(n)?;
        if coeffs.g.z.len() > n {
            return Err(Error::Dimension(format!(
                "generator z-coefficients have length {}, Brownian dimension is {n}",
                coeffs.g.z.len()
            )));
        }
        if !coeffs.f.z.is_empty() {
            return Err(Error::invalid("boundary generator f takes no z argument"));
        }
        if let Terminal::Linear { gradient, .. } = &coeffs.terminal {
            if gradient.len() != n {
                return Err(Error::Dimension("terminal gradient length differs from n".into()));
            }
        }
        Ok(ProblemSpec { domain, coeffs, controls_u, controls_v, horizon })
    }

    pub fn n(&self) -> usize {
        self.domain.dim()
    }

    pub fn d(&self) -> usize {
        self.domain.dim()
    }

    pub fn b_into(&self, t: f64, x: &[f64], u: &[f64], v: &[f64], out: &mut [f64]) {
        self.coeffs.drift.eval_into(t, x, u, v, out)
    }

    pub fn sigma_into(&self, t: f64, x: &[f64], u: &[f64], v: &[f64], out: &mut [f64]) {
        self.coeffs.diffusion.eval_into(t, x, u, v, out)
    }

    pub fn g(&self, t: f64, x: &[f64], y: f64, z: &[f64], u: &[f64], v: &[f64]) -> f64 {
        self.coeffs.g.eval(t, x, y, z, u, v)
    }

    pub fn f(&self, t: f64, x: &[f64], y: f64, u: &[f64], v: &[f64]) -> f64 {
        self.coeffs.f.eval(t, x, y, &[], u, v)
    }

    pub fn terminal(&self, x: &[f64]) -> f64 {
        self.coeffs.terminal.eval(x)
    }

    /// Copy with `Φ`, `g`, `f` replaced; used for ordered-pair comparisons.
    pub fn with_costs(&self, g: Generator, f: Generator, terminal: Terminal) -> Self {
        let mut spec = self.clone();
        spec.coeffs.g = g;
        spec.coeffs.f = f;
        spec.coeffs.terminal = terminal;
        spec
    }
}

const Y_RANGE: f64 = 10.0;
const Z_RANGE: f64 = 10.0;

fn exceeds(measured: f64, claimed: f64) -> bool {
    !measured.is_finite() || measured > claimed + 1e-9 * claimed.abs() + 1e-12
}

struct Worst {
    value: f64,
    witness: Vec<f64>,
    count: usize,
}

/// Sampling audit of boundedness, Lipschitz, monotonicity and growth
/// assumptions. Sample `i` depends only on `(seed, i)`, so measured
/// constants can only grow with `sample_count`.
pub fn validate_assumptions(spec: &ProblemSpec, sample_count: usize, seed: u64) -> Result<ValidationReport> {
    if sample_count < 2 {
        return Err(Error::invalid("assumption audit needs at least 2 samples"));
    }
    let n = spec.n();
    let d = spec.d();
    let k = spec.coeffs.constants;
    let mut report = ValidationReport::new("coefficients", sample_count);
    report.notes.push(
        "f in C^{1,2,2} is not checked; catalog families are smooth by construction".to_string(),
    );
    report.notes.push(format!("y sampled in [-{Y_RANGE}, {Y_RANGE}], z in [-{Z_RANGE}, {Z_RANGE}]^d"));

    let bbox = spec.domain.bounding_box();
    let mut worst: Vec<(&str, f64, Worst)> = [
        ("finite", 0.0),
        ("bound_b", k.coefficient_bound),
        ("bound_sigma", k.coefficient_bound),
        ("lipschitz_x_b", k.k),
        ("lipschitz_x_sigma", k.k),
        ("lipschitz_x_g", k.k),
        ("lipschitz_x_f", k.k),
        ("lipschitz_x_phi", k.k),
        ("monotone_y_g", k.lambda1),
        ("monotone_y_f", k.lambda2),
        ("lipschitz_z_g", k.k),
        ("linear_growth", k.k),
    ]
    .into_iter()
    .map(|(name, claimed)| (name, claimed, Worst { value: f64::NEG_INFINITY, witness: vec![], count: 0 }))
    .collect();

    let mut b1 = vec![0.0; n];
    let mut b2 = vec![0.0; n];
    let mut s1 = vec![0.0; n * d];
    let mut s2 = vec![0.0; n * d];
    let zero_x = vec![0.0; n];
    let zero_z = vec![0.0; d];

    for i in 0..sample_count {
        let mut rng = UniformStream::new(seed, i as u64);
        let t = rng.range(0.0, spec.horizon);
        let draw_x = |rng: &mut UniformStream| -> Vec<f64> {
            for _ in 0..10_000 {
                let c: Vec<f64> = bbox.iter().map(|(lo, hi)| rng.range(*lo, *hi)).collect();
                if spec.domain.phi(&c) >= 0.0 {
                    return c;
                }
            }
            vec![0.0; n]
        };
        let x1 = draw_x(&mut rng);
        let x2 = draw_x(&mut rng);
        let y1 = rng.range(-Y_RANGE, Y_RANGE);
        let y2 = rng.range(-Y_RANGE, Y_RANGE);
        let z1: Vec<f64> = (0..d).map(|_| rng.range(-Z_RANGE, Z_RANGE)).collect();
        let z2: Vec<f64> = (0..d).map(|_| rng.range(-Z_RANGE, Z_RANGE)).collect();
        let u = spec.controls_u.point(rng.index(spec.controls_u.len())).to_vec();
        let v = spec.controls_v.point(rng.index(spec.controls_v.len())).to_vec();

        spec.b_into(t, &x1, &u, &v, &mut b1);
        spec.b_into(t, &x2, &u, &v, &mut b2);
        spec.sigma_into(t, &x1, &u, &v, &mut s1);
        spec.sigma_into(t, &x2, &u, &v, &mut s2);
        let g11 = spec.g(t, &x1, y1, &z1, &u, &v);
        let g21 = spec.g(t, &x2, y1, &z1, &u, &v);
        let g12 = spec.g(t, &x1, y2, &z1, &u, &v);
        let g1z = spec.g(t, &x1, y1, &z2, &u, &v);
        let f11 = spec.f(t, &x1, y1, &u, &v);
        let f21 = spec.f(t, &x2, y1, &u, &v);
        let f12 = spec.f(t, &x1, y2, &u, &v);
        let p1 = spec.terminal(&x1);
        let p2 = spec.terminal(&x2);
        let growth = (spec.g(t, &zero_x, y1, &zero_z, &u, &v).abs() + spec.f(t, &zero_x, y1, &u, &v).abs())
            / (1.0 + y1.abs());

        let dx = norm_sq(&x1.iter().zip(&x2).map(|(a, b)| a - b).collect::<Vec<_>>()).sqrt();
        let dy = y1 - y2;
        let dz = norm_sq(&z1.iter().zip(&z2).map(|(a, b)| a - b).collect::<Vec<_>>()).sqrt();
        let diff = |a: &[f64], b: &[f64]| norm_sq(&a.iter().zip(b).map(|(p, q)| p - q).collect::<Vec<_>>()).sqrt();

        let all_finite = b1.iter().chain(&s1).chain([g11, f11, p1].iter()).all(|v| v.is_finite());
        let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
        let measurements = [
            if all_finite { 0.0 } else { f64::INFINITY },
            norm_sq(&b1).sqrt(),
            norm_sq(&s1).sqrt(),
            ratio(diff(&b1, &b2), dx),
            ratio(diff(&s1, &s2), dx),
            ratio((g11 - g21).abs(), dx),
            ratio((f11 - f21).abs(), dx),
            ratio((p1 - p2).abs(), dx),
            ratio(dy * (g11 - g12), dy * dy),
            ratio(dy * (f11 - f12), dy * dy),
            ratio((g11 - g1z).abs(), dz),
            growth,
        ];
        let mut witness = vec![t];
        witness.extend(&x1);
        witness.extend(&x2);
        witness.extend([y1, y2]);
        witness.extend(&z1);
        witness.extend(&z2);
        witness.extend(&u);
        witness.extend(&v);
        for ((name, claimed, w), m) in worst.iter_mut().zip(measurements) {
            report.record(name, m);
            if exceeds(m, *claimed) {
                w.count += 1;
                if m > w.value || !m.is_finite() && w.value.is_finite() {
                    w.value = m;
                    w.witness = witness.clone();
                }
            }
        }
    }

    for (name, claimed, w) in worst {
        if w.count > 0 {
            report.violate(
                name,
                format!(
                    "measured {:.6e} exceeds claimed {:.6e} at {} of {} samples (witness: t, x1, x2, y1, y2, z1, z2, u, v)",
                    w.value, claimed, w.count, sample_count
                ),
                w.witness,
                w.value,
                claimed,
            );
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_with(g: Generator, diffusion: Diffusion, constants: AssumptionConstants) -> ProblemSpec {
        ProblemSpec::new(
            Domain::interval(),
            CoefficientSet {
                drift: Drift::Zero,
                diffusion,
                g,
                f: Generator::zero(),
                terminal: Terminal::Constant { value: 0.0 },
                constants,
            },
            ControlSet::singleton(ControlLabel::U, vec![0.0]),
            ControlSet::singleton(ControlLabel::V, vec![0.0]),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn control_sets_dedup_and_reject_empty() {
        let c = ControlSet::new(ControlLabel::U, vec![vec![1.0], vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(c.points(), &[vec![1.0], vec![0.0]]);
        assert!(ControlSet::new(ControlLabel::V, vec![]).is_err());
        let grid = ControlSet::uniform_grid(ControlLabel::U, 2, 3).unwrap();
        assert_eq!(grid.len(), 9);
        assert_eq!(grid.point(0), &[-1.0, -1.0]);
        assert_eq!(ControlSet::uniform_grid(ControlLabel::U, 1, 1).unwrap().points(), &[vec![0.0]]);
    }

    #[test]
    fn decreasing_linear_generator_passes_monotonicity() {
        let g = Generator { y: -1.0, ..Default::default() };
        let spec = spec_with(g, Diffusion::Zero, AssumptionConstants { lambda1: -1.0, ..Default::default() });
        let report = validate_assumptions(&spec, 500, 1).unwrap();
        assert!(report.passed(), "{:?}", report.violations);
        assert!((report.measured["monotone_y_g"] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn quadratic_generator_violates_monotonicity() {
        // quotient (y1-y2)(y1²-y2²)/|y1-y2|² = y1 + y2, up to 20 on [-10, 10]
        for lambda1 in [5.0, 10.0] {
            let g = Generator { y_sq: 1.0, ..Default::default() };
            let k = AssumptionConstants { lambda1, k: 1e6, ..Default::default() };
            let report = validate_assumptions(&spec_with(g, Diffusion::Zero, k), 2000, 2).unwrap();
            let v = report.violations.iter().find(|v| v.check == "monotone_y_g").unwrap();
            assert!(v.measured > lambda1);
            let (y1, y2) = (v.witness[3], v.witness[4]);
            assert!((y1 + y2 - v.measured).abs() < 1e-9);
        }
    }

    #[test]
    fn clamped_diffusion_is_one_lipschitz() {
        let spec = spec_with(
            Generator::zero(),
            Diffusion::Clamped { lo: -1.0, hi: 1.0 },
            AssumptionConstants { k: 1.0, ..Default::default() },
        );
        let report = validate_assumptions(&spec, 2000, 3).unwrap();
        assert!(report.passed(), "{:?}", report.violations);
    }

    #[test]
    fn measured_constants_grow_with_samples() {
        let g = Generator { y_sq: 1.0, ..Default::default() };
        let spec = spec_with(g, Diffusion::Constant { scale: 1.0 }, AssumptionConstants::default());
        let mut prev = f64::NEG_INFINITY;
        for count in [2, 10, 100, 1000] {
            let report = validate_assumptions(&spec, count, 4).unwrap();
            let m = report.measured["monotone_y_g"];
            assert!(m >= prev);
            prev = m;
        }
    }

    #[test]
    fn spec_rejects_bad_inputs() {
        let coeffs = CoefficientSet {
            drift: Drift::Constant { value: vec![1.0, 2.0] },
            diffusion: Diffusion::Zero,
            g: Generator::zero(),
            f: Generator::zero(),
            terminal: Terminal::Constant { value: 0.0 },
            constants: AssumptionConstants::default(),
        };
        let u = ControlSet::singleton(ControlLabel::U, vec![0.0]);
        let v = ControlSet::singleton(ControlLabel::V, vec![0.0]);
        assert!(ProblemSpec::new(Domain::interval(), coeffs.clone(), u.clone(), v.clone(), 1.0).is_err());
        let mut ok = coeffs;
        ok.drift = Drift::Zero;
        assert!(ProblemSpec::new(Domain::interval(), ok, u, v, 0.0).is_err());
    }
}
