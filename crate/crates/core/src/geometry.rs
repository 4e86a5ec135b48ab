//! The constraint set `O = {x : φ(x) > 0}`.
//!
//! `∇φ` is normalised to unit length on `∂O`, so it is the inward unit
//! normal there and the distance a tentative Euler state overshoots the
//! boundary is exactly the discrete local-time increment.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::ValidationReport;
use crate::rng::UniformStream;

pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-9;
const NEWTON_MAX_ITER: usize = 50;
const NEWTON_TOL: f64 = 1e-12;
const GRADIENT_TOL: f64 = 1e-8;
const INEQUALITY_TOL: f64 = 1e-10;

/// Level-set families. `Interval1d` is `φ(x) = (1 − x²)/2`, `Ball` is
/// `φ(x) = (R² − |x|²)/(2R)`; both have closed-form projections. `Quadric`
/// is `φ(x) = scale·(level − Σ wᵢxᵢ²)` and is projected by damped Newton.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Interval1d,
    Ball { dimension: usize, radius: f64 },
    Quadric { weights: Vec<f64>, level: f64, scale: f64 },
}

/// Sup bounds of `|φ|`, `|∇φ|` and the Frobenius norm of `D²φ` on `closure(O)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub phi: f64,
    pub grad: f64,
    pub hess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub name: String,
    pub shape: Shape,
    pub c0: f64,
    pub boundary_tol: f64,
    pub bounds: Bounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Interior,
    Boundary,
    ExteriorProjected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub point: Vec<f64>,
    pub overshoot: f64,
    pub region: Region,
}

impl Domain {
    pub fn interval() -> Self {
        Domain {
            name: "interval1d".into(),
            shape: Shape::Interval1d,
            c0: 1.0,
            boundary_tol: DEFAULT_BOUNDARY_TOL,
            bounds: Bounds { phi: 0.5, grad: 1.0, hess: 1.0 },
        }
    }

    pub fn ball(dimension: usize, radius: f64) -> Result<Self> {
        if dimension == 0 || !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(format!(
                "ball needs dimension >= 1 and a positive radius, got ({dimension}, {radius})"
            )));
        }
        Ok(Domain {
            name: "ball".into(),
            shape: Shape::Ball { dimension, radius },
            c0: 1.0,
            boundary_tol: DEFAULT_BOUNDARY_TOL,
            bounds: Bounds {
                phi: radius / 2.0,
                grad: 1.0,
                hess: (dimension as f64).sqrt() / radius,
            },
        })
    }

    /// User-supplied quadric. `c0` is taken on trust and only sample-checked
    /// by [`Domain::validate`].
    pub fn quadric(weights: Vec<f64>, level: f64, scale: f64, c0: f64) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::invalid("quadric weights must be positive and finite"));
        }
        if !(level > 0.0 && scale > 0.0 && c0 > 0.0) {
            return Err(Error::invalid("quadric level, scale and c0 must be positive"));
        }
        let wmax = weights.iter().cloned().fold(0.0, f64::max);
        let wsq: f64 = weights.iter().map(|w| w * w).sum();
        Ok(Domain {
            name: "quadric".into(),
            bounds: Bounds {
                phi: scale * level,
                grad: 2.0 * scale * (wmax * level).sqrt(),
                hess: 2.0 * scale * wsq.sqrt(),
            },
            shape: Shape::Quadric { weights, level, scale },
            c0,
            boundary_tol: DEFAULT_BOUNDARY_TOL,
        })
    }

    pub fn from_shape(shape: Shape, c0: Option<f64>) -> Result<Self> {
        let mut domain = match shape {
            Shape::Interval1d => Domain::interval(),
            Shape::Ball { dimension, radius } => Domain::ball(dimension, radius)?,
            Shape::Quadric { weights, level, scale } => {
                let c0 = c0.ok_or_else(|| Error::invalid("quadric domains need an explicit c0"))?;
                return Domain::quadric(weights, level, scale, c0);
            }
        };
        if let Some(c0) = c0 {
            domain.c0 = c0;
        }
        Ok(domain)
    }

    pub fn with_boundary_tol(mut self, tol: f64) -> Self {
        self.boundary_tol = tol;
        self
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            Shape::Interval1d => 1,
            Shape::Ball { dimension, .. } => *dimension,
            Shape::Quadric { weights, .. } => weights.len(),
        }
    }

    pub fn phi(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Interval1d => 0.5 * (1.0 - x[0] * x[0]),
            Shape::Ball { radius, .. } => (radius * radius - norm_sq(x)) / (2.0 * radius),
            Shape::Quadric { weights, level, scale } => {
                let q: f64 = weights.iter().zip(x).map(|(w, v)| w * v * v).sum();
                scale * (level - q)
            }
        }
    }

    pub fn grad_phi_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.shape {
            Shape::Interval1d => out[0] = -x[0],
            Shape::Ball { radius, .. } => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = -v / radius;
                }
            }
            Shape::Quadric { weights, scale, .. } => {
                for ((o, v), w) in out.iter_mut().zip(x).zip(weights) {
                    *o = -2.0 * scale * w * v;
                }
            }
        }
    }

    pub fn grad_phi(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.grad_phi_into(x, &mut g);
        g
    }

    /// Row-major `n × n` Hessian of `φ`.
    pub fn hess_phi(&self, _x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            h[i * n + i] = match &self.shape {
                Shape::Interval1d => -1.0,
                Shape::Ball { radius, .. } => -1.0 / radius,
                Shape::Quadric { weights, scale, .. } => -2.0 * scale * weights[i],
            };
        }
        h
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.phi(x) >= -self.boundary_tol
    }

    /// Axis-aligned box enclosing `closure(O)`.
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        match &self.shape {
            Shape::Interval1d => vec![(-1.0, 1.0)],
            Shape::Ball { dimension, radius } => vec![(-radius, *radius); *dimension],
            Shape::Quadric { weights, level, .. } => weights
                .iter()
                .map(|w| {
                    let r = (level / w).sqrt();
                    (-r, r)
                })
                .collect(),
        }
    }

    /// Point where the ray from the origin along `direction` crosses `∂O`.
    pub fn boundary_point(&self, direction: &[f64]) -> Vec<f64> {
        let len = norm_sq(direction).sqrt();
        let unit: Vec<f64> = if len > 0.0 {
            direction.iter().map(|d| d / len).collect()
        } else {
            let mut e = vec![0.0; self.dim()];
            e[0] = 1.0;
            e
        };
        let reach = match &self.shape {
            Shape::Interval1d => 1.0,
            Shape::Ball { radius, .. } => *radius,
            Shape::Quadric { weights, level, .. } => {
                let q: f64 = weights.iter().zip(&unit).map(|(w, v)| w * v * v).sum();
                (level / q).sqrt()
            }
        };
        unit.iter().map(|u| u * reach).collect()
    }

    /// Inward unit normal `∇φ` evaluated at the radial projection of `x`
    /// onto `∂O`.
    pub fn boundary_normal(&self, x: &[f64]) -> Vec<f64> {
        let b = self.boundary_point(x);
        let mut g = self.grad_phi(&b);
        let len = norm_sq(&g).sqrt();
        if len > 0.0 {
            g.iter_mut().for_each(|v| *v /= len);
        }
        g
    }

    /// Nearest point of `closure(O)`. Points already inside are returned
    /// unchanged with zero overshoot.
    pub fn project(&self, x: &[f64]) -> Result<ProjectionResult> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "point has {} coordinates, domain has dimension {}",
                x.len(),
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite point {x:?}")));
        }
        let phi = self.phi(x);
        if phi >= -self.boundary_tol {
            let region = if phi <= self.boundary_tol {
                Region::Boundary
            } else {
                Region::Interior
            };
            return Ok(ProjectionResult { point: x.to_vec(), overshoot: 0.0, region });
        }
        match &self.shape {
            Shape::Interval1d => {
                let p = x[0].clamp(-1.0, 1.0);
                Ok(ProjectionResult {
                    point: vec![p],
                    overshoot: (x[0] - p).abs(),
                    region: Region::ExteriorProjected,
                })
            }
            Shape::Ball { radius, .. } => {
                let len = norm_sq(x).sqrt();
                let point = x.iter().map(|v| v * radius / len).collect();
                Ok(ProjectionResult {
                    point,
                    overshoot: len - radius,
                    region: Region::ExteriorProjected,
                })
            }
            Shape::Quadric { .. } => project_newton(self, x),
        }
    }

    /// Samples boundary and closure points and checks the normalisation
    /// `|∇φ| = 1` on `∂O`, the `C0` domain inequality, `0 ∈ O` and the
    /// stored bounds.
    pub fn validate(&self, sample_count: usize, seed: u64) -> ValidationReport {
        let mut report = ValidationReport::new(format!("domain {}", self.name), sample_count);
        let n = self.dim();
        let origin = vec![0.0; n];
        let phi0 = self.phi(&origin);
        report.record("phi_at_origin", phi0);
        if phi0 <= 0.0 {
            report.violate("origin", "0 is not an interior point (phi(0) <= 0)", origin, phi0, 0.0);
        }

        let mut dirs = UniformStream::new(seed, 0);
        let mut inner = UniformStream::new(seed, 1);
        let bbox = self.bounding_box();
        let mut grad_worst: Option<(f64, Vec<f64>)> = None;
        let mut grad_count = 0usize;
        let mut ineq_worst: Option<(f64, Vec<f64>)> = None;
        let mut ineq_count = 0usize;
        let mut bound_fail: Vec<(String, f64, f64, Vec<f64>)> = Vec::new();
        let mut g = vec![0.0; n];

        for _ in 0..sample_count {
            let dir: Vec<f64> = (0..n).map(|_| dirs.normal()).collect();
            let xb = self.boundary_point(&dir);
            self.grad_phi_into(&xb, &mut g);
            let gnorm = norm_sq(&g).sqrt();
            let dev = (gnorm - 1.0).abs();
            report.record("max_grad_norm_deviation", dev);
            if dev > GRADIENT_TOL {
                grad_count += 1;
                if grad_worst.as_ref().is_none_or(|(d, _)| dev > *d) {
                    grad_worst = Some((dev, xb.clone()));
                }
            }

            // second point of the pair: interior by rejection, else boundary
            let mut xp = None;
            for _ in 0..1000 {
                let cand: Vec<f64> = bbox.iter().map(|(lo, hi)| inner.range(*lo, *hi)).collect();
                if self.phi(&cand) >= 0.0 {
                    xp = Some(cand);
                    break;
                }
            }
            let xp = xp.unwrap_or_else(|| self.boundary_point(&dir));
            let mut lhs = 0.0;
            let mut dist_sq = 0.0;
            for i in 0..n {
                lhs += 2.0 * (xp[i] - xb[i]) * g[i];
                dist_sq += (xp[i] - xb[i]).powi(2);
            }
            lhs += self.c0 * dist_sq;
            report.record("min_domain_inequality_neg", -lhs);
            if lhs < -INEQUALITY_TOL {
                ineq_count += 1;
                if ineq_worst.as_ref().is_none_or(|(v, _)| lhs < *v) {
                    ineq_worst = Some((lhs, [xb.clone(), xp.clone()].concat()));
                }
            }

            for p in [&xb, &xp] {
                let phi = self.phi(p).abs();
                let grad = {
                    self.grad_phi_into(p, &mut g);
                    norm_sq(&g).sqrt()
                };
                let hess = norm_sq(&self.hess_phi(p)).sqrt();
                for (name, value, bound) in [
                    ("phi", phi, self.bounds.phi),
                    ("grad_phi", grad, self.bounds.grad),
                    ("hess_phi", hess, self.bounds.hess),
                ] {
                    report.record(&format!("max_abs_{name}"), value);
                    if value > bound * (1.0 + 1e-9) + 1e-12
                        && !bound_fail.iter().any(|(b, ..)| b == name)
                    {
                        bound_fail.push((name.to_string(), value, bound, p.clone()));
                    }
                }
            }
        }

        if let Some((dev, at)) = grad_worst {
            let gn = dev + 1.0;
            report.violate(
                "unit_gradient",
                format!("|grad phi| = {gn:.6} != 1 on boundary ({grad_count} samples)"),
                at,
                dev,
                GRADIENT_TOL,
            );
        }
        if let Some((val, at)) = ineq_worst {
            report.violate(
                "domain_inequality",
                format!("2<x'-x, grad phi(x)> + C0|x-x'|^2 = {val:e} < 0 ({ineq_count} pairs)"),
                at,
                val,
                0.0,
            );
        }
        for (name, value, bound, at) in bound_fail {
            report.violate(
                "bounded",
                format!("|{name}| = {value} exceeds stored bound {bound}"),
                at,
                value,
                bound,
            );
        }
        report
    }
}

/// Damped Newton on the Lagrange system `y − x − μ∇φ(y) = 0`, `φ(y) = 0`.
/// Works for any smooth domain; built-in shapes use it only in tests.
pub fn project_newton(domain: &Domain, x: &[f64]) -> Result<ProjectionResult> {
    let n = domain.dim();
    if domain.phi(x) >= -domain.boundary_tol {
        return domain.project(x);
    }
    let mut y = domain.boundary_point(x);
    let g0 = domain.grad_phi(&y);
    let mut mu = dot(&sub(&y, x), &g0) / norm_sq(&g0).max(f64::MIN_POSITIVE);
    let scale = 1.0 + norm_sq(x).sqrt();

    let residual = |y: &[f64], mu: f64| -> DVector<f64> {
        let g = domain.grad_phi(y);
        let mut r = DVector::zeros(n + 1);
        for i in 0..n {
            r[i] = y[i] - x[i] - mu * g[i];
        }
        r[n] = domain.phi(y);
        r
    };

    let mut r = residual(&y, mu);
    for _ in 0..NEWTON_MAX_ITER {
        if r.norm() <= NEWTON_TOL * scale {
            let overshoot = norm_sq(&sub(x, &y)).sqrt();
            return Ok(ProjectionResult { point: y, overshoot, region: Region::ExteriorProjected });
        }
        let g = domain.grad_phi(&y);
        let h = domain.hess_phi(&y);
        let mut jac = DMatrix::zeros(n + 1, n + 1);
        for i in 0..n {
            for j in 0..n {
                jac[(i, j)] = if i == j { 1.0 } else { 0.0 } - mu * h[i * n + j];
            }
            jac[(i, n)] = -g[i];
            jac[(n, i)] = g[i];
        }
        let step = match jac.lu().solve(&(-&r)) {
            Some(s) => s,
            None => break,
        };
        let mut alpha = 1.0;
        let norm0 = r.norm();
        loop {
            let cand: Vec<f64> = (0..n).map(|i| y[i] + alpha * step[i]).collect();
            let cand_mu = mu + alpha * step[n];
            let rc = residual(&cand, cand_mu);
            if rc.norm() < norm0 || alpha < 1e-10 {
                y = cand;
                mu = cand_mu;
                r = rc;
                break;
            }
            alpha *= 0.5;
        }
    }
    if r.norm() <= NEWTON_TOL * scale {
        let overshoot = norm_sq(&sub(x, &y)).sqrt();
        return Ok(ProjectionResult { point: y, overshoot, region: Region::ExteriorProjected });
    }
    Err(Error::NonConvergence { iterations: NEWTON_MAX_ITER, residual: r.norm() })
}

pub(crate) fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn interval_projection_examples() {
        let d = Domain::interval();
        let p = d.project(&[0.5]).unwrap();
        assert_eq!(p, ProjectionResult { point: vec![0.5], overshoot: 0.0, region: Region::Interior });
        let p = d.project(&[1.2]).unwrap();
        assert_eq!(p.point, vec![1.0]);
        assert_abs_diff_eq!(p.overshoot, 0.2, epsilon = 1e-15);
        assert_eq!(p.region, Region::ExteriorProjected);
        assert_eq!(d.project(&[-1.0]).unwrap().region, Region::Boundary);
    }

    #[test]
    fn disk_projection_is_radial() {
        let d = Domain::ball(2, 1.0).unwrap();
        let p = d.project(&[1.2, 1.6]).unwrap();
        assert_abs_diff_eq!(p.point[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(p.point[1], 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(p.overshoot, 1.0, epsilon = 1e-15);
        assert_eq!(p.region, Region::ExteriorProjected);
    }

    #[test]
    fn newton_agrees_with_closed_form_on_ball() {
        let d = Domain::ball(3, 1.5).unwrap();
        for x in [[2.0, 0.1, -0.3], [0.0, -4.0, 1.0], [1.1, 1.1, 1.1]] {
            let exact = d.project(&x).unwrap();
            let newton = project_newton(&d, &x).unwrap();
            for i in 0..3 {
                assert_abs_diff_eq!(exact.point[i], newton.point[i], epsilon = 1e-10);
            }
            assert_abs_diff_eq!(exact.overshoot, newton.overshoot, epsilon = 1e-10);
        }
    }

    #[test]
    fn quadric_projection_satisfies_optimality() {
        let d = Domain::quadric(vec![1.0, 4.0], 1.0, 0.5, 4.0).unwrap();
        let x = [1.5, 0.9];
        let p = d.project(&x).unwrap();
        assert!(d.phi(&p.point).abs() < 1e-11);
        // x - y parallel to grad phi(y)
        let g = d.grad_phi(&p.point);
        let r = [x[0] - p.point[0], x[1] - p.point[1]];
        assert!((r[0] * g[1] - r[1] * g[0]).abs() < 1e-10);
        // no sampled boundary point is closer
        for k in 0..2000 {
            let a = k as f64 * std::f64::consts::TAU / 2000.0;
            let b = d.boundary_point(&[a.cos(), a.sin()]);
            let dist = ((x[0] - b[0]).powi(2) + (x[1] - b[1]).powi(2)).sqrt();
            assert!(dist >= p.overshoot - 1e-9);
        }
    }

    #[test]
    fn builtin_domains_validate() {
        // 2<x'-x, -x> + |x-x'|^2 = 1 - |x'|^2 >= 0 on the unit sphere
        assert!(Domain::ball(2, 1.0).unwrap().validate(10_000, 1).passed());
        assert!(Domain::interval().validate(10_000, 2).passed());
        assert!(Domain::ball(3, 2.0).unwrap().validate(10_000, 3).passed());
    }

    #[test]
    fn builtin_domains_validate_at_full_sample_count() {
        assert!(Domain::ball(2, 1.0).unwrap().validate(100_000, 4).passed());
        assert!(Domain::interval().validate(100_000, 5).passed());
    }

    #[test]
    fn unscaled_disk_fails_gradient_normalisation() {
        // phi = 1 - |x|^2  <=>  scale 1, level 1
        let d = Domain::quadric(vec![1.0, 1.0], 1.0, 1.0, 1.0).unwrap();
        let report = d.validate(500, 7);
        let v = report.violations.iter().find(|v| v.check == "unit_gradient").unwrap();
        assert_abs_diff_eq!(v.measured + 1.0, 2.0, epsilon = 1e-12);
        assert!(v.message.contains("2.000000"));
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(x in -5.0f64..5.0, y in -5.0f64..5.0) {
            let d = Domain::ball(2, 1.0).unwrap();
            let p = d.project(&[x, y]).unwrap();
            prop_assert!(d.phi(&p.point) >= -d.boundary_tol);
            prop_assert!(norm_sq(&p.point).sqrt() <= 1.0 + d.boundary_tol);
            let again = d.project(&p.point).unwrap();
            prop_assert_eq!(again.overshoot, 0.0);
            prop_assert_eq!(p.overshoot == 0.0, p.region != Region::ExteriorProjected);
        }

        #[test]
        fn quadric_projection_is_idempotent(x in -3.0f64..3.0, y in -3.0f64..3.0) {
            let d = Domain::quadric(vec![1.0, 2.5], 1.0, 0.5, 4.0).unwrap();
            let p = d.project(&[x, y]).unwrap();
            prop_assert!(d.phi(&p.point) >= -d.boundary_tol);
            prop_assert_eq!(d.project(&p.point).unwrap().overshoot, 0.0);
        }

        #[test]
        fn inward_moves_from_boundary_stay_inside(angle in 0.0f64..6.283, s in 1e-6f64..0.5) {
            let d = Domain::ball(2, 1.0).unwrap();
            let xb = d.boundary_point(&[angle.cos(), angle.sin()]);
            let g = d.grad_phi(&xb);
            let moved = [xb[0] + s * g[0], xb[1] + s * g[1]];
            prop_assert_eq!(d.project(&moved).unwrap().overshoot, 0.0);
        }
    }
}
