//! Cross-path least-squares estimator of conditional expectations.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest admissible condition number of the (ridged) normal equations.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Basis {
    Constant,
    Affine,
    Quadratic,
    /// Piecewise-constant on `k` equal bins per coordinate.
    Bins { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionSpec {
    pub basis: Basis,
    #[serde(default)]
    pub ridge: f64,
}

impl Default for RegressionSpec {
    fn default() -> Self {
        RegressionSpec::affine()
    }
}

impl RegressionSpec {
    pub fn constant() -> Self {
        RegressionSpec { basis: Basis::Constant, ridge: 0.0 }
    }

    pub fn affine() -> Self {
        RegressionSpec { basis: Basis::Affine, ridge: 0.0 }
    }

    pub fn quadratic() -> Self {
        RegressionSpec { basis: Basis::Quadratic, ridge: 0.0 }
    }

    pub fn bins(k: usize) -> Result<Self> {
        let spec = RegressionSpec { basis: Basis::Bins { k }, ridge: 0.0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_ridge(mut self, ridge: f64) -> Self {
        self.ridge = ridge;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Basis::Bins { k: 0 } = self.basis {
            return Err(Error::invalid("bins(k) requires k >= 1"));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::invalid("ridge must be a nonnegative finite number"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Polynomial {
    /// Raw coordinates that vary across samples, with their mean and scale.
    coords: Vec<(usize, f64, f64)>,
    quadratic: bool,
    /// Monomial index and standardization of each kept column.
    kept: Vec<usize>,
    columns: Vec<(f64, f64)>,
    /// Design matrix without the intercept, row-major `samples × columns`.
    design: Vec<f64>,
    inverse: DMatrix<f64>,
}

#[derive(Debug, Clone)]
struct Bins {
    coords: Vec<(usize, f64, f64)>,
    k: usize,
    cells: Vec<usize>,
    cell_count: usize,
}

#[derive(Debug, Clone)]
enum Model {
    Polynomial(Polynomial),
    Bins(Bins),
}

/// Regression operator on a fixed sample of points. Build once per time
/// step, then project any number of targets.
#[derive(Debug, Clone)]
pub struct Fitter {
    samples: usize,
    model: Model,
    condition: f64,
}

/// Coefficients of one fitted target; evaluate with [`Fitter::predict`].
#[derive(Debug, Clone, PartialEq)]
pub struct Fitted {
    coef: Vec<f64>,
}

fn varying_coords(points: &[f64], n: usize, samples: usize) -> Vec<(usize, f64, f64)> {
    (0..n)
        .filter_map(|i| {
            let mean = (0..samples).map(|s| points[s * n + i]).sum::<f64>() / samples as f64;
            let var = (0..samples).map(|s| (points[s * n + i] - mean).powi(2)).sum::<f64>() / samples as f64;
            let sd = var.sqrt();
            (sd > 1e-12 * (1.0 + mean.abs())).then_some((i, mean, sd))
        })
        .collect()
}

fn monomials(coords: &[(usize, f64, f64)], quadratic: bool, x: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let z: Vec<f64> = coords.iter().map(|&(i, m, s)| (x[i] - m) / s).collect();
    out.extend_from_slice(&z);
    if quadratic {
        for a in 0..z.len() {
            for b in a..z.len() {
                out.push(z[a] * z[b]);
            }
        }
    }
}

impl Fitter {
    /// `points` is row-major `samples × n`.
    pub fn new(spec: &RegressionSpec, points: &[f64], n: usize, step: usize) -> Result<Fitter> {
        spec.validate()?;
        if n == 0 || points.is_empty() || !points.len().is_multiple_of(n) {
            return Err(Error::Dimension("regression points are empty or ragged".into()));
        }
        let samples = points.len() / n;
        let coords = varying_coords(points, n, samples);
        let model = match spec.basis {
            Basis::Bins { k } => {
                let coords: Vec<(usize, f64, f64)> = coords
                    .iter()
                    .map(|&(i, _, _)| {
                        let lo = (0..samples).map(|s| points[s * n + i]).fold(f64::INFINITY, f64::min);
                        let hi = (0..samples).map(|s| points[s * n + i]).fold(f64::NEG_INFINITY, f64::max);
                        (i, lo, hi)
                    })
                    .collect();
                let cell_count = k.pow(coords.len() as u32);
                let cells = (0..samples).map(|s| bin_of(&coords, k, &points[s * n..(s + 1) * n])).collect();
                return Ok(Fitter { samples, model: Model::Bins(Bins { coords, k, cells, cell_count }), condition: 1.0 });
            }
            Basis::Constant => (Vec::new(), false),
            Basis::Affine => (coords, false),
            Basis::Quadratic => (coords, true),
        };
        let (coords, quadratic) = model;

        let mut raw = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(samples);
        for s in 0..samples {
            monomials(&coords, quadratic, &points[s * n..(s + 1) * n], &mut raw);
            rows.push(raw.clone());
        }
        let width = rows.first().map_or(0, |r| r.len());
        let mut columns = Vec::new();
        let mut kept = Vec::new();
        for c in 0..width {
            let mean = rows.iter().map(|r| r[c]).sum::<f64>() / samples as f64;
            let var = rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / samples as f64;
            if var.sqrt() > 1e-12 * (1.0 + mean.abs()) {
                columns.push((mean, var.sqrt()));
                kept.push(c);
            }
        }
        let p = kept.len();
        let mut design = Vec::with_capacity(samples * p);
        for r in &rows {
            for (j, &c) in kept.iter().enumerate() {
                design.push((r[c] - columns[j].0) / columns[j].1);
            }
        }

        let dim = p + 1;
        let mut gram = DMatrix::<f64>::zeros(dim, dim);
        gram[(0, 0)] = 1.0;
        let inv_n = 1.0 / samples as f64;
        for s in 0..samples {
            let row = &design[s * p..(s + 1) * p];
            for a in 0..p {
                gram[(0, a + 1)] += row[a] * inv_n;
                for b in a..p {
                    gram[(a + 1, b + 1)] += row[a] * row[b] * inv_n;
                }
            }
        }
        for a in 0..dim {
            for b in 0..a {
                gram[(a, b)] = gram[(b, a)];
            }
        }
        for a in 1..dim {
            gram[(a, a)] += spec.ridge;
        }
        let eig = SymmetricEigen::new(gram);
        let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::SingularRegression { step, condition });
        }
        let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
        let inverse = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
        let coords = if p == 0 { Vec::new() } else { coords };
        Ok(Fitter {
            samples,
            model: Model::Polynomial(Polynomial { coords, quadratic, kept, columns, design, inverse }),
            condition,
        })
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn fit(&self, target: &[f64]) -> Fitted {
        assert_eq!(target.len(), self.samples, "target length differs from sample count");
        match &self.model {
            Model::Polynomial(poly) => {
                let p = poly.columns.len();
                let inv_n = 1.0 / self.samples as f64;
                let mut rhs = DVector::<f64>::zeros(p + 1);
                for (s, t) in target.iter().enumerate() {
                    rhs[0] += t * inv_n;
                    let row = &poly.design[s * p..(s + 1) * p];
                    for a in 0..p {
                        rhs[a + 1] += row[a] * t * inv_n;
                    }
                }
                Fitted { coef: (&poly.inverse * rhs).iter().cloned().collect() }
            }
            Model::Bins(bins) => {
                let mut sum = vec![0.0; bins.cell_count + 1];
                let mut count = vec![0usize; bins.cell_count + 1];
                for (s, t) in target.iter().enumerate() {
                    sum[bins.cells[s]] += t;
                    count[bins.cells[s]] += 1;
                }
                let global = target.iter().sum::<f64>() / self.samples as f64;
                let mut coef: Vec<f64> = sum
                    .iter()
                    .zip(&count)
                    .take(bins.cell_count)
                    .map(|(s, &c)| if c > 0 { s / c as f64 } else { global })
                    .collect();
                coef.push(global);
                Fitted { coef }
            }
        }
    }

    /// Fitted value at sample `s`.
    pub fn at_sample(&self, fitted: &Fitted, s: usize) -> f64 {
        match &self.model {
            Model::Polynomial(poly) => {
                let p = poly.columns.len();
                let row = &poly.design[s * p..(s + 1) * p];
                fitted.coef[0] + row.iter().zip(&fitted.coef[1..]).map(|(a, b)| a * b).sum::<f64>()
            }
            Model::Bins(bins) => fitted.coef[bins.cells[s]],
        }
    }

    /// Fitted values at every sample.
    pub fn project(&self, target: &[f64]) -> Vec<f64> {
        let fitted = self.fit(target);
        (0..self.samples).map(|s| self.at_sample(&fitted, s)).collect()
    }

    /// Fitted function evaluated at a new point.
    pub fn predict(&self, fitted: &Fitted, x: &[f64]) -> f64 {
        match &self.model {
            Model::Polynomial(poly) => {
                let mut raw = Vec::new();
                monomials(&poly.coords, poly.quadratic, x, &mut raw);
                let mut value = fitted.coef[0];
                for (j, (m, s)) in poly.columns.iter().enumerate() {
                    value += fitted.coef[j + 1] * (raw[poly.kept[j]] - m) / s;
                }
                value
            }
            Model::Bins(bins) => fitted.coef[bin_of(&bins.coords, bins.k, x)],
        }
    }
}

fn bin_of(coords: &[(usize, f64, f64)], k: usize, x: &[f64]) -> usize {
    let mut cell = 0;
    for &(i, lo, hi) in coords {
        let width = (hi - lo) / k as f64;
        let b = if width > 0.0 { ((x[i] - lo) / width).floor() } else { 0.0 };
        let b = b.clamp(0.0, (k - 1) as f64) as usize;
        cell = cell * k + b;
    }
    cell
}
