//! Hamiltonians `H∓` and an explicit monotone finite-difference solver for
//! the Isaacs equation `∂ₜW + H∓ = 0` with the nonlinear Neumann condition
//! `∂W/∂n + F∓ = 0` on the boundary.

pub mod mesh;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::ProblemSpec;
use crate::error::{Error, Result};
use crate::rng::UniformStream;

pub use mesh::{Mesh, MeshInfo, Node, NodeKind};

pub const DIVERGENCE_THRESHOLD: f64 = 1e6;
pub const DEFAULT_C_CFL: f64 = 0.9;
pub const MIN_LAYERS: usize = 100;
pub const MAX_LAYERS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    /// `sup_u inf_v`
    Lower,
    /// `inf_v sup_u`
    Upper,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Lower => "lower",
            Kind::Upper => "upper",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianEval {
    pub value: f64,
    pub u_star: usize,
    pub v_star: usize,
}

/// Max-min (lower) or min-max (upper) of `table[iu * nv + iv]`. Ties go to
/// the lowest index, `u` first.
pub fn minimax(table: &[f64], nu: usize, nv: usize, kind: Kind) -> HamiltonianEval {
    match kind {
        Kind::Lower => {
            let mut best = HamiltonianEval { value: f64::NEG_INFINITY, u_star: 0, v_star: 0 };
            for iu in 0..nu {
                let row = &table[iu * nv..(iu + 1) * nv];
                let (iv, inner) = argopt(row.iter().copied(), |a, b| a < b);
                if inner > best.value {
                    best = HamiltonianEval { value: inner, u_star: iu, v_star: iv };
                }
            }
            best
        }
        Kind::Upper => {
            let mut best = HamiltonianEval { value: f64::INFINITY, u_star: 0, v_star: 0 };
            for iv in 0..nv {
                let (iu, inner) = argopt((0..nu).map(|iu| table[iu * nv + iv]), |a, b| a > b);
                if inner < best.value {
                    best = HamiltonianEval { value: inner, u_star: iu, v_star: iv };
                }
            }
            best
        }
    }
}

fn argopt(values: impl Iterator<Item = f64>, better: impl Fn(f64, f64) -> bool) -> (usize, f64) {
    let mut best = (0, f64::NAN);
    for (i, v) in values.enumerate() {
        if i == 0 || better(v, best.1) {
            best = (i, v);
        }
    }
    best
}

/// `H∓(t,x,y,p,A)` by enumeration of `½Tr(σσ*A) + ⟨b,p⟩ + g(t,x,y,σ*p,u,v)`
/// over `U_h × V_h`. `a` is row-major `n × n`.
pub fn hamiltonian(spec: &ProblemSpec, t: f64, x: &[f64], y: f64, p: &[f64], a: &[f64], kind: Kind) -> HamiltonianEval {
    let n = spec.n();
    let (nu, nv) = (spec.controls_u.len(), spec.controls_v.len());
    let mut b = vec![0.0; n];
    let mut sigma = vec![0.0; n * n];
    let mut z = vec![0.0; n];
    let mut table = Vec::with_capacity(nu * nv);
    for iu in 0..nu {
        let u = spec.controls_u.point(iu);
        for iv in 0..nv {
            let v = spec.controls_v.point(iv);
            spec.b_into(t, x, u, v, &mut b);
            spec.sigma_into(t, x, u, v, &mut sigma);
            let mut trace = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let ss: f64 = (0..n).map(|k| sigma[i * n + k] * sigma[j * n + k]).sum();
                    trace += ss * a[j * n + i];
                }
            }
            for (k, zk) in z.iter_mut().enumerate() {
                *zk = (0..n).map(|i| sigma[i * n + k] * p[i]).sum();
            }
            let drift: f64 = b.iter().zip(p).map(|(bi, pi)| bi * pi).sum();
            table.push(0.5 * trace + drift + spec.g(t, x, y, &z, u, v));
        }
    }
    minimax(&table, nu, nv, kind)
}

/// Neumann nonlinearity `sup_u inf_v f` (lower) or `inf_v sup_u f` (upper).
pub fn neumann_value(spec: &ProblemSpec, t: f64, x: &[f64], y: f64, kind: Kind) -> f64 {
    let (nu, nv) = (spec.controls_u.len(), spec.controls_v.len());
    let mut table = Vec::with_capacity(nu * nv);
    for iu in 0..nu {
        for iv in 0..nv {
            table.push(spec.f(t, x, y, spec.controls_u.point(iu), spec.controls_v.point(iv)));
        }
    }
    minimax(&table, nu, nv, kind).value
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeParams {
    pub h: f64,
    /// Stored time layers; defaults to the CFL step count clamped to
    /// `[MIN_LAYERS, MAX_LAYERS]`.
    pub layers: Option<usize>,
    /// Explicit steps per stored layer; defaults to the fewest satisfying CFL.
    pub substeps: Option<usize>,
    pub c_cfl: f64,
}

impl Default for SchemeParams {
    fn default() -> Self {
        SchemeParams { h: 0.05, layers: None, substeps: None, c_cfl: DEFAULT_C_CFL }
    }
}

impl SchemeParams {
    pub fn new(h: f64) -> Self {
        SchemeParams { h, ..Default::default() }
    }

    pub fn with_layers(mut self, layers: usize) -> Self {
        self.layers = Some(layers);
        self
    }

    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = Some(substeps);
        self
    }
}

/// What the solver actually ran with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeInfo {
    pub h: f64,
    pub layers: usize,
    pub substeps: usize,
    pub dt: f64,
    pub cfl_bound: f64,
    pub c_cfl: f64,
}

/// Per-node, per-pair stencil coefficients of the discrete Hamiltonian.
/// Diffusion enters through `aₖ = ½σₖₖ²`; the drift and the `z`-part of `g`
/// through the upwinded `b_eff = b + σ·∂g/∂z`.
pub struct Scheme<'a> {
    spec: &'a ProblemSpec,
    mesh: &'a Mesh,
    kind: Kind,
    nu: usize,
    nv: usize,
    coef: Vec<f64>,
    zero_z: Vec<f64>,
}

impl<'a> Scheme<'a> {
    pub fn new(spec: &'a ProblemSpec, mesh: &'a Mesh, kind: Kind) -> Result<Self> {
        let n = spec.n();
        if mesh.dim() != n {
            return Err(Error::Dimension(format!("mesh dimension {} differs from state dimension {n}", mesh.dim())));
        }
        if spec.controls_u.is_empty() || spec.controls_v.is_empty() {
            return Err(Error::invalid("control grids must be nonempty"));
        }
        let (nu, nv) = (spec.controls_u.len(), spec.controls_v.len());
        let gz = spec.coeffs.g.z_gradient();
        let mut coef = Vec::with_capacity(mesh.len() * nu * nv * 2 * n);
        let mut b = vec![0.0; n];
        let mut sigma = vec![0.0; n * n];
        for node in mesh.nodes() {
            for iu in 0..nu {
                let u = spec.controls_u.point(iu);
                for iv in 0..nv {
                    let v = spec.controls_v.point(iv);
                    spec.b_into(0.0, &node.x, u, v, &mut b);
                    spec.sigma_into(0.0, &node.x, u, v, &mut sigma);
                    for k in 0..n {
                        let s = sigma[k * n + k];
                        coef.push(0.5 * s * s);
                        coef.push(b[k] + s * gz.get(k).copied().unwrap_or(0.0));
                    }
                }
            }
        }
        Ok(Scheme { spec, mesh, kind, nu, nv, coef, zero_z: vec![0.0; n] })
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    /// Largest explicit step for which every per-pair update is
    /// nondecreasing in every input value.
    pub fn cfl_bound(&self, c_cfl: f64) -> f64 {
        let n = self.mesh.dim();
        let h = self.mesh.h();
        let terminal_max = self.mesh.nodes().iter().map(|nd| self.spec.terminal(&nd.x).abs()).fold(0.0, f64::max);
        let y_bound = terminal_max + 1.0;
        let g = &self.spec.coeffs.g;
        let f = &self.spec.coeffs.f;
        let g_y = g.y.abs() + 2.0 * g.y_sq.abs() * y_bound;
        let f_y = f.y.abs() + 2.0 * f.y_sq.abs() * y_bound;
        let pairs = self.nu * self.nv;
        let mut worst: f64 = 0.0;
        for (i, node) in self.mesh.nodes().iter().enumerate() {
            for q in 0..pairs {
                let c = &self.coef[(i * pairs + q) * 2 * n..(i * pairs + q + 1) * 2 * n];
                let mut den = g_y;
                for k in 0..n {
                    let (a, be) = (c[2 * k], c[2 * k + 1]);
                    den += 2.0 * a / (h[k] * h[k]) + be.abs() / h[k];
                    let ghost = node.ghost[2 * k] + node.ghost[2 * k + 1];
                    den += ghost * (a / h[k] + be.abs()) * f_y;
                }
                worst = worst.max(den);
            }
        }
        if worst == 0.0 {
            f64::INFINITY
        } else {
            c_cfl / worst
        }
    }

    /// Discrete `H∓` at node `i` from nodal values `w` at time `t`.
    pub fn node_hamiltonian(&self, t: f64, i: usize, w: &[f64]) -> f64 {
        let n = self.mesh.dim();
        let h = self.mesh.h();
        let node = self.mesh.node(i);
        let wi = w[i];
        let neumann = if node.kind == NodeKind::Boundary {
            neumann_value(self.spec, t, &node.x, wi, self.kind)
        } else {
            0.0
        };
        let mut minus = [0.0; mesh::MAX_DIM];
        let mut plus = [0.0; mesh::MAX_DIM];
        for k in 0..n {
            minus[k] = node.neighbors[2 * k].map_or(wi + h[k] * node.ghost[2 * k] * neumann, |j| w[j]);
            plus[k] = node.neighbors[2 * k + 1].map_or(wi + h[k] * node.ghost[2 * k + 1] * neumann, |j| w[j]);
        }
        let pairs = self.nu * self.nv;
        let mut table = [0.0; 64];
        let mut heap = Vec::new();
        let table: &mut [f64] = if pairs <= table.len() {
            &mut table[..pairs]
        } else {
            heap.resize(pairs, 0.0);
            &mut heap
        };
        for iu in 0..self.nu {
            let u = self.spec.controls_u.point(iu);
            for iv in 0..self.nv {
                let v = self.spec.controls_v.point(iv);
                let q = iu * self.nv + iv;
                let c = &self.coef[(i * pairs + q) * 2 * n..(i * pairs + q + 1) * 2 * n];
                let mut acc = self.spec.g(t, &node.x, wi, &self.zero_z, u, v);
                for k in 0..n {
                    let (a, be) = (c[2 * k], c[2 * k + 1]);
                    acc += a * (plus[k] - 2.0 * wi + minus[k]) / (h[k] * h[k]);
                    acc += if be > 0.0 { be * (plus[k] - wi) / h[k] } else { be * (wi - minus[k]) / h[k] };
                }
                table[q] = acc;
            }
        }
        minimax(table, self.nu, self.nv, self.kind).value
    }

    /// One explicit backward step `W(t − dt) = W(t) + dt·H∓(t, W(t))`.
    pub fn step(&self, t: f64, dt: f64, w: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            *o = w[i] + dt * self.node_hamiltonian(t, i, w);
        });
    }
}

/// Nodal values on `times × mesh`, stored layer-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    kind: Kind,
    mesh: Mesh,
    times: Vec<f64>,
    values: Vec<f64>,
    scheme: Option<SchemeInfo>,
}

/// JSON header accompanying the CSV form of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub kind: Kind,
    pub mesh: MeshInfo,
    pub layers: usize,
    pub t0: f64,
    pub horizon: f64,
    pub scheme: Option<SchemeInfo>,
}

impl ValueGrid {
    pub fn from_fn(kind: Kind, mesh: Mesh, times: Vec<f64>, f: impl Fn(f64, &[f64]) -> f64) -> Self {
        let mut values = Vec::with_capacity(times.len() * mesh.len());
        for &t in &times {
            values.extend(mesh.nodes().iter().map(|nd| f(t, &nd.x)));
        }
        ValueGrid { kind, mesh, times, values, scheme: None }
    }

    pub fn from_layers(kind: Kind, mesh: Mesh, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != times.len() * mesh.len() {
            return Err(Error::Dimension(format!(
                "{} values for {} layers of {} nodes",
                values.len(),
                times.len(),
                mesh.len()
            )));
        }
        Ok(ValueGrid { kind, mesh, times, values, scheme: None })
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn scheme(&self) -> Option<&SchemeInfo> {
        self.scheme.as_ref()
    }

    /// Number of time steps between stored layers.
    pub fn layers(&self) -> usize {
        self.times.len() - 1
    }

    pub fn layer(&self, l: usize) -> &[f64] {
        let m = self.mesh.len();
        &self.values[l * m..(l + 1) * m]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Layer whose time is within `1e-9` of `t`.
    pub fn layer_at(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|s| (s - t).abs() <= 1e-9)
    }

    /// Multilinear in space, linear in time between stored layers.
    pub fn value_at(&self, t: f64, x: &[f64]) -> f64 {
        if let Some(l) = self.layer_at(t) {
            return self.mesh.interpolate(self.layer(l), x);
        }
        let last = self.times.len() - 1;
        let l = self.times.partition_point(|s| *s <= t).clamp(1, last) - 1;
        let (t0, t1) = (self.times[l], self.times[l + 1]);
        let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        (1.0 - w) * self.mesh.interpolate(self.layer(l), x) + w * self.mesh.interpolate(self.layer(l + 1), x)
    }

    pub fn header(&self) -> GridHeader {
        GridHeader {
            kind: self.kind,
            mesh: self.mesh.info(),
            layers: self.layers(),
            t0: self.times[0],
            horizon: *self.times.last().expect("nonempty time grid"),
            scheme: self.scheme,
        }
    }

    /// Columns `t, x0.., value`, one row per (layer, node).
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let xs: Vec<String> = (0..self.mesh.dim()).map(|i| format!("x{i}")).collect();
        writeln!(w, "t,{},value", xs.join(","))?;
        for (l, t) in self.times.iter().enumerate() {
            for (node, v) in self.mesh.nodes().iter().zip(self.layer(l)) {
                let x: Vec<String> = node.x.iter().map(|c| format!("{c:e}")).collect();
                writeln!(w, "{t:e},{},{v:e}", x.join(","))?;
            }
        }
        Ok(())
    }

    fn same_shape(&self, other: &ValueGrid) -> Result<()> {
        if self.mesh != other.mesh {
            return Err(Error::MeshMismatch("space meshes differ".into()));
        }
        if self.times.len() != other.times.len()
            || self.times.iter().zip(&other.times).any(|(a, b)| (a - b).abs() > 1e-12)
        {
            return Err(Error::MeshMismatch("time grids differ".into()));
        }
        Ok(())
    }
}

/// Backward explicit solve on a fresh mesh of width `params.h`.
pub fn solve(spec: &ProblemSpec, kind: Kind, params: &SchemeParams) -> Result<ValueGrid> {
    let mesh = Mesh::new(&spec.domain, params.h)?;
    solve_on(spec, kind, mesh, params)
}

/// Backward explicit solve on a given mesh (`params.h` is ignored).
pub fn solve_on(spec: &ProblemSpec, kind: Kind, mesh: Mesh, params: &SchemeParams) -> Result<ValueGrid> {
    if !(params.c_cfl > 0.0 && params.c_cfl <= 1.0) {
        return Err(Error::invalid(format!("c_cfl must lie in (0, 1], got {}", params.c_cfl)));
    }
    let horizon = spec.horizon;
    let (layers, substeps, bound) = {
        let scheme = Scheme::new(spec, &mesh, kind)?;
        let bound = scheme.cfl_bound(params.c_cfl);
        let needed = if bound.is_finite() { (horizon / bound).ceil() as usize } else { 1 };
        let layers = params.layers.unwrap_or_else(|| needed.clamp(MIN_LAYERS, MAX_LAYERS));
        if layers == 0 {
            return Err(Error::invalid("at least one time layer is required"));
        }
        let layer_dt = horizon / layers as f64;
        let substeps = match params.substeps {
            Some(0) => return Err(Error::invalid("substeps must be positive")),
            Some(s) => {
                let dt = layer_dt / s as f64;
                if dt > bound {
                    return Err(Error::CflViolation { dt, bound });
                }
                s
            }
            None => ((layer_dt / bound).ceil() as usize).max(1),
        };
        (layers, substeps, bound)
    };
    let times: Vec<f64> = (0..=layers).map(|l| horizon * l as f64 / layers as f64).collect();
    let m = mesh.len();
    let mut values = vec![0.0; (layers + 1) * m];
    for (slot, node) in values[layers * m..].iter_mut().zip(mesh.nodes()) {
        *slot = spec.terminal(&node.x);
    }
    let scheme = Scheme::new(spec, &mesh, kind)?;
    let mut current = values[layers * m..].to_vec();
    let mut next = vec![0.0; m];
    for l in (0..layers).rev() {
        let dt = (times[l + 1] - times[l]) / substeps as f64;
        for s in 0..substeps {
            let t = times[l + 1] - s as f64 * dt;
            scheme.step(t, dt, &current, &mut next);
            std::mem::swap(&mut current, &mut next);
        }
        if let Some(bad) = current.iter().find(|v| !v.is_finite() || v.abs() > DIVERGENCE_THRESHOLD) {
            return Err(Error::Divergence { layer: l, value: *bad });
        }
        values[l * m..(l + 1) * m].copy_from_slice(&current);
    }
    let info = SchemeInfo {
        h: mesh.max_h(),
        layers,
        substeps,
        dt: horizon / (layers * substeps) as f64,
        cfl_bound: bound,
        c_cfl: params.c_cfl,
    };
    Ok(ValueGrid { kind, mesh, times, values, scheme: Some(info) })
}

/// Per-node residuals. `interior` is `(W_{l+1} − W_l)/Δ + ½(H_l + H_{l+1})`
/// with the solver's stencil; `neumann` is `∂W/∂n + F∓` from one-sided
/// second-order differences (0 off the boundary). `sub`/`sup` are their
/// max/min at boundary nodes and equal `interior` elsewhere. The terminal
/// layer is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualGrid {
    mesh: Mesh,
    times: Vec<f64>,
    pub interior: Vec<f64>,
    pub neumann: Vec<f64>,
    pub sub: Vec<f64>,
    pub sup: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    /// Over interior nodes.
    pub max_interior: f64,
    /// Over boundary nodes.
    pub max_neumann: f64,
    /// Over boundary nodes, of `min(interior, neumann)` in absolute value.
    pub max_boundary_combined: f64,
}

impl ResidualGrid {
    pub fn summary(&self) -> ResidualSummary {
        let m = self.mesh.len();
        let mut s = ResidualSummary { max_interior: 0.0, max_neumann: 0.0, max_boundary_combined: 0.0 };
        for (k, node) in self.mesh.nodes().iter().enumerate() {
            for l in 0..self.times.len() {
                let idx = l * m + k;
                match node.kind {
                    NodeKind::Interior => s.max_interior = s.max_interior.max(self.interior[idx].abs()),
                    NodeKind::Boundary => {
                        s.max_neumann = s.max_neumann.max(self.neumann[idx].abs());
                        let combined = self.interior[idx].abs().min(self.neumann[idx].abs());
                        s.max_boundary_combined = s.max_boundary_combined.max(combined);
                    }
                }
            }
        }
        s
    }

    /// Columns `t, x0.., kind, interior, neumann, sub, sup`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let m = self.mesh.len();
        let xs: Vec<String> = (0..self.mesh.dim()).map(|i| format!("x{i}")).collect();
        writeln!(w, "t,{},kind,interior,neumann,sub,sup", xs.join(","))?;
        for (l, t) in self.times.iter().enumerate() {
            for (k, node) in self.mesh.nodes().iter().enumerate() {
                let idx = l * m + k;
                let x: Vec<String> = node.x.iter().map(|c| format!("{c:e}")).collect();
                let kind = match node.kind {
                    NodeKind::Interior => "interior",
                    NodeKind::Boundary => "boundary",
                };
                writeln!(
                    w,
                    "{t:e},{},{kind},{:e},{:e},{:e},{:e}",
                    x.join(","),
                    self.interior[idx],
                    self.neumann[idx],
                    self.sub[idx],
                    self.sup[idx]
                )?;
            }
        }
        Ok(())
    }
}

fn normal_derivative(mesh: &Mesh, i: usize, w: &[f64]) -> f64 {
    let node = mesh.node(i);
    let Some(normal) = node.normal.as_ref() else { return 0.0 };
    let h = mesh.h();
    let mut acc = 0.0;
    for (k, nk) in normal.iter().enumerate() {
        let (lo, hi) = (node.neighbors[2 * k], node.neighbors[2 * k + 1]);
        let d = match (lo, hi) {
            (Some(a), Some(b)) => (w[b] - w[a]) / (2.0 * h[k]),
            (None, Some(b)) => match mesh.node(b).neighbors[2 * k + 1] {
                Some(c) => (-3.0 * w[i] + 4.0 * w[b] - w[c]) / (2.0 * h[k]),
                None => (w[b] - w[i]) / h[k],
            },
            (Some(a), None) => match mesh.node(a).neighbors[2 * k] {
                Some(c) => (3.0 * w[i] - 4.0 * w[a] + w[c]) / (2.0 * h[k]),
                None => (w[i] - w[a]) / h[k],
            },
            (None, None) => 0.0,
        };
        acc += nk * d;
    }
    acc
}

pub fn viscosity_residual(grid: &ValueGrid, spec: &ProblemSpec) -> Result<ResidualGrid> {
    let scheme = Scheme::new(spec, &grid.mesh, grid.kind)?;
    let m = grid.mesh.len();
    let total = grid.times.len() * m;
    let (mut interior, mut neumann) = (vec![0.0; total], vec![0.0; total]);
    let mut h_next: Vec<f64> = {
        let last = grid.layers();
        (0..m).into_par_iter().map(|i| scheme.node_hamiltonian(grid.times[last], i, grid.layer(last))).collect()
    };
    for l in (0..grid.layers()).rev() {
        let t = grid.times[l];
        let delta = grid.times[l + 1] - t;
        let (w, w_next) = (grid.layer(l), grid.layer(l + 1));
        let h_here: Vec<f64> = (0..m).into_par_iter().map(|i| scheme.node_hamiltonian(t, i, w)).collect();
        for i in 0..m {
            interior[l * m + i] = (w_next[i] - w[i]) / delta + 0.5 * (h_here[i] + h_next[i]);
            let node = grid.mesh.node(i);
            if node.kind == NodeKind::Boundary {
                neumann[l * m + i] =
                    normal_derivative(&grid.mesh, i, w) + neumann_value(spec, t, &node.x, w[i], grid.kind);
            }
        }
        h_next = h_here;
    }
    let mut sub = interior.clone();
    let mut sup = interior.clone();
    for l in 0..grid.layers() {
        for (i, node) in grid.mesh.nodes().iter().enumerate() {
            if node.kind == NodeKind::Boundary {
                let idx = l * m + i;
                sub[idx] = interior[idx].max(neumann[idx]);
                sup[idx] = interior[idx].min(neumann[idx]);
            }
        }
    }
    Ok(ResidualGrid { mesh: grid.mesh.clone(), times: grid.times.clone(), interior, neumann, sub, sup })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridComparison {
    /// `max(grid1 − grid2)` over all layers and nodes.
    pub max_difference: f64,
    pub layer: usize,
    pub node: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Pointwise `grid1 ≤ grid2 + tol` on shared time and space meshes.
pub fn comparison_check(grid1: &ValueGrid, grid2: &ValueGrid, tol: f64) -> Result<GridComparison> {
    grid1.same_shape(grid2)?;
    let m = grid1.mesh.len();
    let mut out = GridComparison { max_difference: f64::NEG_INFINITY, layer: 0, node: 0, tolerance: tol, passed: true };
    for (idx, (a, b)) in grid1.values.iter().zip(&grid2.values).enumerate() {
        let d = a - b;
        if d > out.max_difference {
            out.max_difference = d;
            out.layer = idx / m;
            out.node = idx % m;
        }
    }
    out.passed = out.max_difference <= tol;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapWitness {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: f64,
    pub p: Vec<f64>,
    pub a: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub samples: usize,
    pub max_gap: f64,
    pub witness: GapWitness,
    /// Samples with `H− > H+`; always 0 under exact enumeration.
    pub weak_duality_violations: usize,
}

pub const GAP_Y_RANGE: f64 = 2.0;
pub const GAP_P_RANGE: f64 = 2.0;

/// Max of `|H+ − H−|` over uniform samples `t ∈ [0,T]`, `x` in the domain,
/// `|y| ≤ 2`, `|pᵢ| ≤ 2` and symmetric `A` with entries in `[−2, 2]`.
pub fn isaacs_gap(spec: &ProblemSpec, sample_count: usize, seed: u64) -> Result<GapReport> {
    if sample_count == 0 {
        return Err(Error::invalid("isaacs_gap needs at least one sample"));
    }
    let n = spec.n();
    let bbox = spec.domain.bounding_box();
    let mut rng = UniformStream::new(seed, 0x0015_AAC5);
    let mut report: Option<GapReport> = None;
    for _ in 0..sample_count {
        let t = rng.range(0.0, spec.horizon);
        let x = loop {
            let x: Vec<f64> = bbox.iter().map(|(lo, hi)| rng.range(*lo, *hi)).collect();
            if spec.domain.contains(&x) {
                break x;
            }
        };
        let y = rng.range(-GAP_Y_RANGE, GAP_Y_RANGE);
        let p: Vec<f64> = (0..n).map(|_| rng.range(-GAP_P_RANGE, GAP_P_RANGE)).collect();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = rng.range(-GAP_P_RANGE, GAP_P_RANGE);
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
        }
        let lower = hamiltonian(spec, t, &x, y, &p, &a, Kind::Lower).value;
        let upper = hamiltonian(spec, t, &x, y, &p, &a, Kind::Upper).value;
        let gap = (upper - lower).abs();
        let r = report.get_or_insert_with(|| GapReport {
            samples: sample_count,
            max_gap: f64::NEG_INFINITY,
            witness: GapWitness { t, x: x.clone(), y, p: p.clone(), a: a.clone(), lower, upper },
            weak_duality_violations: 0,
        });
        if lower > upper {
            r.weak_duality_violations += 1;
        }
        if gap > r.max_gap {
            r.max_gap = gap;
            r.witness = GapWitness { t, x, y, p, a, lower, upper };
        }
    }
    Ok(report.expect("at least one sample"))
}
