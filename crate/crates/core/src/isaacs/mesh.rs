//! Tensor mesh of `closure(O)` with interior/boundary tagging.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Domain;

pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Interior,
    Boundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub x: Vec<f64>,
    pub kind: NodeKind,
    /// In-domain neighbour along `−e_i` at `2i` and `+e_i` at `2i + 1`.
    pub neighbors: Vec<Option<usize>>,
    /// Ghost weight `max(−⟨±e_i, ∇φ⟩, 0)` for each missing neighbour.
    pub ghost: Vec<f64>,
    /// Inward unit normal at the radial projection (boundary nodes).
    pub normal: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    lo: Vec<f64>,
    h: Vec<f64>,
    counts: Vec<usize>,
    nodes: Vec<Node>,
    box_to_node: Vec<Option<usize>>,
    /// Nearest in-domain node (breadth-first) for every box node.
    fill: Vec<usize>,
}

/// Mesh metadata for JSON headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshInfo {
    pub dimension: usize,
    pub lo: Vec<f64>,
    pub h: Vec<f64>,
    pub counts: Vec<usize>,
    pub nodes: usize,
    pub interior: usize,
    pub boundary: usize,
}

impl Mesh {
    /// Box nodes of the bounding box at spacing close to `h` (adjusted per
    /// axis so the box ends are nodes), restricted to `φ ≥ −εbd`.
    pub fn new(domain: &Domain, h: f64) -> Result<Mesh> {
        let n = domain.dim();
        if n == 0 || n > MAX_DIM {
            return Err(Error::Dimension(format!("tensor meshes support 1 <= n <= {MAX_DIM}, got {n}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid("mesh width must be positive"));
        }
        let bbox = domain.bounding_box();
        let counts: Vec<usize> = bbox.iter().map(|(lo, hi)| ((hi - lo) / h).round().max(2.0) as usize + 1).collect();
        let lo: Vec<f64> = bbox.iter().map(|b| b.0).collect();
        let hs: Vec<f64> = bbox.iter().zip(&counts).map(|((lo, hi), c)| (hi - lo) / (*c - 1) as f64).collect();
        let total: usize = counts.iter().product();

        let coord = |idx: &[usize]| -> Vec<f64> {
            (0..n)
                .map(|i| if idx[i] + 1 == counts[i] { bbox[i].1 } else { lo[i] + idx[i] as f64 * hs[i] })
                .collect()
        };
        let mut box_to_node = vec![None; total];
        let mut coords = Vec::new();
        let mut boxes = Vec::new();
        for b in 0..total {
            let idx = unravel(b, &counts);
            let x = coord(&idx);
            if domain.contains(&x) {
                box_to_node[b] = Some(coords.len());
                coords.push(x);
                boxes.push(b);
            }
        }
        let mut nodes = Vec::with_capacity(coords.len());
        for (k, x) in coords.into_iter().enumerate() {
            let idx = unravel(boxes[k], &counts);
            let mut neighbors = Vec::with_capacity(2 * n);
            for i in 0..n {
                for step in [-1i64, 1] {
                    let j = idx[i] as i64 + step;
                    let nb = if j < 0 || j >= counts[i] as i64 {
                        None
                    } else {
                        let mut other = idx.clone();
                        other[i] = j as usize;
                        box_to_node[ravel(&other, &counts)]
                    };
                    neighbors.push(nb);
                }
            }
            let boundary = neighbors.iter().any(|nb| nb.is_none());
            let (kind, normal, ghost) = if boundary {
                let normal = domain.boundary_normal(&x);
                let ghost = (0..2 * n)
                    .map(|s| {
                        if neighbors[s].is_some() {
                            0.0
                        } else {
                            let sign = if s % 2 == 0 { -1.0 } else { 1.0 };
                            (-sign * normal[s / 2]).max(0.0)
                        }
                    })
                    .collect();
                (NodeKind::Boundary, Some(normal), ghost)
            } else {
                (NodeKind::Interior, None, vec![0.0; 2 * n])
            };
            nodes.push(Node { x, kind, neighbors, ghost, normal });
        }
        let interior = nodes.iter().filter(|n| n.kind == NodeKind::Interior).count();
        if interior == 0 || interior == nodes.len() {
            return Err(Error::invalid(format!("mesh width {h} leaves no interior or no boundary nodes")));
        }

        let mut fill = vec![usize::MAX; total];
        let mut queue = VecDeque::new();
        for (b, node) in box_to_node.iter().enumerate() {
            if let Some(k) = node {
                fill[b] = *k;
                queue.push_back(b);
            }
        }
        while let Some(b) = queue.pop_front() {
            let idx = unravel(b, &counts);
            for i in 0..n {
                for step in [-1i64, 1] {
                    let j = idx[i] as i64 + step;
                    if j < 0 || j >= counts[i] as i64 {
                        continue;
                    }
                    let mut other = idx.clone();
                    other[i] = j as usize;
                    let o = ravel(&other, &counts);
                    if fill[o] == usize::MAX {
                        fill[o] = fill[b];
                        queue.push_back(o);
                    }
                }
            }
        }
        Ok(Mesh { lo, h: hs, counts, nodes, box_to_node, fill })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Spacing per axis.
    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn max_h(&self) -> f64 {
        self.h.iter().cloned().fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    /// In-domain node at box multi-index `idx`, if any.
    pub fn node_at(&self, idx: &[usize]) -> Option<usize> {
        if idx.len() != self.dim() || idx.iter().zip(&self.counts).any(|(i, c)| i >= c) {
            return None;
        }
        self.box_to_node[ravel(idx, &self.counts)]
    }

    /// Node whose coordinates equal `x` within `1e-9`.
    pub fn find(&self, x: &[f64]) -> Option<usize> {
        let idx: Vec<usize> = (0..self.dim())
            .map(|i| ((x[i] - self.lo[i]) / self.h[i]).round().max(0.0) as usize)
            .collect();
        let k = self.node_at(&idx)?;
        let close = self.nodes[k].x.iter().zip(x).all(|(a, b)| (a - b).abs() <= 1e-9);
        close.then_some(k)
    }

    pub fn info(&self) -> MeshInfo {
        let boundary = self.nodes.iter().filter(|n| n.kind == NodeKind::Boundary).count();
        MeshInfo {
            dimension: self.dim(),
            lo: self.lo.clone(),
            h: self.h.clone(),
            counts: self.counts.clone(),
            nodes: self.nodes.len(),
            interior: self.nodes.len() - boundary,
            boundary,
        }
    }

    /// Multilinear interpolation of nodal `values` at `x` (clamped to the
    /// bounding box). Box corners outside the domain take the value of the
    /// nearest in-domain node.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        let mut acc = 0.0;
        self.for_each_corner(x, |k, w| acc += w * values[k]);
        acc
    }

    /// Node indices and weights of [`Mesh::interpolate`] at `x`.
    pub fn stencil(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity(1 << self.dim());
        self.for_each_corner(x, |k, w| out.push((k, w)));
        out
    }

    fn for_each_corner(&self, x: &[f64], mut visit: impl FnMut(usize, f64)) {
        let n = self.dim();
        let mut base = [0usize; MAX_DIM];
        let mut w = [0.0f64; MAX_DIM];
        for i in 0..n {
            let mut q = ((x[i] - self.lo[i]) / self.h[i]).clamp(0.0, (self.counts[i] - 1) as f64);
            if (q - q.round()).abs() < 1e-9 {
                q = q.round();
            }
            let i0 = (q.floor() as usize).min(self.counts[i] - 2);
            base[i] = i0;
            w[i] = (q - i0 as f64).clamp(0.0, 1.0);
        }
        let mut idx = [0usize; MAX_DIM];
        for corner in 0..(1usize << n) {
            let mut weight = 1.0;
            for i in 0..n {
                let up = (corner >> i) & 1 == 1;
                idx[i] = base[i] + up as usize;
                weight *= if up { w[i] } else { 1.0 - w[i] };
            }
            if weight != 0.0 {
                visit(self.fill[ravel(&idx[..n], &self.counts)], weight);
            }
        }
    }
}

fn unravel(mut b: usize, counts: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; counts.len()];
    for i in (0..counts.len()).rev() {
        idx[i] = b % counts[i];
        b /= counts[i];
    }
    idx
}

fn ravel(idx: &[usize], counts: &[usize]) -> usize {
    idx.iter().zip(counts).fold(0, |acc, (i, c)| acc * c + i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_mesh_hits_endpoints() {
        let mesh = Mesh::new(&Domain::interval(), 0.01).unwrap();
        assert_eq!(mesh.len(), 201);
        assert_eq!(mesh.node(0).x, vec![-1.0]);
        assert_eq!(mesh.node(200).x, vec![1.0]);
        assert_eq!(mesh.node(0).kind, NodeKind::Boundary);
        assert_eq!(mesh.node(100).kind, NodeKind::Interior);
        assert_eq!(mesh.node(0).ghost, vec![1.0, 0.0]);
        assert_eq!(mesh.node(200).ghost, vec![0.0, 1.0]);
        assert_eq!(mesh.find(&[0.0]), Some(100));
        assert_eq!(mesh.find(&[0.9]), Some(190));
    }

    #[test]
    fn disk_mesh_tags_outer_ring() {
        let mesh = Mesh::new(&Domain::ball(2, 1.0).unwrap(), 0.1).unwrap();
        let info = mesh.info();
        assert!(info.interior > 0 && info.boundary > 0);
        for node in mesh.nodes() {
            let r = (node.x[0].powi(2) + node.x[1].powi(2)).sqrt();
            if node.kind == NodeKind::Boundary {
                assert!(r > 0.8, "{:?}", node.x);
                let normal = node.normal.as_ref().unwrap();
                assert!((normal[0] + node.x[0] / r).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn interpolation_is_exact_for_affine_data() {
        let mesh = Mesh::new(&Domain::ball(2, 1.0).unwrap(), 0.1).unwrap();
        let values: Vec<f64> = mesh.nodes().iter().map(|n| 1.0 + 2.0 * n.x[0] - n.x[1]).collect();
        let v = mesh.interpolate(&values, &[0.123, -0.377]);
        assert!((v - (1.0 + 0.246 + 0.377)).abs() < 1e-12);
    }

    #[test]
    fn dimension_cap() {
        assert!(Mesh::new(&Domain::ball(4, 1.0).unwrap(), 0.5).is_err());
    }
}
