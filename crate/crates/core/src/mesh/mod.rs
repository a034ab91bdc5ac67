//! Simplicial meshes: storage, element geometry, quality checks, point
//! location and text serialisation.

pub mod build;
pub mod io;

use rstar::{RTree, RTreeObject, AABB};
use serde::Serialize;

use crate::geometry::Vec3;

/// A simplicial mesh embedded in `R^dim` (points stored as padded 3-vectors).
#[derive(Debug, Clone)]
pub struct Mesh {
    pub dim: usize,
    /// Topological dimension of the cells (1, 2 or 3).
    pub cell_dim: usize,
    pub nodes: Vec<Vec3>,
    /// Cell vertex indices; entries beyond `cell_dim` are unused.
    pub cells: Vec<[usize; 4]>,
    /// Nodes carrying a homogeneous Dirichlet condition (crack or notch wall).
    pub crack: Vec<bool>,
    /// Nodes on the outer boundary.
    pub boundary: Vec<bool>,
    pub radius: f64,
}

/// Volume and barycentric gradients of a cell.
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry {
    pub volume: f64,
    pub grads: [Vec3; 4],
}

/// Summary of mesh quality.
#[derive(Debug, Clone, Serialize)]
pub struct MeshQuality {
    pub nodes: usize,
    pub cells: usize,
    pub min_volume: f64,
    pub inverted: usize,
    pub max_aspect: f64,
    pub crack_nodes: usize,
    pub boundary_nodes: usize,
}

impl Mesh {
    pub fn verts(&self, c: usize) -> &[usize] {
        &self.cells[c][..=self.cell_dim]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// Volume and barycentric gradients of cell `c`, valid for cells embedded
    /// in a higher-dimensional space as well.
    pub fn cell_geometry(&self, c: usize) -> CellGeometry {
        simplex_geometry(&self.verts(c).iter().map(|&i| self.nodes[i]).collect::<Vec<_>>())
    }

    /// Signed volume for full-dimensional cells.
    pub fn signed_volume(&self, c: usize) -> f64 {
        let v = self.verts(c);
        let p = |i: usize| self.nodes[v[i]];
        match (self.dim, self.cell_dim) {
            (2, 2) => {
                let e1 = p(1) - p(0);
                let e2 = p(2) - p(0);
                0.5 * (e1[0] * e2[1] - e1[1] * e2[0])
            }
            (3, 3) => (p(1) - p(0)).cross(&(p(2) - p(0))).dot(&(p(3) - p(0))) / 6.0,
            _ => self.cell_geometry(c).volume,
        }
    }

    /// Flip cells with negative orientation.
    pub fn orient(&mut self) {
        for c in 0..self.cells.len() {
            if self.cell_dim == self.dim && self.signed_volume(c) < 0.0 {
                self.cells[c].swap(0, 1);
            }
        }
    }

    pub fn quality(&self) -> MeshQuality {
        let mut min_volume = f64::INFINITY;
        let mut inverted = 0;
        let mut max_aspect: f64 = 0.0;
        for c in 0..self.cells.len() {
            let vol = if self.cell_dim == self.dim { self.signed_volume(c) } else { self.cell_geometry(c).volume };
            if vol <= 0.0 {
                inverted += 1;
            }
            min_volume = min_volume.min(vol);
            let v = self.verts(c);
            let mut longest: f64 = 0.0;
            for i in 0..v.len() {
                for j in (i + 1)..v.len() {
                    longest = longest.max((self.nodes[v[i]] - self.nodes[v[j]]).norm());
                }
            }
            // ratio of longest edge to the equivalent-size edge
            let k = self.cell_dim as i32;
            let size = (vol.abs() * factorial(self.cell_dim)).powf(1.0 / k as f64);
            if size > 0.0 {
                max_aspect = max_aspect.max(longest / size);
            } else {
                max_aspect = f64::INFINITY;
            }
        }
        MeshQuality {
            nodes: self.nodes.len(),
            cells: self.cells.len(),
            min_volume,
            inverted,
            max_aspect,
            crack_nodes: self.crack.iter().filter(|&&b| b).count(),
            boundary_nodes: self.boundary.iter().filter(|&&b| b).count(),
        }
    }

    /// Faces of the cells (sorted vertex lists) lying entirely on crack nodes.
    pub fn crack_facets(&self) -> Vec<Vec<usize>> {
        let mut facets = std::collections::BTreeSet::new();
        for c in 0..self.cells.len() {
            let v = self.verts(c);
            for skip in 0..v.len() {
                let mut f: Vec<usize> = v.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, &x)| x).collect();
                if f.iter().all(|&i| self.crack[i]) {
                    f.sort_unstable();
                    facets.insert(f);
                }
            }
        }
        facets.into_iter().collect()
    }

    /// Euler characteristic `V - E + F` of the crack facet complex.
    pub fn crack_euler_characteristic(&self) -> i64 {
        let facets = self.crack_facets();
        let mut verts = std::collections::BTreeSet::new();
        let mut edges = std::collections::BTreeSet::new();
        for f in &facets {
            for (i, &a) in f.iter().enumerate() {
                verts.insert(a);
                for &b in &f[i + 1..] {
                    edges.insert((a.min(b), a.max(b)));
                }
            }
        }
        if self.cell_dim == 3 {
            verts.len() as i64 - edges.len() as i64 + facets.len() as i64
        } else {
            verts.len() as i64 - facets.len() as i64
        }
    }

    /// Local mesh width near radius `r`: the longest edge among cells meeting
    /// the sphere of radius `r`.
    pub fn local_width(&self, r: f64) -> f64 {
        let mut h: f64 = 0.0;
        for c in 0..self.cells.len() {
            let v = self.verts(c);
            let norms: Vec<f64> = v.iter().map(|&i| self.nodes[i].norm()).collect();
            let lo = norms.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = norms.iter().cloned().fold(0.0, f64::max);
            if lo <= r && hi >= r {
                for i in 0..v.len() {
                    for j in (i + 1)..v.len() {
                        h = h.max((self.nodes[v[i]] - self.nodes[v[j]]).norm());
                    }
                }
            }
        }
        h
    }

    /// Interpolate a function at the nodes.
    pub fn interpolate(&self, f: impl Fn(&Vec3) -> f64) -> Vec<f64> {
        self.nodes.iter().map(f).collect()
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product::<f64>().max(1.0)
}

/// Volume and barycentric gradients of a simplex given its vertices.
pub fn simplex_geometry(p: &[Vec3]) -> CellGeometry {
    let k = p.len() - 1;
    let e: Vec<Vec3> = (1..=k).map(|i| p[i] - p[0]).collect();
    let g = nalgebra::DMatrix::from_fn(k, k, |i, j| e[i].dot(&e[j]));
    let det = g.determinant();
    let volume = det.max(0.0).sqrt() / factorial(k);
    let mut grads = [Vec3::zeros(); 4];
    if let Some(ginv) = g.try_inverse() {
        let mut sum = Vec3::zeros();
        for i in 0..k {
            let mut v = Vec3::zeros();
            for j in 0..k {
                v += e[j] * ginv[(j, i)];
            }
            grads[i + 1] = v;
            sum += v;
        }
        grads[0] = -sum;
    }
    CellGeometry { volume, grads }
}

/// Bounding box of one cell in the point-location tree.
#[derive(Debug, Clone)]
struct CellBox {
    cell: u32,
    envelope: AABB<[f64; 3]>,
}

impl RTreeObject for CellBox {
    type Envelope = AABB<[f64; 3]>;

    fn envelope(&self) -> Self::Envelope {
        self.envelope
    }
}

/// R*-tree over cell bounding boxes with cached inverse edge matrices.
#[derive(Debug, Clone)]
pub struct Locator {
    dim: usize,
    tree: RTree<CellBox>,
    inverse: Vec<nalgebra::Matrix3<f64>>,
}

impl Locator {
    pub fn new(mesh: &Mesh) -> Self {
        assert_eq!(mesh.cell_dim, mesh.dim, "point location needs full-dimensional cells");
        let dim = mesh.dim;
        let mut boxes = Vec::with_capacity(mesh.cells.len());
        let mut inverse = Vec::with_capacity(mesh.cells.len());
        for c in 0..mesh.cells.len() {
            let v = mesh.verts(c);
            let mut lo = [f64::INFINITY; 3];
            let mut hi = [f64::NEG_INFINITY; 3];
            for &n in v {
                for i in 0..3 {
                    lo[i] = lo[i].min(mesh.nodes[n][i]);
                    hi[i] = hi[i].max(mesh.nodes[n][i]);
                }
            }
            // pad so that points on shared faces hit both neighbours
            let pad = 1e-12 * (0..3).map(|i| hi[i] - lo[i]).fold(0.0, f64::max);
            for i in 0..3 {
                lo[i] -= pad;
                hi[i] += pad;
            }
            boxes.push(CellBox { cell: c as u32, envelope: AABB::from_corners(lo, hi) });
            let p0 = mesh.nodes[v[0]];
            let mut m = nalgebra::Matrix3::identity();
            for j in 0..dim {
                let e = mesh.nodes[v[j + 1]] - p0;
                for i in 0..dim {
                    m[(i, j)] = e[i];
                }
            }
            inverse.push(m.try_inverse().unwrap_or_else(nalgebra::Matrix3::zeros));
        }
        Locator { dim, tree: RTree::bulk_load(boxes), inverse }
    }

    /// Cell containing `x` and its barycentric coordinates.
    pub fn locate(&self, mesh: &Mesh, x: &Vec3) -> Option<(usize, [f64; 4])> {
        let probe = AABB::from_point([x[0], x[1], x[2]]);
        let mut best: Option<(usize, [f64; 4], f64)> = None;
        for cb in self.tree.locate_in_envelope_intersecting(&probe) {
            let c = cb.cell as usize;
            let v = mesh.verts(c);
            let rel = x - mesh.nodes[v[0]];
            let l = self.inverse[c] * rel;
            let mut bary = [0.0; 4];
            let mut s = 0.0;
            for j in 0..self.dim {
                bary[j + 1] = l[j];
                s += l[j];
            }
            bary[0] = 1.0 - s;
            let worst = bary[..=self.dim].iter().cloned().fold(f64::INFINITY, f64::min);
            if worst >= 0.0 {
                if best.as_ref().is_none_or(|b| b.2 < 0.0 || c < b.0) {
                    best = Some((c, bary, worst));
                }
                continue;
            }
            if best.as_ref().is_none_or(|b| b.2 < 0.0 && worst > b.2) {
                best = Some((c, bary, worst));
            }
        }
        match best {
            Some((c, bary, worst)) if worst > -1e-10 => Some((c, bary)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_geometry_of_reference_triangle() {
        let g = simplex_geometry(&[Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)]);
        assert!((g.volume - 0.5).abs() < 1e-15);
        assert!((g.grads[1] - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-14);
        assert!((g.grads[0] - Vec3::new(-1.0, -1.0, 0.0)).norm() < 1e-14);
        let t = simplex_geometry(&[Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)]);
        assert!((t.volume - 1.0 / 6.0).abs() < 1e-15);
    }
}
