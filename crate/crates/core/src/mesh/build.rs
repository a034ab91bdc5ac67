//! Mesh generators: graded polar disks, extruded cracked balls, notched disks
//! for the approximating problems, and slit spheres.
//!
//! All generators place nodes on rings that contain the crack direction
//! (angle 0), and connect consecutive rings with a zipper triangulation so the
//! crack is a union of mesh edges or facets.

use std::f64::consts::PI;

use super::Mesh;
use crate::error::{Error, Result};
use crate::geometry::smoothed::SmoothedDomain;
use crate::geometry::Vec3;

const MODULE: &str = "solver";

/// A ring of nodes described by polar angles in increasing order.
#[derive(Debug, Clone)]
struct Ring {
    ids: Vec<usize>,
    angles: Vec<f64>,
    closed: bool,
}

impl Ring {
    /// Vertex sequence traversed by the zipper: closed rings repeat the first
    /// node at angle `2π`.
    fn sequence(&self) -> (Vec<usize>, Vec<f64>) {
        let mut ids = self.ids.clone();
        let mut ang = self.angles.clone();
        if self.closed {
            ids.push(self.ids[0]);
            ang.push(self.angles[0] + 2.0 * PI);
        }
        (ids, ang)
    }
}

/// Triangulate the strip between two rings.
fn zipper(a: &Ring, b: &Ring, out: &mut Vec<[usize; 4]>) {
    let (ia, aa) = a.sequence();
    let (ib, ab) = b.sequence();
    let (mut i, mut j) = (0usize, 0usize);
    while i + 1 < ia.len() || j + 1 < ib.len() {
        let advance_a = if i + 1 == ia.len() {
            false
        } else if j + 1 == ib.len() {
            true
        } else {
            // advance along the ring whose next node comes first in angle
            aa[i + 1] <= ab[j + 1]
        };
        if advance_a {
            out.push([ia[i], ia[i + 1], ib[j], usize::MAX]);
            i += 1;
        } else {
            out.push([ia[i], ib[j + 1], ib[j], usize::MAX]);
            j += 1;
        }
    }
}

/// Fan triangles between a single centre node and a closed ring.
fn fan(center: usize, ring: &Ring, out: &mut Vec<[usize; 4]>) {
    let (ids, _) = ring.sequence();
    for w in ids.windows(2) {
        out.push([center, w[0], w[1], usize::MAX]);
    }
}

fn closed_ring_angles(n: usize) -> Vec<f64> {
    (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect()
}

/// Radii of a ring family graded toward the centre: `R (i/n)^grading`.
fn graded_radii(radius: f64, n: usize, grading: f64) -> Vec<f64> {
    (1..=n).map(|i| radius * (i as f64 / n as f64).powf(grading)).collect()
}

/// Node count of a ring of radius `rho` whose radial spacing is `dr`.
fn ring_count(rho: f64, dr: f64, arc: f64) -> usize {
    ((arc * rho / dr).round() as usize).max(6)
}

/// Geometric parameters of polar meshes.
#[derive(Debug, Clone, Copy)]
pub struct PolarParams {
    pub radius: f64,
    /// Target mesh width on the outer boundary.
    pub h: f64,
    /// Radial grading exponent (1 gives uniform rings).
    pub grading: f64,
}

impl PolarParams {
    fn validate(&self) -> Result<usize> {
        if !(self.radius > 0.0 && self.h > 0.0 && self.h < self.radius && self.grading >= 1.0) {
            return Err(Error::precondition(MODULE, format!("invalid mesh parameters {self:?}")));
        }
        Ok(((self.grading * self.radius / self.h).ceil() as usize).max(2))
    }
}

/// Graded polar mesh of the disk with the crack along the positive first axis.
/// Crack nodes are shared by both crack faces; all of them carry a
/// homogeneous Dirichlet condition.
pub fn cracked_disk(p: PolarParams) -> Result<Mesh> {
    let n = p.validate()?;
    let radii = graded_radii(p.radius, n, p.grading);
    let mut nodes = vec![Vec3::zeros()];
    let mut crack = vec![true];
    let mut boundary = vec![false];
    let mut cells = Vec::new();
    let mut prev: Option<Ring> = None;
    let mut prev_r = 0.0;
    for (i, &rho) in radii.iter().enumerate() {
        let count = ring_count(rho, rho - prev_r, 2.0 * PI);
        let angles = closed_ring_angles(count);
        let mut ids = Vec::with_capacity(count);
        for (k, &t) in angles.iter().enumerate() {
            ids.push(nodes.len());
            let pt = if k == 0 { Vec3::new(rho, 0.0, 0.0) } else { Vec3::new(rho * t.cos(), rho * t.sin(), 0.0) };
            nodes.push(pt);
            crack.push(k == 0);
            boundary.push(i + 1 == radii.len());
        }
        let ring = Ring { ids, angles, closed: true };
        match &prev {
            None => fan(0, &ring, &mut cells),
            Some(a) => zipper(a, &ring, &mut cells),
        }
        prev = Some(ring);
        prev_r = rho;
    }
    let mut mesh = Mesh { dim: 2, cell_dim: 2, nodes, cells, crack, boundary, radius: p.radius };
    mesh.orient();
    Ok(mesh)
}

/// Graded polar mesh of `B_r ∩ {x_1 < f_n(x_2)}` for the smoothed domain: rings
/// outside the notch tip are arcs avoiding the notch, and the wall nodes carry
/// the homogeneous Dirichlet condition.
pub fn notched_disk(domain: &SmoothedDomain, h: f64, grading: f64) -> Result<Mesh> {
    if domain.geometry.dim != 2 {
        return Err(Error::precondition(MODULE, "notched meshes are generated in dimension 2"));
    }
    let p = PolarParams { radius: domain.radius, h, grading };
    let n = p.validate()?;
    let tip = 1.0 / domain.n as f64;
    if tip >= domain.radius {
        return Err(Error::precondition(MODULE, "notch tip lies outside the ball"));
    }
    let mut radii = graded_radii(p.radius, n, p.grading);
    let j = radii.iter().position(|&r| r >= tip).unwrap_or(radii.len() - 1);
    let spacing = if j == 0 { radii[0] } else { radii[j] - radii[j - 1] };
    radii.retain(|&r| (r - tip).abs() >= 0.3 * spacing);
    radii.push(tip);
    radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut nodes = vec![Vec3::zeros()];
    let mut crack = vec![false];
    let mut boundary = vec![false];
    let mut cells = Vec::new();
    let mut prev: Option<Ring> = None;
    let mut prev_r = 0.0;
    let last = radii.len() - 1;
    for (i, &rho) in radii.iter().enumerate() {
        let dr = rho - prev_r;
        let gap = domain.angular_gap(rho);
        let (angles, closed) = if rho <= tip * (1.0 + 1e-12) {
            (closed_ring_angles(ring_count(rho, dr, 2.0 * PI)), true)
        } else {
            let arc = 2.0 * PI - 2.0 * gap;
            let count = ring_count(rho, dr, arc).max(4);
            let ang: Vec<f64> = (0..=count).map(|k| gap + arc * k as f64 / count as f64).collect();
            (ang, false)
        };
        let mut ids = Vec::with_capacity(angles.len());
        let nang = angles.len();
        for (k, &t) in angles.iter().enumerate() {
            ids.push(nodes.len());
            nodes.push(Vec3::new(rho * t.cos(), rho * t.sin(), 0.0));
            let wall = if closed { (rho - tip).abs() <= 1e-12 * p.radius && k == 0 } else { k == 0 || k + 1 == nang };
            crack.push(wall);
            boundary.push(i == last);
        }
        let ring = Ring { ids, angles, closed };
        match &prev {
            None => fan(0, &ring, &mut cells),
            Some(a) => zipper(a, &ring, &mut cells),
        }
        prev = Some(ring);
        prev_r = rho;
    }
    let mut mesh = Mesh { dim: 2, cell_dim: 2, nodes, cells, crack, boundary, radius: p.radius };
    mesh.orient();
    Ok(mesh)
}

/// Parameters of the three-dimensional cracked ball mesh.
#[derive(Debug, Clone, Copy)]
pub struct BallParams {
    pub polar: PolarParams,
    /// Exponent clustering the axial layers toward the plane `x_1 = 0`.
    pub axial_grading: f64,
}

/// Mesh of the ball in `R^3` with the crack `{x_3 = 0, x_2 >= 0}`: the graded
/// polar mesh of the cross-section is extruded along `x_1` into prisms, each
/// split into three tetrahedra by the global vertex ordering (which keeps the
/// mesh conforming), and the cylinder is mapped onto the ball in the meridional
/// plane by `p -> p |p|_∞ / |p|_2`.
pub fn cracked_ball(p: BallParams) -> Result<Mesh> {
    let radius = p.polar.radius;
    if !(p.axial_grading >= 1.0) {
        return Err(Error::precondition(MODULE, "axial grading must be at least 1"));
    }
    let unit = cracked_disk(PolarParams { radius: 1.0, h: p.polar.h / radius, grading: p.polar.grading })?;
    let m = ((2.0 * p.axial_grading * radius / p.polar.h).ceil() as usize).max(2);
    let m = m + (m % 2);
    let layers: Vec<f64> = (0..=m)
        .map(|j| {
            let s = -1.0 + 2.0 * j as f64 / m as f64;
            if s == 0.0 {
                0.0
            } else {
                s.signum() * s.abs().powf(p.axial_grading)
            }
        })
        .collect();
    let np = unit.nodes.len();
    let mut nodes = Vec::with_capacity(np * layers.len());
    let mut crack = Vec::with_capacity(np * layers.len());
    let mut boundary = Vec::with_capacity(np * layers.len());
    for (j, &z) in layers.iter().enumerate() {
        for q in 0..np {
            let c = unit.nodes[q];
            let rho = (c[0] * c[0] + c[1] * c[1]).sqrt();
            let l2 = (z * z + rho * rho).sqrt();
            let s = if l2 == 0.0 { 1.0 } else { z.abs().max(rho) / l2 };
            let mut x = Vec3::new(z * s * radius, c[0] * s * radius, c[1] * s * radius);
            if unit.crack[q] {
                x[2] = 0.0;
            }
            nodes.push(x);
            crack.push(unit.crack[q]);
            boundary.push(unit.boundary[q] || j == 0 || j + 1 == layers.len());
        }
    }
    let mut cells = Vec::with_capacity(3 * m * unit.cells.len());
    for j in 0..m {
        for tri in &unit.cells {
            let mut t = [tri[0], tri[1], tri[2]];
            t.sort_unstable();
            let lo = |q: usize| j * np + q;
            let hi = |q: usize| (j + 1) * np + q;
            let (a, b, c) = (t[0], t[1], t[2]);
            cells.push([lo(a), lo(b), lo(c), hi(c)]);
            cells.push([lo(a), lo(b), hi(b), hi(c)]);
            cells.push([lo(a), hi(a), hi(b), hi(c)]);
        }
    }
    let mut mesh = Mesh { dim: 3, cell_dim: 3, nodes, cells, crack, boundary, radius };
    mesh.orient();
    Ok(mesh)
}

/// Surface mesh of the unit sphere `S^2` with latitude rings graded toward the
/// poles, every ring containing the slit meridian `t = 0`. Slit nodes and both
/// poles are flagged in `crack`.
pub fn slit_sphere(rings: usize) -> Result<Mesh> {
    if rings < 4 {
        return Err(Error::precondition("spectral", "slit sphere needs at least 4 latitude rings"));
    }
    let grade = |s: f64| {
        let a = s * s;
        let b = (1.0 - s) * (1.0 - s);
        PI * a / (a + b)
    };
    let thetas: Vec<f64> = (0..=rings).map(|i| grade(i as f64 / rings as f64)).collect();
    let mut nodes = vec![Vec3::new(1.0, 0.0, 0.0)];
    let mut crack = vec![true];
    let mut cells = Vec::new();
    let mut prev: Option<Ring> = None;
    for i in 1..rings {
        let th = thetas[i];
        let dth = 0.5 * (thetas[i + 1] - thetas[i - 1]);
        let count = ring_count(th.sin(), dth, 2.0 * PI);
        let angles = closed_ring_angles(count);
        let (st, ct) = th.sin_cos();
        let mut ids = Vec::with_capacity(count);
        for (k, &t) in angles.iter().enumerate() {
            ids.push(nodes.len());
            let pt = if k == 0 { Vec3::new(ct, st, 0.0) } else { Vec3::new(ct, st * t.cos(), st * t.sin()) };
            nodes.push(pt);
            crack.push(k == 0);
        }
        let ring = Ring { ids, angles, closed: true };
        match &prev {
            None => fan(0, &ring, &mut cells),
            Some(a) => zipper(a, &ring, &mut cells),
        }
        prev = Some(ring);
    }
    let south = nodes.len();
    nodes.push(Vec3::new(-1.0, 0.0, 0.0));
    crack.push(true);
    if let Some(r) = &prev {
        fan(south, r, &mut cells);
    }
    let boundary = vec![false; nodes.len()];
    Ok(Mesh { dim: 3, cell_dim: 2, nodes, cells, crack, boundary, radius: 1.0 })
}

/// Mesh of the unit circle `S^1` cut at angle 0: nodes at equally spaced
/// angles, with both ends of the cut identified with the node at angle 0.
pub fn slit_circle(n: usize) -> Result<Mesh> {
    if n < 4 {
        return Err(Error::precondition("spectral", "slit circle needs at least 4 nodes"));
    }
    let nodes: Vec<Vec3> =
        closed_ring_angles(n).iter().enumerate().map(|(k, &t)| if k == 0 { Vec3::new(1.0, 0.0, 0.0) } else { Vec3::new(t.cos(), t.sin(), 0.0) }).collect();
    let cells = (0..n).map(|k| [k, (k + 1) % n, usize::MAX, usize::MAX]).collect();
    let mut crack = vec![false; n];
    crack[0] = true;
    Ok(Mesh { dim: 2, cell_dim: 1, nodes, cells, crack, boundary: vec![false; n], radius: 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CrackGeometry;

    #[test]
    fn cracked_disk_is_valid() {
        let m = cracked_disk(PolarParams { radius: 1.0, h: 0.1, grading: 2.0 }).unwrap();
        let q = m.quality();
        assert_eq!(q.inverted, 0);
        let area: f64 = (0..m.num_cells()).map(|c| m.signed_volume(c)).sum();
        assert!((area - PI).abs() < 0.02, "area {area}");
        // crack is the chain of edges from the centre to the boundary
        assert_eq!(m.crack_euler_characteristic(), 1);
        for (i, p) in m.nodes.iter().enumerate() {
            if m.crack[i] {
                assert_eq!(p[1], 0.0);
                assert!(p[0] >= 0.0);
            }
        }
    }

    #[test]
    fn cracked_ball_is_conforming() {
        let m = cracked_ball(BallParams { polar: PolarParams { radius: 1.0, h: 0.25, grading: 2.0 }, axial_grading: 1.0 }).unwrap();
        let q = m.quality();
        assert_eq!(q.inverted, 0);
        // every interior face is shared by exactly two cells
        let mut faces = std::collections::HashMap::new();
        for c in 0..m.num_cells() {
            let v = m.verts(c);
            for s in 0..4 {
                let mut f: Vec<usize> = (0..4).filter(|&i| i != s).map(|i| v[i]).collect();
                f.sort_unstable();
                *faces.entry(f).or_insert(0) += 1;
            }
        }
        assert!(faces.values().all(|&k| k <= 2));
        for (f, k) in &faces {
            if *k == 1 {
                assert!(f.iter().all(|&i| m.boundary[i]), "unmatched interior face");
            }
        }
        assert_eq!(m.crack_euler_characteristic(), 1);
        let vol: f64 = (0..m.num_cells()).map(|c| m.signed_volume(c)).sum();
        assert!((vol - 4.0 * PI / 3.0).abs() < 0.15, "volume {vol}");
    }

    #[test]
    fn slit_sphere_covers_sphere() {
        let m = slit_sphere(40).unwrap();
        let area: f64 = (0..m.num_cells()).map(|c| m.cell_geometry(c).volume).sum();
        assert!((area - 4.0 * PI).abs() < 0.01 * 4.0 * PI, "area {area}");
    }

    #[test]
    fn notched_disk_avoids_notch() {
        let dom = SmoothedDomain::new(&CrackGeometry::flat(2), 8, 0.5).unwrap();
        let m = notched_disk(&dom, 0.05, 2.0).unwrap();
        assert_eq!(m.quality().inverted, 0);
        for c in 0..m.num_cells() {
            let cen = m.verts(c).iter().map(|&i| m.nodes[i]).sum::<Vec3>() / 3.0;
            assert!(cen[0] < crate::geometry::smoothed::notch_profile(8, cen[1]) + 1e-9);
        }
    }
}
