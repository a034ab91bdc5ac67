//! Scalar fields on the cracked ball: piecewise-linear finite element fields
//! and closed-form fields, with sphere sampling and ball integration.

use std::sync::Arc;

use rayon::prelude::*;

use crate::geometry::{CrackGeometry, Vec3};
use crate::mesh::{Locator, Mesh};
use crate::quadrature::{gauss_legendre_interval, SimplexRule, SphereRule};
use crate::spectral::{to_vec3, SphereMode};

/// Integrand callback: `(x, value, gradient, out)` writes one value per component.
pub type Integrand<'a> = dyn Fn(&Vec3, f64, &Vec3, &mut [f64]) + Sync + 'a;

/// A scalar field on a ball of `R^d` (`d = 2, 3`).
pub trait Field: Sync {
    fn dim(&self) -> usize;

    /// Value and gradient at `x`; `None` outside the field's domain, where the
    /// field is extended by zero.
    fn eval(&self, x: &Vec3) -> Option<(f64, Vec3)>;

    /// Integrals of a multi-component integrand over the balls `B_r` for each
    /// radius (in increasing order). Returns one vector per radius.
    fn ball_integrals(&self, radii: &[f64], ncomp: usize, f: &Integrand) -> Vec<Vec<f64>>;

    /// Local resolution near the sphere of radius `r` (zero for exact fields).
    fn resolution(&self, r: f64) -> f64;

    /// Outer radius of the field's domain.
    fn radius(&self) -> f64;

    fn value(&self, x: &Vec3) -> f64 {
        self.eval(x).map_or(0.0, |(v, _)| v)
    }
}

/// Evaluate `f` at `r θ_q` for every node of the sphere rule and return the
/// weighted sum of each component (integral over the unit sphere).
pub fn sphere_integrals(field: &dyn Field, rule: &SphereRule, r: f64, ncomp: usize, f: &Integrand) -> Vec<f64> {
    let chunks: Vec<Vec<f64>> = rule
        .points
        .par_chunks(256)
        .zip(rule.weights.par_chunks(256))
        .map(|(pts, ws)| {
            let mut acc = vec![0.0; ncomp];
            let mut buf = vec![0.0; ncomp];
            for (p, w) in pts.iter().zip(ws) {
                let x = to_vec3(p) * r;
                let (v, g) = field.eval(&x).unwrap_or((0.0, Vec3::zeros()));
                buf.iter_mut().for_each(|b| *b = 0.0);
                f(&x, v, &g, &mut buf);
                for (a, b) in acc.iter_mut().zip(&buf) {
                    *a += w * b;
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; ncomp];
    for c in chunks {
        for (t, v) in total.iter_mut().zip(c) {
            *t += v;
        }
    }
    total
}

/// A field given in closed form.
pub struct ExactField {
    dim: usize,
    radius: f64,
    f: Box<dyn Fn(&Vec3) -> (f64, Vec3) + Sync + Send>,
    rule: SphereRule,
    radial_nodes: usize,
}

impl ExactField {
    pub fn new(dim: usize, radius: f64, f: impl Fn(&Vec3) -> (f64, Vec3) + Sync + Send + 'static) -> Self {
        ExactField { dim, radius, f: Box::new(f), rule: SphereRule::standard(dim - 1), radial_nodes: 48 }
    }

    pub fn with_rule(mut self, rule: SphereRule, radial_nodes: usize) -> Self {
        self.rule = rule;
        self.radial_nodes = radial_nodes;
        self
    }
}

impl Field for ExactField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &Vec3) -> Option<(f64, Vec3)> {
        Some((self.f)(x))
    }

    fn ball_integrals(&self, radii: &[f64], ncomp: usize, f: &Integrand) -> Vec<Vec<f64>> {
        // ∫_{B_r} F = ∫_0^r s^N ∫_{S^N} F(sθ) dθ ds with s = r u²
        let n = (self.dim - 1) as i32;
        let us = gauss_legendre_interval(self.radial_nodes, 0.0, 1.0);
        radii
            .iter()
            .map(|&r| {
                let mut total = vec![0.0; ncomp];
                for &(u, wu) in &us {
                    let s = r * u * u;
                    let jac = 2.0 * r * u * s.powi(n);
                    let inner = sphere_integrals(self, &self.rule, s, ncomp, f);
                    for (t, v) in total.iter_mut().zip(inner) {
                        *t += wu * jac * v;
                    }
                }
                total
            })
            .collect()
    }

    fn resolution(&self, _r: f64) -> f64 {
        0.0
    }

    fn radius(&self) -> f64 {
        self.radius
    }
}

/// The homogeneous field `scale · |x|^{k/2} Y(x/|x|)` as a closed-form field.
pub fn mode_field(mode: &SphereMode, sphere_dim: usize, radius: f64, scale: f64) -> ExactField {
    let mode = mode.clone();
    ExactField::new(sphere_dim + 1, radius, move |x: &Vec3| {
        let (v, g) = mode.eval_homogeneous(sphere_dim, x);
        (scale * v, g * scale)
    })
}

/// A straightened field `v` read in original coordinates: `u = v ∘ Ξ`.
///
/// Ball integrals change variables through `Φ`, so integrands always see the
/// original point, `u` and `∇u`. Points where the straightening map cannot be
/// inverted produce `NaN` contributions.
pub struct Pullback<'a> {
    field: &'a dyn Field,
    geometry: &'a CrackGeometry,
}

impl<'a> Pullback<'a> {
    pub fn new(field: &'a dyn Field, geometry: &'a CrackGeometry) -> Self {
        Pullback { field, geometry }
    }
}

impl Field for Pullback<'_> {
    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn eval(&self, x: &Vec3) -> Option<(f64, Vec3)> {
        if self.geometry.is_flat() {
            return self.field.eval(x);
        }
        let (v, g) = self.field.eval(&self.geometry.xi(x))?;
        Some((v, self.geometry.jac_xi(x).transpose() * g))
    }

    fn ball_integrals(&self, radii: &[f64], ncomp: usize, f: &Integrand) -> Vec<Vec<f64>> {
        if self.geometry.is_flat() {
            return self.field.ball_integrals(radii, ncomp, f);
        }
        let geometry = self.geometry;
        let pulled = move |y: &Vec3, v: f64, g: &Vec3, out: &mut [f64]| match geometry.coefficients(y) {
            Ok(c) => {
                f(&c.phi, v, &(c.jxi.transpose() * g), out);
                out.iter_mut().for_each(|o| *o *= c.w);
            }
            Err(_) => out.iter_mut().for_each(|o| *o = f64::NAN),
        };
        self.field.ball_integrals(radii, ncomp, &pulled)
    }

    fn resolution(&self, r: f64) -> f64 {
        self.field.resolution(r)
    }

    fn radius(&self) -> f64 {
        self.field.radius()
    }
}

/// A piecewise-linear field on a simplicial mesh.
pub struct MeshField {
    pub mesh: Arc<Mesh>,
    pub values: Vec<f64>,
    grads: Vec<Vec3>,
    locator: Locator,
    rule: SimplexRule,
    sub_rule: SimplexRule,
    cut_depth: usize,
    inscribed: f64,
}

impl MeshField {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), mesh.num_nodes());
        let grads = (0..mesh.num_cells())
            .map(|c| {
                let g = mesh.cell_geometry(c);
                mesh.verts(c).iter().enumerate().map(|(a, &i)| g.grads[a] * values[i]).sum()
            })
            .collect();
        let locator = Locator::new(&mesh);
        let rule = SimplexRule::collapsed(mesh.dim, 2);
        let sub_rule = SimplexRule::degree2(mesh.dim);
        let cut_depth = if mesh.dim == 2 { 5 } else { 3 };
        let inscribed = inscribed_radius(&mesh);
        MeshField { mesh, values, grads, locator, rule, sub_rule, cut_depth, inscribed }
    }

    pub fn cell_gradient(&self, c: usize) -> Vec3 {
        self.grads[c]
    }

    /// Integrate over the part of a sub-simplex inside `B_r` by recursive red
    /// refinement; `bary` holds the parent barycentrics of the sub-vertices.
    #[allow(clippy::too_many_arguments)]
    fn integrate_cut(&self, cell: usize, pts: &[Vec3; 4], bary: &[[f64; 4]; 4], r: f64, depth: usize, f: &Integrand, out: &mut [f64], buf: &mut [f64]) {
        let n = self.mesh.dim + 1;
        let mut hi: f64 = 0.0;
        let mut cen = Vec3::zeros();
        for p in &pts[..n] {
            hi = hi.max(p.norm());
            cen += p;
        }
        cen /= n as f64;
        let spread = pts[..n].iter().map(|p| (p - cen).norm()).fold(0.0, f64::max);
        if cen.norm() - spread >= r {
            return;
        }
        if hi <= r {
            let vol = simplex_volume(&pts[..n]);
            self.integrate_simplex(cell, &pts[..n], &bary[..n], vol, &self.sub_rule, f, out, buf);
            return;
        }
        if depth == 0 || spread <= CUT_LEAF * r {
            if cen.norm() < r {
                let vol = simplex_volume(&pts[..n]);
                let centre = [1.0 / n as f64; 4];
                self.integrate_point(cell, &pts[..n], &bary[..n], &centre[..n], vol, f, out, buf);
            }
            return;
        }
        let children = red_children(self.mesh.dim);
        let mut all_p = [Vec3::zeros(); 10];
        let mut all_b = [[0.0; 4]; 10];
        all_p[..n].copy_from_slice(&pts[..n]);
        all_b[..n].copy_from_slice(&bary[..n]);
        let mut k = n;
        for a in 0..n {
            for c in (a + 1)..n {
                all_p[k] = (pts[a] + pts[c]) * 0.5;
                for i in 0..4 {
                    all_b[k][i] = 0.5 * (bary[a][i] + bary[c][i]);
                }
                k += 1;
            }
        }
        for child in children {
            let mut cp = [Vec3::zeros(); 4];
            let mut cb = [[0.0; 4]; 4];
            for (j, &i) in child.iter().take(n).enumerate() {
                cp[j] = all_p[i];
                cb[j] = all_b[i];
            }
            self.integrate_cut(cell, &cp, &cb, r, depth - 1, f, out, buf);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn integrate_simplex(&self, cell: usize, pts: &[Vec3], bary: &[[f64; 4]], vol: f64, rule: &SimplexRule, f: &Integrand, out: &mut [f64], buf: &mut [f64]) {
        for (lb, w) in rule.bary.iter().zip(&rule.weights) {
            self.integrate_point(cell, pts, bary, lb, w * vol, f, out, buf);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn integrate_point(&self, cell: usize, pts: &[Vec3], bary: &[[f64; 4]], lb: &[f64], weight: f64, f: &Integrand, out: &mut [f64], buf: &mut [f64]) {
        let verts = self.mesh.verts(cell);
        let mut x = Vec3::zeros();
        let mut pb = [0.0; 4];
        for (a, l) in lb.iter().enumerate() {
            x += pts[a] * *l;
            for i in 0..=self.mesh.dim {
                pb[i] += l * bary[a][i];
            }
        }
        let v: f64 = verts.iter().enumerate().map(|(i, &n)| pb[i] * self.values[n]).sum();
        buf.iter_mut().for_each(|b| *b = 0.0);
        f(&x, v, &self.grads[cell], buf);
        for (o, b) in out.iter_mut().zip(buf.iter()) {
            *o += weight * b;
        }
    }
}

/// Sub-simplices smaller than this fraction of the radius are not refined further.
const CUT_LEAF: f64 = 1.0 / 512.0;

fn simplex_volume(pts: &[Vec3]) -> f64 {
    crate::mesh::simplex_geometry(pts).volume
}

/// Children of the red refinement of a triangle (4) or tetrahedron (8), as
/// indices into the vertices followed by the edge midpoints in the order
/// `(0,1), (0,2), ..`.
fn red_children(dim: usize) -> &'static [[usize; 4]] {
    const TRI: [[usize; 4]; 4] = [[0, 3, 4, 0], [3, 1, 5, 0], [4, 5, 2, 0], [3, 5, 4, 0]];
    // midpoints: 4=(0,1) 5=(0,2) 6=(0,3) 7=(1,2) 8=(1,3) 9=(2,3)
    const TET: [[usize; 4]; 8] = [[0, 4, 5, 6], [4, 1, 7, 8], [5, 7, 2, 9], [6, 8, 9, 3], [4, 5, 6, 8], [4, 5, 7, 8], [5, 6, 8, 9], [5, 7, 8, 9]];
    if dim == 2 {
        &TRI
    } else {
        &TET
    }
}

impl Field for MeshField {
    fn dim(&self) -> usize {
        self.mesh.dim
    }

    fn eval(&self, x: &Vec3) -> Option<(f64, Vec3)> {
        let (c, bary) = self.locator.locate(&self.mesh, x)?;
        let verts = self.mesh.verts(c);
        // exact nodal values at vertices
        for (i, &n) in verts.iter().enumerate() {
            if bary[i] == 1.0 || self.mesh.nodes[n] == *x {
                return Some((self.values[n], self.grads[c]));
            }
        }
        let v = verts.iter().enumerate().map(|(i, &n)| bary[i] * self.values[n]).sum();
        Some((v, self.grads[c]))
    }

    fn ball_integrals(&self, radii: &[f64], ncomp: usize, f: &Integrand) -> Vec<Vec<f64>> {
        let nr = radii.len();
        let d = self.mesh.dim;
        let ncell = self.mesh.num_cells();
        let chunk = 2048;
        let starts: Vec<usize> = (0..ncell).step_by(chunk).collect();
        let partials: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = starts
            .par_iter()
            .map(|&s| {
                // full[i]: cells entirely inside B_{r_i} but not B_{r_{i-1}};
                // cut[i]: partial contributions to radius i
                let mut full = vec![vec![0.0; ncomp]; nr];
                let mut cut = vec![vec![0.0; ncomp]; nr];
                let mut buf = vec![0.0; ncomp];
                let mut tmp = vec![0.0; ncomp];
                for c in s..(s + chunk).min(ncell) {
                    let verts = self.mesh.verts(c);
                    let mut pts = [Vec3::zeros(); 4];
                    for (p, &i) in pts.iter_mut().zip(verts) {
                        *p = self.mesh.nodes[i];
                    }
                    let pts_used = &pts[..=d];
                    let hi = pts_used.iter().map(|p| p.norm()).fold(0.0, f64::max);
                    let cen: Vec3 = pts_used.iter().sum::<Vec3>() / (d + 1) as f64;
                    let spread = pts_used.iter().map(|p| (p - cen).norm()).fold(0.0, f64::max);
                    let lo = (cen.norm() - spread).max(0.0);
                    let first_full = radii.partition_point(|&r| r < hi);
                    if first_full < nr {
                        tmp.iter_mut().for_each(|t| *t = 0.0);
                        let vol = self.mesh.cell_geometry(c).volume;
                        self.integrate_simplex(c, pts_used, &IDENTITY_BARY[..=d], vol, &self.rule, f, &mut tmp, &mut buf);
                        for k in 0..ncomp {
                            full[first_full][k] += tmp[k];
                        }
                    }
                    let first_touch = radii.partition_point(|&r| r <= lo);
                    for (i, &r) in radii.iter().enumerate().take(first_full).skip(first_touch) {
                        tmp.iter_mut().for_each(|t| *t = 0.0);
                        self.integrate_cut(c, &pts, &IDENTITY_BARY, r, self.cut_depth, f, &mut tmp, &mut buf);
                        for k in 0..ncomp {
                            cut[i][k] += tmp[k];
                        }
                    }
                }
                (full, cut)
            })
            .collect();
        let mut full = vec![vec![0.0; ncomp]; nr];
        let mut cut = vec![vec![0.0; ncomp]; nr];
        for (pf, pc) in partials {
            for i in 0..nr {
                for k in 0..ncomp {
                    full[i][k] += pf[i][k];
                    cut[i][k] += pc[i][k];
                }
            }
        }
        let mut out = Vec::with_capacity(nr);
        let mut running = vec![0.0; ncomp];
        for i in 0..nr {
            for k in 0..ncomp {
                running[k] += full[i][k];
            }
            out.push((0..ncomp).map(|k| running[k] + cut[i][k]).collect());
        }
        out
    }

    fn resolution(&self, r: f64) -> f64 {
        self.mesh.local_width(r)
    }

    fn radius(&self) -> f64 {
        self.inscribed
    }
}

/// Distance from the origin to the nearest outer boundary facet, i.e. the
/// radius of the largest centred ball covered by the mesh.
fn inscribed_radius(mesh: &Mesh) -> f64 {
    let d = mesh.dim;
    let mut count: std::collections::HashMap<Vec<usize>, usize> = std::collections::HashMap::new();
    for c in 0..mesh.num_cells() {
        let v = mesh.verts(c);
        for skip in 0..=d {
            let mut f: Vec<usize> = (0..=d).filter(|&i| i != skip).map(|i| v[i]).collect();
            if f.iter().all(|&i| mesh.boundary[i]) {
                f.sort_unstable();
                *count.entry(f).or_insert(0) += 1;
            }
        }
    }
    let mut best = mesh.radius;
    for (f, n) in count {
        if n != 1 {
            continue;
        }
        let p: Vec<Vec3> = f.iter().map(|&i| mesh.nodes[i]).collect();
        let dist = if d == 2 {
            let e = p[1] - p[0];
            (p[0][0] * e[1] - p[0][1] * e[0]).abs() / e.norm()
        } else {
            let nrm = (p[1] - p[0]).cross(&(p[2] - p[0]));
            p[0].dot(&nrm).abs() / nrm.norm()
        };
        best = best.min(dist);
    }
    best
}

const IDENTITY_BARY: [[f64; 4]; 4] = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build::{cracked_ball, cracked_disk, BallParams, PolarParams};
    use std::f64::consts::PI;

    #[test]
    fn ball_areas_by_cut_integration() {
        let mesh = Arc::new(cracked_disk(PolarParams { radius: 1.0, h: 0.05, grading: 2.0 }).unwrap());
        let n = mesh.num_nodes();
        let field = MeshField::new(mesh, vec![1.0; n]);
        let radii = [0.013, 0.3, 0.7, 1.0];
        let v = field.ball_integrals(&radii, 2, &|x, v, _g, out| {
            out[0] = v;
            out[1] = x.norm_squared();
        });
        for (r, row) in radii.iter().zip(&v).take(3) {
            assert!((row[0] - PI * r * r).abs() < 2e-3 * PI * r * r, "r={r} {}", row[0]);
            assert!((row[1] - PI * r.powi(4) / 2.0).abs() < 5e-3 * PI * r.powi(4) / 2.0);
        }
    }

    #[test]
    fn exact_field_integrates_polynomials() {
        let f = ExactField::new(3, 1.0, |x: &Vec3| (x.norm_squared(), x * 2.0));
        let v = f.ball_integrals(&[0.5, 1.0], 2, &|_x, v, g, out| {
            out[0] = 1.0;
            out[1] = v + g.norm_squared();
        });
        assert!((v[1][0] - 4.0 * PI / 3.0).abs() < 1e-10);
        assert!((v[0][0] - 4.0 * PI / 3.0 / 8.0).abs() < 1e-10);
        // ∫_{B_1} (r² + 4 r²) = 5 * 4π/5
        assert!((v[1][1] - 4.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn mesh_field_reproduces_linear_functions() {
        let mesh = Arc::new(cracked_ball(BallParams { polar: PolarParams { radius: 1.0, h: 0.2, grading: 1.5 }, axial_grading: 1.0 }).unwrap());
        let vals = mesh.interpolate(|p| 1.0 + p[0] - 2.0 * p[2]);
        let field = MeshField::new(mesh.clone(), vals);
        let x = Vec3::new(0.1, -0.2, 0.15);
        let (v, g) = field.eval(&x).unwrap();
        assert!((v - (1.0 + 0.1 - 0.3)).abs() < 1e-12);
        assert!((g - Vec3::new(1.0, 0.0, -2.0)).norm() < 1e-10);
        let n = mesh.nodes[37];
        assert_eq!(field.eval(&n).unwrap().0, field.values[37]);
    }
}
