//! Finite element solver for `-div(A ∇v) = f̃ v` on the straightened cracked
//! ball with homogeneous Dirichlet data on the crack and a prescribed trace on
//! the outer sphere.

pub mod approx;
pub mod potential;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::MeshField;
use crate::geometry::{CrackGeometry, Vec3};
use crate::mesh::{Mesh, MeshQuality};
use crate::quadrature::SimplexRule;
use crate::sparse::{conjugate_gradient, dot, norm, Csr};
use potential::PotentialSpec;

const MODULE: &str = "solver";

/// Relative residual target of the linear solve.
pub const CG_TOLERANCE: f64 = 1e-10;

/// Random test vectors in the Galerkin orthogonality check.
pub const GALERKIN_PROBES: usize = 50;

/// Assembled matrices of the straightened problem on a mesh.
pub struct DiscreteProblem {
    pub mesh: Arc<Mesh>,
    pub geometry: CrackGeometry,
    pub potential: PotentialSpec,
    /// `∫ A ∇φ_i · ∇φ_j`
    pub stiffness: Csr,
    /// `∫ f̃ φ_i φ_j`
    pub potential_mass: Csr,
    /// `∫ |f̃| φ_i φ_j`
    pub abs_potential_mass: Csr,
    /// `∫ φ_i φ_j`
    pub mass: Csr,
}

/// Diagnostics of a Dirichlet solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub nodes: usize,
    pub free_dofs: usize,
    pub cg_iterations: usize,
    pub relative_residual: f64,
    /// Largest normalised `|tᵀ r|` over random test vectors `t`.
    pub galerkin_defect: f64,
    pub quality: MeshQuality,
    pub coercivity: CoercivityReport,
}

/// Discrete check that the potential term is dominated by the gradient term.
#[derive(Debug, Clone, Serialize)]
pub struct CoercivityReport {
    pub probes: usize,
    /// Largest `∫|f̃|v² / ∫A∇v·∇v` over the probes.
    pub max_ratio: f64,
    /// Threshold: the operator keeps at least a quarter of the gradient energy.
    pub threshold: f64,
    pub passed: bool,
}

fn cell_rule(dim: usize) -> SimplexRule {
    SimplexRule::collapsed(dim, if dim == 2 { 3 } else { 2 })
}

/// Assemble the stiffness, potential and mass matrices.
pub fn assemble(mesh: Arc<Mesh>, geometry: &CrackGeometry, potential: &PotentialSpec) -> Result<DiscreteProblem> {
    potential.validate()?;
    if mesh.dim != geometry.dim || mesh.cell_dim != mesh.dim {
        return Err(Error::precondition(MODULE, "mesh and geometry dimensions disagree"));
    }
    let rule = cell_rule(mesh.dim);
    let k = mesh.dim;
    let ncell = mesh.num_cells();
    let chunk = 1024;
    let starts: Vec<usize> = (0..ncell).step_by(chunk).collect();
    type Trip = Vec<(usize, usize, f64)>;
    let parts: Vec<Result<(Trip, Trip, Trip, Trip)>> = starts
        .par_iter()
        .map(|&s| {
            let mut ks = Vec::new();
            let mut ps = Vec::new();
            let mut aps = Vec::new();
            let mut ms = Vec::new();
            for c in s..(s + chunk).min(ncell) {
                let g = mesh.cell_geometry(c);
                let v = mesh.verts(c);
                let pts: Vec<Vec3> = v.iter().map(|&i| mesh.nodes[i]).collect();
                let mut kl = [[0.0; 4]; 4];
                let mut pl = [[0.0; 4]; 4];
                let mut apl = [[0.0; 4]; 4];
                for (lb, w) in rule.bary.iter().zip(&rule.weights) {
                    let x: Vec3 = pts.iter().zip(lb).map(|(p, l)| p * *l).sum();
                    let coeff = geometry.coefficients(&x)?;
                    let ft = if potential.is_zero() { 0.0 } else { coeff.w * potential.value(&coeff.phi) };
                    let wv = w * g.volume;
                    for a in 0..=k {
                        let ag = coeff.a * g.grads[a];
                        for b in 0..=k {
                            kl[a][b] += wv * ag.dot(&g.grads[b]);
                            pl[a][b] += wv * ft * lb[a] * lb[b];
                            apl[a][b] += wv * ft.abs() * lb[a] * lb[b];
                        }
                    }
                }
                let denom = ((k + 1) * (k + 2)) as f64;
                for a in 0..=k {
                    for b in 0..=k {
                        ks.push((v[a], v[b], kl[a][b]));
                        if pl[a][b] != 0.0 {
                            ps.push((v[a], v[b], pl[a][b]));
                            aps.push((v[a], v[b], apl[a][b]));
                        }
                        ms.push((v[a], v[b], g.volume * if a == b { 2.0 } else { 1.0 } / denom));
                    }
                }
            }
            Ok((ks, ps, aps, ms))
        })
        .collect();
    let (mut ks, mut ps, mut aps, mut ms) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for part in parts {
        let (a, b, c, d) = part?;
        ks.extend(a);
        ps.extend(b);
        aps.extend(c);
        ms.extend(d);
    }
    let n = mesh.num_nodes();
    Ok(DiscreteProblem {
        stiffness: Csr::from_triplets(n, ks),
        potential_mass: Csr::from_triplets(n, ps),
        abs_potential_mass: Csr::from_triplets(n, aps),
        mass: Csr::from_triplets(n, ms),
        geometry: geometry.clone(),
        potential: potential.clone(),
        mesh,
    })
}

impl DiscreteProblem {
    /// The operator `∫ A∇φ·∇φ - ∫ f̃ φ φ`.
    pub fn operator(&self) -> Csr {
        if self.potential_mass.nnz() == 0 {
            self.stiffness.clone()
        } else {
            self.stiffness.add_scaled(-1.0, &self.potential_mass)
        }
    }

    /// Probe the coercivity of the operator with smooth discrete fields that
    /// vanish on the crack and the outer sphere.
    pub fn coercivity_probe(&self, probes: usize, seed: u64) -> CoercivityReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mesh = &self.mesh;
        let d = mesh.dim;
        let r2 = mesh.radius * mesh.radius;
        let mut max_ratio: f64 = 0.0;
        for p in 0..probes {
            let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let vals: Vec<f64> = mesh
                .nodes
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    if mesh.crack[i] || mesh.boundary[i] {
                        return 0.0;
                    }
                    let (rho, t) = crate::spectral::edge_polar(x[d - 2], x[d - 1]);
                    let edge = rho.sqrt() * (0.5 * t).sin();
                    let bump = (r2 - x.norm_squared()).max(0.0) / r2;
                    let scale = if p == 0 { 1.0 } else { 1.0 + c[0] * x[0] / mesh.radius + c[1] * x[1] / mesh.radius + c[2] * x.norm() / mesh.radius };
                    edge * bump * scale
                })
                .collect();
            let grad = self.stiffness.quad_form(&vals);
            if grad > 0.0 {
                let pot = if self.abs_potential_mass.nnz() == 0 { 0.0 } else { self.abs_potential_mass.quad_form(&vals) };
                max_ratio = max_ratio.max(pot / grad);
            }
        }
        CoercivityReport { probes, max_ratio, threshold: 0.75, passed: max_ratio <= 0.75 }
    }
}

/// Solve with zero data on the crack and `trace` on the outer boundary.
pub fn solve_dirichlet(problem: &DiscreteProblem, trace: &dyn Fn(&Vec3) -> f64, seed: u64) -> Result<(MeshField, SolveReport)> {
    let mesh = &problem.mesh;
    let coercivity = problem.coercivity_probe(8, seed);
    if !coercivity.passed {
        return Err(Error::numerical(
            MODULE,
            format!("coercivity probe failed: potential/gradient ratio {:.3} exceeds {}", coercivity.max_ratio, coercivity.threshold),
        ));
    }
    let n = mesh.num_nodes();
    let mut u = vec![0.0; n];
    let mut free_index = vec![None; n];
    let mut free_nodes = Vec::new();
    for i in 0..n {
        if mesh.crack[i] {
            u[i] = 0.0;
        } else if mesh.boundary[i] {
            u[i] = trace(&mesh.nodes[i]);
        } else {
            free_index[i] = Some(free_nodes.len());
            free_nodes.push(i);
        }
    }
    let op = problem.operator();
    let (kff, coupling) = op.partition(&free_index);
    let rhs: Vec<f64> = coupling.iter().map(|row| -row.iter().map(|(c, v)| v * u[*c]).sum::<f64>()).collect();
    let mut x = vec![0.0; free_nodes.len()];
    let cg = conjugate_gradient(&kff, &rhs, &mut x, CG_TOLERANCE, 40 * free_nodes.len().max(100))?;
    for (f, &i) in free_nodes.iter().enumerate() {
        u[i] = x[f];
    }
    // Galerkin orthogonality against random free test vectors
    let full = op.apply(&u);
    let residual: Vec<f64> = free_nodes.iter().map(|&i| full[i]).collect();
    let scale = norm(&rhs).max(1e-300);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9a1e);
    let mut galerkin_defect: f64 = 0.0;
    for _ in 0..GALERKIN_PROBES {
        let t: Vec<f64> = (0..residual.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        galerkin_defect = galerkin_defect.max(dot(&t, &residual).abs() / (norm(&t) * scale));
    }
    let report = SolveReport {
        nodes: n,
        free_dofs: free_nodes.len(),
        cg_iterations: cg.iterations,
        relative_residual: cg.relative_residual,
        galerkin_defect,
        quality: mesh.quality(),
        coercivity,
    };
    Ok((MeshField::new(mesh.clone(), u), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Field;
    use crate::mesh::build::{cracked_disk, PolarParams};

    #[test]
    fn reproduces_first_crack_mode_in_the_disk() {
        let mesh = Arc::new(cracked_disk(PolarParams { radius: 1.0, h: 0.02, grading: 2.0 }).unwrap());
        let geom = CrackGeometry::flat(2);
        let prob = assemble(mesh, &geom, &PotentialSpec::zero()).unwrap();
        let exact = |x: &Vec3| {
            let (rho, t) = crate::spectral::edge_polar(x[0], x[1]);
            rho.sqrt() * (0.5 * t).sin()
        };
        let (field, rep) = solve_dirichlet(&prob, &exact, 1).unwrap();
        assert!(rep.relative_residual <= CG_TOLERANCE);
        assert!(rep.galerkin_defect < 1e-8);
        for p in [Vec3::new(0.3, 0.2, 0.0), Vec3::new(-0.5, -0.1, 0.0), Vec3::new(0.05, -0.02, 0.0)] {
            assert!((field.value(&p) - exact(&p)).abs() < 5e-3, "{p:?}");
        }
    }

    #[test]
    fn strong_potential_fails_coercivity() {
        let mesh = Arc::new(cracked_disk(PolarParams { radius: 1.0, h: 0.1, grading: 2.0 }).unwrap());
        let prob = assemble(mesh, &CrackGeometry::flat(2), &PotentialSpec::inverse_square_sub(50.0, 1.0)).unwrap();
        let err = solve_dirichlet(&prob, &|_| 1.0, 1);
        assert!(err.is_err());
    }
}
