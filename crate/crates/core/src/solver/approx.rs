//! Approximating problems on smoothed domains, where the crack is replaced by
//! a thin notch, and their `H¹` distance to the cracked solution.

use std::sync::Arc;

use serde::Serialize;

use super::potential::PotentialSpec;
use super::{assemble, solve_dirichlet, SolveReport};
use crate::error::{Error, Result};
use crate::field::{Field, MeshField};
use crate::geometry::smoothed::{notch_profile, SmoothedDomain, StarCertificate};
use crate::geometry::{CrackGeometry, Vec3};
use crate::mesh::build::notched_disk;
use crate::quadrature::{gauss_legendre_interval, SimplexRule};

const MODULE: &str = "solver";

/// Mesh and lift parameters of the approximating solves.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ApproxOptions {
    pub h: f64,
    pub grading: f64,
    /// Half-width factor `C̃` of the zone around the crack where the lifted
    /// boundary datum vanishes (`|x_{N+1}| <= C̃/n`).
    pub lift_width: f64,
}

/// Result of one approximating solve.
#[derive(Debug, Clone, Serialize)]
pub struct ApproxResult {
    pub n: u32,
    pub certificate: StarCertificate,
    pub h1_error: f64,
    pub notch_contribution: f64,
    pub solve: SolveReport,
}

/// Smooth cutoff vanishing for `s <= 1` and equal to one for `s >= 2`.
fn smoothstep(s: f64) -> f64 {
    let t = (s - 1.0).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Cutoff `χ_n` of the boundary lift: zero in the strip `|x_{N+1}| <= C̃/n`
/// on the crack side, one away from it.
pub fn lift_cutoff(x: &Vec3, n: u32, lift_width: f64) -> f64 {
    if x[0] <= 0.0 {
        return 1.0;
    }
    smoothstep(x[1].abs() * n as f64 / lift_width)
}

/// Solve the approximating problem on `B_{r0} ∩ {x_1 < f_n(x_2)}` in dimension 2
/// with the lifted trace `u χ_n` and measure `||u_n - u||_{H¹(B_{r0})}`, where
/// `u_n` is extended by zero into the notch.
pub fn solve_approximating(
    geometry: &CrackGeometry,
    potential: &PotentialSpec,
    n: u32,
    r0: f64,
    reference: &dyn Field,
    opts: ApproxOptions,
    seed: u64,
) -> Result<(MeshField, ApproxResult)> {
    if geometry.dim != 2 {
        return Err(Error::precondition(MODULE, "approximating solves are implemented in dimension 2"));
    }
    if opts.lift_width <= std::f64::consts::SQRT_2 * r0 {
        return Err(Error::precondition(MODULE, format!("lift width {} must exceed sqrt(2) r0 = {}", opts.lift_width, std::f64::consts::SQRT_2 * r0)));
    }
    let domain = SmoothedDomain::new(geometry, n, r0)?;
    let certificate = domain.star_certificate(20_000);
    if !certificate.passed {
        return Err(Error::validation("geometry", format!("smoothed domain for n={n} is not star-shaped (min support {:e})", certificate.min_support)));
    }
    let mesh = Arc::new(notched_disk(&domain, opts.h, opts.grading)?);
    let problem = assemble(mesh.clone(), geometry, potential)?;
    let lift = |x: &Vec3| reference.value(x) * lift_cutoff(x, n, opts.lift_width);
    let (field, solve) = solve_dirichlet(&problem, &lift, seed)?;

    // H¹ error over the mesh
    let rule = SimplexRule::collapsed(2, 4);
    let mut inside = 0.0;
    for c in 0..mesh.num_cells() {
        let g = mesh.cell_geometry(c);
        let v = mesh.verts(c);
        let grad = field.cell_gradient(c);
        for (lb, w) in rule.bary.iter().zip(&rule.weights) {
            let x: Vec3 = v.iter().zip(lb).map(|(&i, l)| mesh.nodes[i] * *l).sum();
            let un: f64 = v.iter().zip(lb).map(|(&i, l)| field.values[i] * l).sum();
            let (u, gu) = reference.eval(&x).unwrap_or((0.0, Vec3::zeros()));
            inside += w * g.volume * ((grad - gu).norm_squared() + (un - u).powi(2));
        }
    }
    let notch = notch_energy(&domain, reference);
    let h1_error = (inside + notch).sqrt();
    Ok((field, ApproxResult { n, certificate, h1_error, notch_contribution: notch, solve }))
}

/// `∫ (|∇u|² + u²)` over the notch `B_{r0} ∩ {x_1 >= f_n(x_2)}`.
fn notch_energy(domain: &SmoothedDomain, reference: &dyn Field) -> f64 {
    let n = domain.n;
    let r0 = domain.radius;
    // |x_2| extent: f_n(t)^2 + t^2 = r0^2
    let (mut lo, mut hi) = (0.0f64, r0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = notch_profile(n, mid);
        if f * f + mid * mid < r0 * r0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tmax = 0.5 * (lo + hi);
    let cut = (2.0 / (n as f64 * n as f64)).min(tmax);
    let mut total = 0.0;
    for (a, b) in [(0.0, cut), (cut, tmax)] {
        if b <= a {
            continue;
        }
        for (t, wt) in gauss_legendre_interval(40, a, b) {
            for sign in [1.0, -1.0] {
                let x2 = sign * t;
                let x1lo = notch_profile(n, x2);
                let x1hi = (r0 * r0 - x2 * x2).max(0.0).sqrt();
                if x1hi <= x1lo {
                    continue;
                }
                for (x1, w1) in gauss_legendre_interval(40, x1lo, x1hi) {
                    let (u, g) = reference.eval(&Vec3::new(x1, x2, 0.0)).unwrap_or((0.0, Vec3::zeros()));
                    total += wt * w1 * (g.norm_squared() + u * u);
                }
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ExactField;

    #[test]
    fn lift_vanishes_on_the_notch_wall() {
        let r0 = 0.25;
        for n in [8u32, 16, 32] {
            let dom = SmoothedDomain::new(&CrackGeometry::flat(2), n, r0).unwrap();
            let tau = dom.angular_gap(r0);
            let p = Vec3::new(r0 * tau.cos(), r0 * tau.sin(), 0.0);
            assert_eq!(lift_cutoff(&p, n, 1.5 * r0), 0.0);
        }
    }

    #[test]
    fn notch_energy_matches_polar_estimate() {
        // for u = ρ^{1/2} sin(t/2), |∇u|² = 1/(4ρ); over a thin notch the energy is ≈ Σ angle * ρ/(4ρ)
        let u = ExactField::new(2, 1.0, |x: &Vec3| {
            let (rho, t) = crate::spectral::edge_polar(x[0], x[1]);
            let a = rho.sqrt();
            let g = if rho > 0.0 {
                let dr = 0.5 / a * (0.5 * t).sin();
                let dt = 0.5 / a * (0.5 * t).cos();
                Vec3::new(dr * t.cos() - dt * t.sin(), dr * t.sin() + dt * t.cos(), 0.0)
            } else {
                Vec3::zeros()
            };
            (a * (0.5 * t).sin(), g)
        });
        let dom = SmoothedDomain::new(&CrackGeometry::flat(2), 64, 0.5).unwrap();
        let e = notch_energy(&dom, &u);
        let gap = 2.0 * dom.angular_gap(0.5);
        assert!(e > 0.0 && e < gap * 0.5 / 4.0 * 1.5, "{e}");
    }
}
