//! Numeric Dirichlet eigenvalues of the slit sphere by piecewise-linear finite
//! elements and shift-invert Lanczos.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::build::{slit_circle, slit_sphere};
use crate::mesh::Mesh;
use crate::sparse::{dot, Csr, Skyline};

const MODULE: &str = "spectral";

/// Options of the numeric eigensolve.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EigenOptions {
    /// Number of lowest eigenvalues requested.
    pub count: usize,
    /// Spectral shift; eigenvalues closest above it converge first.
    pub shift: f64,
    /// Relative residual tolerance `|K x - λ M x| / |λ M x|`.
    pub tol: f64,
    pub seed: u64,
}

/// Numeric eigenpairs with residuals.
#[derive(Debug, Clone, Serialize)]
pub struct NumericSpectrum {
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    pub free_dofs: usize,
    pub cells: usize,
    #[serde(skip)]
    pub vectors: Vec<Vec<f64>>,
}

/// Assemble P1 stiffness and mass matrices of a mesh (any cell dimension).
pub fn assemble_laplace(mesh: &Mesh) -> (Csr, Csr) {
    let n = mesh.num_nodes();
    let k = mesh.cell_dim;
    let mut ks = Vec::with_capacity(mesh.num_cells() * (k + 1) * (k + 1));
    let mut ms = Vec::with_capacity(ks.capacity());
    for c in 0..mesh.num_cells() {
        let g = mesh.cell_geometry(c);
        let v = mesh.verts(c);
        // exact P1 mass: vol * (1 + δ_ij) / ((k+1)(k+2))
        let denom = ((k + 1) * (k + 2)) as f64;
        for a in 0..=k {
            for b in 0..=k {
                ks.push((v[a], v[b], g.volume * g.grads[a].dot(&g.grads[b])));
                let f = if a == b { 2.0 } else { 1.0 };
                ms.push((v[a], v[b], g.volume * f / denom));
            }
        }
    }
    (Csr::from_triplets(n, ks), Csr::from_triplets(n, ms))
}

/// Lowest Dirichlet eigenvalues of the slit sphere `S^N` (`N = 1, 2`) on a
/// mesh with roughly `target_cells` cells.
pub fn slit_sphere_eigenvalues(sphere_dim: usize, target_cells: usize, opts: EigenOptions) -> Result<NumericSpectrum> {
    let mesh = match sphere_dim {
        1 => slit_circle(target_cells.max(8))?,
        2 => {
            // cell count grows like rings²; one rescale lands near the target
            let rings = ((target_cells as f64 / 1.2).sqrt().round() as usize).max(8);
            let first = slit_sphere(rings)?;
            let ratio = target_cells as f64 / first.num_cells() as f64;
            if (ratio - 1.0).abs() > 0.05 {
                slit_sphere(((rings as f64 * ratio.sqrt()).round() as usize).max(8))?
            } else {
                first
            }
        }
        _ => return Err(Error::domain(MODULE, format!("numeric eigensolve supports N in {{1,2}}, got {sphere_dim}"))),
    };
    dirichlet_eigenvalues(&mesh, opts)
}

/// Lowest eigenvalues of the Dirichlet Laplacian on a mesh with the nodes
/// flagged in `mesh.crack` removed.
pub fn dirichlet_eigenvalues(mesh: &Mesh, opts: EigenOptions) -> Result<NumericSpectrum> {
    let (k, m) = assemble_laplace(mesh);
    let mut free_index = vec![None; mesh.num_nodes()];
    let mut nfree = 0;
    for i in 0..mesh.num_nodes() {
        if !mesh.crack[i] {
            free_index[i] = Some(nfree);
            nfree += 1;
        }
    }
    let (kf, _) = k.partition(&free_index);
    let (mf, _) = m.partition(&free_index);
    let mut spectrum = shift_invert_lanczos(&kf, &mf, opts)?;
    spectrum.cells = mesh.num_cells();
    Ok(spectrum)
}

struct Lanczos<'a> {
    m: &'a Csr,
    factor: &'a Skyline,
    shift: f64,
}

impl Lanczos<'_> {
    fn m_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        dot(a, &self.m.apply(b))
    }

    fn orthogonalise(&self, z: &mut [f64], basis: &[Vec<f64>]) {
        for _ in 0..2 {
            let mz = self.m.apply(z);
            for q in basis {
                let c = dot(q, &mz);
                for (zi, qi) in z.iter_mut().zip(q) {
                    *zi -= c * qi;
                }
            }
        }
    }

    /// One Lanczos run of `steps` steps with the operator `(K - σM)^{-1} M`,
    /// kept M-orthogonal to `locked`. Returns Ritz values and vectors.
    fn run(&self, start: Vec<f64>, steps: usize, locked: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = start.len();
        let mut q = start;
        self.orthogonalise(&mut q, locked);
        let nq = self.m_dot(&q, &q).sqrt();
        q.iter_mut().for_each(|v| *v /= nq);
        let mut basis: Vec<Vec<f64>> = vec![q];
        let mut alpha = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        for j in 0..steps.min(n) {
            let mq = self.m.apply(&basis[j]);
            let mut z = self.factor.solve(&mq);
            let a = dot(&z, &mq);
            alpha.push(a);
            for (zi, qi) in z.iter_mut().zip(&basis[j]) {
                *zi -= a * qi;
            }
            if j > 0 {
                let b = beta[j - 1];
                for (zi, qi) in z.iter_mut().zip(&basis[j - 1]) {
                    *zi -= b * qi;
                }
            }
            self.orthogonalise(&mut z, &basis);
            self.orthogonalise(&mut z, locked);
            let b = self.m_dot(&z, &z).sqrt();
            if !(b > 1e-13) || j + 1 == steps.min(n) {
                break;
            }
            beta.push(b);
            z.iter_mut().for_each(|v| *v /= b);
            basis.push(z);
        }
        let m = alpha.len();
        let t = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j {
                beta[i]
            } else if j + 1 == i {
                beta[j]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let mut values = Vec::new();
        let mut vectors = Vec::new();
        for i in 0..m {
            let theta = eig.eigenvalues[i];
            if theta.abs() < 1e-300 {
                continue;
            }
            let mut x = vec![0.0; n];
            for (jb, qb) in basis.iter().enumerate().take(m) {
                let s = eig.eigenvectors[(jb, i)];
                for (xi, qi) in x.iter_mut().zip(qb) {
                    *xi += s * qi;
                }
            }
            values.push(self.shift + 1.0 / theta);
            vectors.push(x);
        }
        (values, vectors)
    }
}

fn residual(k: &Csr, m: &Csr, lambda: f64, x: &[f64]) -> f64 {
    let kx = k.apply(x);
    let mx = m.apply(x);
    let r: f64 = kx.iter().zip(&mx).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
    let s: f64 = mx.iter().map(|b| (lambda * b).powi(2)).sum::<f64>().sqrt();
    r / s.max(1e-300)
}

/// Shift-invert Lanczos with full reorthogonalisation and deflation restarts
/// to recover repeated eigenvalues.
pub fn shift_invert_lanczos(k: &Csr, m: &Csr, opts: EigenOptions) -> Result<NumericSpectrum> {
    let n = k.n;
    if opts.count == 0 || opts.count > n {
        return Err(Error::domain(MODULE, format!("cannot compute {} eigenvalues of a {n}-dimensional problem", opts.count)));
    }
    let shifted = k.add_scaled(-opts.shift, m);
    let factor = Skyline::factor(&shifted)?;
    let lz = Lanczos { m, factor: &factor, shift: opts.shift };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut locked: Vec<Vec<f64>> = Vec::new();
    let mut locked_vals: Vec<f64> = Vec::new();
    let mut locked_res: Vec<f64> = Vec::new();
    let steps = (4 * opts.count + 30).min(n);
    for _pass in 0..(3 * opts.count + 4) {
        let start: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (vals, vecs) = lz.run(start, steps, &locked);
        let mut added = 0;
        let mut cand: Vec<(f64, Vec<f64>)> = vals.into_iter().zip(vecs).collect();
        cand.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for (lam, mut x) in cand {
            if locked.len() >= opts.count + 4 {
                break;
            }
            let res = residual(k, m, lam, &x);
            if res > opts.tol {
                continue;
            }
            lz.orthogonalise(&mut x, &locked);
            let nx = lz.m_dot(&x, &x).sqrt();
            if nx < 1e-6 {
                continue;
            }
            x.iter_mut().for_each(|v| *v /= nx);
            let res = residual(k, m, lam, &x);
            if res > opts.tol {
                continue;
            }
            locked.push(x);
            locked_vals.push(lam);
            locked_res.push(res);
            added += 1;
        }
        let mut sorted = locked_vals.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // stop once a pass adds nothing below the current count-th eigenvalue
        if added == 0 && sorted.len() >= opts.count {
            break;
        }
    }
    if locked_vals.len() < opts.count {
        return Err(Error::numerical(MODULE, format!("only {} of {} eigenpairs converged to tolerance {:e}", locked_vals.len(), opts.count, opts.tol)));
    }
    let mut order: Vec<usize> = (0..locked_vals.len()).collect();
    order.sort_by(|&a, &b| locked_vals[a].partial_cmp(&locked_vals[b]).unwrap());
    order.truncate(opts.count);
    Ok(NumericSpectrum {
        eigenvalues: order.iter().map(|&i| locked_vals[i]).collect(),
        residuals: order.iter().map(|&i| locked_res[i]).collect(),
        free_dofs: n,
        cells: 0,
        vectors: order.iter().map(|&i| locked[i].clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_eigenvalues_follow_ladder() {
        let opts = EigenOptions { count: 4, shift: 0.15, tol: 1e-9, seed: 1 };
        let s = slit_sphere_eigenvalues(1, 2000, opts).unwrap();
        for (i, v) in s.eigenvalues.iter().enumerate() {
            let k = (i + 1) as f64;
            assert!((v - k * k / 4.0).abs() / (k * k / 4.0) < 1e-3, "{v}");
        }
    }

    #[test]
    fn sphere_eigenvalues_show_multiplicities() {
        let opts = EigenOptions { count: 6, shift: 0.65, tol: 1e-9, seed: 3 };
        let s = slit_sphere_eigenvalues(2, 8000, opts).unwrap();
        let expected = [0.75, 2.0, 3.75, 3.75, 6.0, 6.0];
        for (v, e) in s.eigenvalues.iter().zip(expected) {
            assert!((v - e).abs() / e < 0.02, "{:?}", s.eigenvalues);
        }
    }
}
