//! Sparse linear algebra: CSR matrices, Jacobi-preconditioned conjugate
//! gradients and an envelope (skyline) LDLᵀ factorisation.

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Build from `(row, col, value)` triplets; duplicates are summed in a
    /// deterministic order.
    pub fn from_triplets(n: usize, trip: Vec<(usize, usize, f64)>) -> Self {
        // bucket by row, then a stable sort by column within each row keeps the
        // summation order of duplicates fixed
        let mut counts = vec![0usize; n + 1];
        for &(r, _, _) in &trip {
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut bucket = vec![(0usize, 0.0f64); trip.len()];
        for (r, c, v) in trip {
            bucket[next[r]] = (c, v);
            next[r] += 1;
        }
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::new();
        let mut vals: Vec<f64> = Vec::new();
        for r in 0..n {
            let row = &mut bucket[counts[r]..counts[r + 1]];
            row.sort_by_key(|e| e.0);
            let mut last = None;
            for &(c, v) in row.iter() {
                if last == Some(c) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr[r + 1] = cols.len();
        }
        Csr { n, row_ptr, cols, vals }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[p] * x[self.cols[p]];
            }
            y[i] = s;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec(x, &mut y);
        y
    }

    /// Quadratic form `xᵀ A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let y = self.apply(x);
        dot(x, &y)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| (self.row_ptr[i]..self.row_ptr[i + 1]).find(|&p| self.cols[p] == i).map(|p| self.vals[p]).unwrap_or(0.0)).collect()
    }

    /// `self + alpha * other` for matrices with arbitrary patterns.
    pub fn add_scaled(&self, alpha: f64, other: &Csr) -> Csr {
        let mut trip = Vec::with_capacity(self.nnz() + other.nnz());
        for (m, s) in [(self, 1.0), (other, alpha)] {
            for i in 0..m.n {
                for p in m.row_ptr[i]..m.row_ptr[i + 1] {
                    trip.push((i, m.cols[p], s * m.vals[p]));
                }
            }
        }
        Csr::from_triplets(self.n, trip)
    }

    /// Split into the free-free block and the free-fixed coupling, given a
    /// map from global index to free index (`None` for fixed nodes).
    pub fn partition(&self, free_index: &[Option<usize>]) -> (Csr, Vec<Vec<(usize, f64)>>) {
        let nfree = free_index.iter().filter(|f| f.is_some()).count();
        let mut trip = Vec::new();
        let mut coupling = vec![Vec::new(); nfree];
        for i in 0..self.n {
            let Some(fi) = free_index[i] else { continue };
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let c = self.cols[p];
                match free_index[c] {
                    Some(fc) => trip.push((fi, fc, self.vals[p])),
                    None => coupling[fi].push((c, self.vals[p])),
                }
            }
        }
        (Csr::from_triplets(nfree, trip), coupling)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients. Fails if the operator shows a
/// non-positive curvature direction or the iteration cap is hit.
pub fn conjugate_gradient(a: &Csr, b: &[f64], x: &mut [f64], rel_tol: f64, max_iter: usize) -> Result<CgReport> {
    let n = a.n;
    let diag = a.diagonal();
    if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::numerical("solver", format!("non-positive diagonal entry {} at row {i}; operator is not coercive", diag[i])));
    }
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgReport { iterations: 0, relative_residual: 0.0 });
    }
    let mut r = vec![0.0; n];
    a.mul_vec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        let rel = norm(&r) / bnorm;
        if rel <= rel_tol {
            return Ok(CgReport { iterations: it, relative_residual: rel });
        }
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::numerical("solver", format!("conjugate gradients met non-positive curvature pᵀAp = {pap:e}; operator is not coercive")));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rel = norm(&r) / bnorm;
    if rel <= rel_tol {
        Ok(CgReport { iterations: max_iter, relative_residual: rel })
    } else {
        Err(Error::numerical("solver", format!("conjugate gradients stalled at relative residual {rel:e} after {max_iter} iterations")))
    }
}

/// Envelope-stored LDLᵀ factorisation of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct Skyline {
    n: usize,
    first: Vec<usize>,
    start: Vec<usize>,
    lower: Vec<f64>,
    diag: Vec<f64>,
}

impl Skyline {
    pub fn factor(a: &Csr) -> Result<Self> {
        let n = a.n;
        let mut first: Vec<usize> = (0..n).collect();
        for i in 0..n {
            for p in a.row_ptr[i]..a.row_ptr[i + 1] {
                let c = a.cols[p];
                if c < i {
                    first[i] = first[i].min(c);
                }
            }
        }
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i]);
        }
        let mut lower = vec![0.0; start[n]];
        let mut diag = vec![0.0; n];
        for i in 0..n {
            for p in a.row_ptr[i]..a.row_ptr[i + 1] {
                let c = a.cols[p];
                if c < i {
                    lower[start[i] + c - first[i]] = a.vals[p];
                } else if c == i {
                    diag[i] = a.vals[p];
                }
            }
        }
        // row-oriented Crout; work[j] holds u_ij = L_ij * D_j while row i is built
        let mut work = vec![0.0; n];
        for i in 0..n {
            let fi = first[i];
            let row_i = start[i];
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = lower[row_i + j - fi];
                let row_j = start[j];
                for k in lo..j {
                    s -= work[k] * lower[row_j + k - fj];
                }
                work[j] = s;
            }
            let mut dsum = diag[i];
            for j in fi..i {
                let l = work[j] / diag[j];
                dsum -= l * work[j];
                lower[row_i + j - fi] = l;
                work[j] = 0.0;
            }
            if dsum == 0.0 || !dsum.is_finite() {
                return Err(Error::numerical("spectral", format!("zero pivot at row {i} in envelope factorisation")));
            }
            diag[i] = dsum;
        }
        Ok(Skyline { n, first, start, lower, diag })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let fi = self.first[i];
            let row = self.start[i];
            let mut s = y[i];
            for j in fi..i {
                s -= self.lower[row + j - fi] * y[j];
            }
            y[i] = s;
        }
        for i in 0..n {
            y[i] /= self.diag[i];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = self.start[i];
            let yi = y[i];
            for j in fi..i {
                y[j] -= self.lower[row + j - fi] * yi;
            }
        }
        y
    }

    pub fn envelope_size(&self) -> usize {
        self.lower.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize, shift: f64) -> Csr {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + shift));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        Csr::from_triplets(n, t)
    }

    #[test]
    fn triplets_are_merged() {
        let a = Csr::from_triplets(2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, 1.0)]);
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.apply(&[1.0, 1.0]), vec![3.0, 1.0]);
    }

    #[test]
    fn cg_solves_spd_system() {
        let a = laplacian_1d(50, 0.01);
        let xe: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.apply(&xe);
        let mut x = vec![0.0; 50];
        let rep = conjugate_gradient(&a, &b, &mut x, 1e-12, 500).unwrap();
        assert!(rep.relative_residual <= 1e-12);
        assert!(xe.iter().zip(&x).all(|(p, q)| (p - q).abs() < 1e-9));
    }

    #[test]
    fn cg_detects_indefinite_operator() {
        let a = laplacian_1d(20, -1.0);
        let b = vec![1.0; 20];
        let mut x = vec![0.0; 20];
        assert!(conjugate_gradient(&a, &b, &mut x, 1e-12, 200).is_err());
    }

    #[test]
    fn skyline_matches_direct_solution() {
        let mut a = laplacian_1d(30, -0.5);
        // add a long-range coupling to exercise the envelope
        a = a.add_scaled(1.0, &Csr::from_triplets(30, vec![(29, 3, 0.2), (3, 29, 0.2)]));
        let f = Skyline::factor(&a).unwrap();
        let b: Vec<f64> = (0..30).map(|i| 1.0 + i as f64).collect();
        let x = f.solve(&b);
        let r = a.apply(&x);
        let err = r.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }
}
