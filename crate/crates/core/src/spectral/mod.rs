//! Spectrum of the Laplace–Beltrami operator on the slit sphere `S^N \ Σ`
//! with Dirichlet condition on the slit `Σ = {θ_{N+1} = 0, θ_N >= 0}`.
//!
//! The eigenvalues form the ladder `μ_k = k(k + 2N - 2)/4`, `k >= 1`. An
//! eigenfunction of `μ_k` is the restriction to the sphere of a function
//! harmonic off the crack and homogeneous of degree `k/2`. For `N = 2` such
//! functions separate in cylindrical coordinates around the edge axis as
//! `q(x_1, ρ) ρ^{j/2} sin(j t / 2)` with `j = k - 2m`, which gives the
//! multiplicity `ceil(k/2)`.

pub mod eigen;

use num_rational::Ratio;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::quadrature::SphereRule;

const MODULE: &str = "spectral";

/// Exact eigenvalue `μ_k = k(k + 2N - 2)/4`.
pub fn ladder(sphere_dim: u32, k: u32) -> Result<Ratio<u64>> {
    if k == 0 {
        return Err(Error::domain(MODULE, "ladder index k must be at least 1"));
    }
    if sphere_dim == 0 {
        return Err(Error::domain(MODULE, "sphere dimension N must be at least 1"));
    }
    let k = k as u64;
    let n = sphere_dim as u64;
    Ok(Ratio::new(k * (k + 2 * n - 2), 4))
}

pub fn ladder_f64(sphere_dim: u32, k: u32) -> Result<f64> {
    let r = ladder(sphere_dim, k)?;
    Ok(*r.numer() as f64 / *r.denom() as f64)
}

/// Angle around the edge measured from the crack, in `[0, 2π)`, and the
/// distance to the edge, for a point whose last two coordinates are
/// `(x_N, x_{N+1})`.
#[inline]
pub fn edge_polar(xn: f64, xn1: f64) -> (f64, f64) {
    let rho = xn.hypot(xn1);
    let mut t = xn1.atan2(xn);
    if t < 0.0 {
        t += std::f64::consts::TAU;
    }
    (rho, t)
}

/// The unnormalised exact mode `ρ^{k/2} sin(k t / 2)` at a point of `S^N`
/// (any `N`), where `ρ` and `t` are polar coordinates in the last two
/// coordinates.
pub fn exact_mode(k: u32, theta: &[f64]) -> Result<f64> {
    if k == 0 {
        return Err(Error::domain(MODULE, "mode index k must be at least 1"));
    }
    let n = theta.len();
    if n < 2 {
        return Err(Error::domain(MODULE, "sphere points need at least two coordinates"));
    }
    let norm2: f64 = theta.iter().map(|v| v * v).sum();
    if (norm2 - 1.0).abs() > 1e-9 {
        return Err(Error::domain(MODULE, format!("point is not on the unit sphere (|θ|² = {norm2})")));
    }
    let (rho, t) = edge_polar(theta[n - 2], theta[n - 1]);
    let a = 0.5 * k as f64;
    Ok(rho.powf(a) * (a * t).sin())
}

/// A separated harmonic `q_m(x_1, ρ) ρ^{j/2} sin(j t/2)` of degree `k/2 = j/2 + m`.
#[derive(Debug, Clone, Serialize)]
pub struct SeparatedHarmonic {
    pub j: u32,
    pub m: u32,
    /// Coefficients `c_i` of `x_1^{m-2i} ρ^{2i}` in `q_m`.
    pub coeffs: Vec<f64>,
}

impl SeparatedHarmonic {
    pub fn new(j: u32, m: u32) -> Self {
        let a = 0.5 * j as f64;
        let mut coeffs = vec![1.0];
        let mut i = 1u32;
        while 2 * i <= m {
            let prev = *coeffs.last().unwrap();
            let num = (m - 2 * i + 2) as f64 * (m - 2 * i + 1) as f64;
            coeffs.push(-prev * num / (4.0 * i as f64 * (a + i as f64)));
            i += 1;
        }
        SeparatedHarmonic { j, m, coeffs }
    }

    pub fn degree(&self) -> f64 {
        0.5 * self.j as f64 + self.m as f64
    }

    /// Value and gradient at a point of `R^{N+1}` (`N = 1` uses `x[0], x[1]`;
    /// `N = 2` uses all three components).
    pub fn eval(&self, sphere_dim: usize, x: &Vec3) -> (f64, Vec3) {
        let (x1, xn, xn1) = if sphere_dim == 1 { (0.0, x[0], x[1]) } else { (x[0], x[1], x[2]) };
        let (rho, t) = edge_polar(xn, xn1);
        let a = 0.5 * self.j as f64;
        let (mut q, mut q1, mut qr) = (0.0, 0.0, 0.0);
        for (i, &c) in self.coeffs.iter().enumerate() {
            let p1 = (self.m as usize - 2 * i) as i32;
            let p2 = 2 * i as i32;
            let xa = x1.powi(p1);
            let rb = rho.powi(p2);
            q += c * xa * rb;
            if p1 > 0 {
                q1 += c * p1 as f64 * x1.powi(p1 - 1) * rb;
            }
            if p2 > 0 {
                qr += c * p2 as f64 * xa * rho.powi(p2 - 1);
            }
        }
        let (s, co) = (a * t).sin_cos();
        let ra = rho.powf(a);
        let value = q * ra * s;
        let mut grad = Vec3::zeros();
        if rho > 0.0 {
            let ram1 = rho.powf(a - 1.0);
            let d_rho = (qr * ra + a * q * ram1) * s;
            let d_t = a * q * ram1 * co;
            let (st, ct) = t.sin_cos();
            let g_n = d_rho * ct - d_t * st;
            let g_n1 = d_rho * st + d_t * ct;
            if sphere_dim == 1 {
                grad[0] = g_n;
                grad[1] = g_n1;
            } else {
                grad[0] = q1 * ra * s;
                grad[1] = g_n;
                grad[2] = g_n1;
            }
        }
        (value, grad)
    }
}

/// One orthonormal eigenfunction `Y_{k,m}` as a combination of separated
/// harmonics of degree `k/2`.
#[derive(Debug, Clone, Serialize)]
pub struct SphereMode {
    pub k: u32,
    /// Index within the rung, starting at 1.
    pub m: u32,
    pub terms: Vec<(SeparatedHarmonic, f64)>,
}

impl SphereMode {
    /// Value and ambient gradient of the degree-`k/2` homogeneous extension.
    pub fn eval_homogeneous(&self, sphere_dim: usize, x: &Vec3) -> (f64, Vec3) {
        let mut v = 0.0;
        let mut g = Vec3::zeros();
        for (h, c) in &self.terms {
            let (hv, hg) = h.eval(sphere_dim, x);
            v += c * hv;
            g += hg * *c;
        }
        (v, g)
    }

    /// Value at `x / |x|`.
    pub fn value(&self, sphere_dim: usize, x: &Vec3) -> f64 {
        let r = x.norm();
        if r == 0.0 {
            return 0.0;
        }
        self.eval_homogeneous(sphere_dim, &(x / r)).0
    }

    /// Value and tangential gradient at the sphere point `theta`.
    pub fn value_and_surface_gradient(&self, sphere_dim: usize, theta: &Vec3) -> (f64, Vec3) {
        let (v, g) = self.eval_homogeneous(sphere_dim, theta);
        let radial = 0.5 * self.k as f64 * v;
        (v, g - theta * radial)
    }
}

/// Orthonormal eigenbasis of the slit sphere up to rung `k_max`, built by
/// Gram–Schmidt under a converged product quadrature.
#[derive(Debug, Clone, Serialize)]
pub struct SlitSphereBasis {
    pub sphere_dim: usize,
    pub k_max: u32,
    pub quadrature_nodes: (usize, usize),
    pub modes: Vec<SphereMode>,
    /// Largest deviation of the sampled Gram matrix from the identity.
    pub orthonormality_defect: f64,
    #[serde(skip)]
    pub rule: SphereRule,
}

/// Multiplicity of the rung `k` predicted by the separated construction.
pub fn multiplicity(sphere_dim: usize, k: u32) -> Option<usize> {
    match sphere_dim {
        1 => Some(1),
        2 => Some(k.div_ceil(2) as usize),
        _ => None,
    }
}

fn raw_harmonics(sphere_dim: usize, k: u32) -> Vec<SeparatedHarmonic> {
    match sphere_dim {
        1 => vec![SeparatedHarmonic::new(k, 0)],
        _ => (0..k.div_ceil(2)).map(|m| SeparatedHarmonic::new(k - 2 * m, m)).collect(),
    }
}

fn gram(rule: &SphereRule, fns: &[SeparatedHarmonic], sphere_dim: usize) -> Vec<Vec<f64>> {
    let vals: Vec<Vec<f64>> = fns.iter().map(|h| rule.points.iter().map(|p| h.eval(sphere_dim, &to_vec3(p)).0).collect()).collect();
    let n = fns.len();
    let mut g = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in 0..=a {
            let s: f64 = rule.weights.iter().enumerate().map(|(q, w)| w * vals[a][q] * vals[b][q]).sum();
            g[a][b] = s;
            g[b][a] = s;
        }
    }
    g
}

pub(crate) fn to_vec3(p: &[f64]) -> Vec3 {
    let mut v = Vec3::zeros();
    for (i, x) in p.iter().enumerate() {
        v[i] = *x;
    }
    v
}

impl SlitSphereBasis {
    /// Build the basis, doubling the quadrature until every sampled inner
    /// product moves by less than `1e-9`.
    pub fn build(sphere_dim: usize, k_max: u32) -> Result<Self> {
        if !(1..=2).contains(&sphere_dim) {
            return Err(Error::domain(MODULE, format!("explicit bases are provided for N in {{1,2}}, got {sphere_dim}")));
        }
        if k_max == 0 {
            return Err(Error::domain(MODULE, "k_max must be at least 1"));
        }
        let all: Vec<SeparatedHarmonic> = (1..=k_max).flat_map(|k| raw_harmonics(sphere_dim, k)).collect();
        let (mut nth, mut nt) = (8usize, 16usize);
        let mut rule = SphereRule::new(sphere_dim, nth, nt);
        let mut g_old = gram(&rule, &all, sphere_dim);
        loop {
            nth *= 2;
            nt *= 2;
            let cand = SphereRule::new(sphere_dim, nth, nt);
            let g_new = gram(&cand, &all, sphere_dim);
            let change = g_new.iter().flatten().zip(g_old.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            rule = cand;
            g_old = g_new;
            if change < 1e-9 {
                break;
            }
            if nt > 4096 {
                return Err(Error::numerical(MODULE, "sphere quadrature did not converge"));
            }
        }
        let mut modes = Vec::new();
        for k in 1..=k_max {
            let raw = raw_harmonics(sphere_dim, k);
            let g = gram(&rule, &raw, sphere_dim);
            let n = raw.len();
            // Cholesky G = L Lᵀ; rows of L^{-1} give orthonormal combinations
            let mut l = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..=i {
                    let mut s = g[i][j];
                    for p in 0..j {
                        s -= l[i][p] * l[j][p];
                    }
                    if i == j {
                        if !(s > 1e-12 * g[i][i].abs().max(1e-300)) {
                            return Err(Error::numerical(MODULE, format!("rank deficiency in eigenspace k={k}")));
                        }
                        l[i][i] = s.sqrt();
                    } else {
                        l[i][j] = s / l[j][j];
                    }
                }
            }
            let mut linv = vec![vec![0.0; n]; n];
            for i in 0..n {
                linv[i][i] = 1.0 / l[i][i];
                for j in 0..i {
                    let mut s = 0.0;
                    for p in j..i {
                        s -= l[i][p] * linv[p][j];
                    }
                    linv[i][j] = s / l[i][i];
                }
            }
            for (m, row) in linv.iter().enumerate() {
                let terms = raw.iter().cloned().zip(row.iter().cloned()).filter(|(_, c)| *c != 0.0).collect();
                modes.push(SphereMode { k, m: m as u32 + 1, terms });
            }
        }
        let mut basis = SlitSphereBasis { sphere_dim, k_max, quadrature_nodes: (rule.n_theta, rule.n_t), modes, orthonormality_defect: 0.0, rule };
        basis.orthonormality_defect = basis.sampled_gram_defect();
        Ok(basis)
    }

    fn sampled_gram_defect(&self) -> f64 {
        let vals: Vec<Vec<f64>> = self.modes.iter().map(|m| self.rule.points.iter().map(|p| m.value(self.sphere_dim, &to_vec3(p))).collect()).collect();
        let mut worst: f64 = 0.0;
        for a in 0..vals.len() {
            for b in 0..=a {
                let s: f64 = self.rule.weights.iter().enumerate().map(|(q, w)| w * vals[a][q] * vals[b][q]).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((s - target).abs());
            }
        }
        worst
    }

    pub fn modes_of(&self, k: u32) -> impl Iterator<Item = &SphereMode> {
        self.modes.iter().filter(move |m| m.k == k)
    }

    pub fn mode(&self, k: u32, m: u32) -> Option<&SphereMode> {
        self.modes.iter().find(|x| x.k == k && x.m == m)
    }

    /// Mode values sampled on the given quadrature rule, one row per mode.
    pub fn sample(&self, rule: &SphereRule) -> Vec<Vec<f64>> {
        self.modes.iter().map(|m| rule.points.iter().map(|p| m.value(self.sphere_dim, &to_vec3(p))).collect()).collect()
    }

    /// Check that numeric eigenvalues reproduce the predicted ladder and
    /// multiplicities for every complete rung.
    pub fn validate_against(&self, numeric: &[f64]) -> Result<Vec<RungCheck>> {
        let n = self.sphere_dim as u32;
        let mut checks = Vec::new();
        let top = numeric.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for k in 1..=self.k_max {
            let mu = ladder_f64(n, k)?;
            if mu > top * 1.005 {
                break;
            }
            let found = numeric.iter().filter(|&&v| (v - mu).abs() <= 0.01 * mu).count();
            let expected = multiplicity(self.sphere_dim, k).unwrap_or(0);
            let nearest = numeric.iter().cloned().min_by(|a, b| (a - mu).abs().partial_cmp(&(b - mu).abs()).unwrap()).unwrap_or(f64::NAN);
            checks.push(RungCheck { k, mu, nearest, relative_gap: (nearest - mu).abs() / mu, found, expected });
        }
        for c in &checks {
            // the highest rung may be truncated by the eigenvalue count
            let last = checks.last().map(|l| l.k) == Some(c.k);
            if c.found != c.expected && !(last && c.found < c.expected) {
                return Err(Error::validation(MODULE, format!("rung k={} has multiplicity {} numerically but {} predicted", c.k, c.found, c.expected)));
            }
        }
        Ok(checks)
    }
}

/// Comparison of one ladder rung against numeric eigenvalues.
#[derive(Debug, Clone, Serialize)]
pub struct RungCheck {
    pub k: u32,
    pub mu: f64,
    pub nearest: f64,
    pub relative_gap: f64,
    pub found: usize,
    pub expected: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn ladder_is_exact() {
        assert_eq!(ladder(2, 1).unwrap(), Ratio::new(3, 4));
        assert_eq!(ladder(1, 1).unwrap(), Ratio::new(1, 4));
        assert_eq!(ladder(2, 2).unwrap(), Ratio::new(2, 1));
        assert!(ladder(2, 0).is_err());
    }

    #[test]
    fn exact_mode_vanishes_on_slit() {
        for k in 1..6 {
            assert_eq!(exact_mode(k, &[1.0, 0.0]).unwrap(), 0.0);
            assert!(exact_mode(k, &[0.0, 1.0, 0.0]).unwrap().abs() < 1e-15);
            assert!(exact_mode(k, &[0.6, 0.8, 0.0]).unwrap().abs() < 1e-15);
        }
        assert!(exact_mode(1, &[0.0, 0.0, 1.0, 0.0]).unwrap().abs() < 1e-15);
        assert!(exact_mode(1, &[2.0, 0.0]).is_err());
    }

    #[test]
    fn first_mode_norm_matches_closed_form() {
        // ∫_{S^2} ρ sin²(t/2) = π²/2 and ∫_{S^1} sin²(t/2) = π
        let b2 = SlitSphereBasis::build(2, 1).unwrap();
        let c = b2.modes[0].terms[0].1;
        assert_relative_eq!(c, (2.0 / (PI * PI)).sqrt(), max_relative = 1e-10);
        let b1 = SlitSphereBasis::build(1, 1).unwrap();
        assert_relative_eq!(b1.modes[0].terms[0].1, 1.0 / PI.sqrt(), max_relative = 1e-10);
    }

    #[test]
    fn basis_is_orthonormal_with_predicted_multiplicities() {
        let b = SlitSphereBasis::build(2, 5).unwrap();
        assert!(b.orthonormality_defect < 1e-9);
        for k in 1..=5 {
            assert_eq!(b.modes_of(k).count(), multiplicity(2, k).unwrap());
        }
    }

    #[test]
    fn separated_harmonics_are_harmonic() {
        // finite-difference Laplacian of the homogeneous extension vanishes off the crack
        for (j, m) in [(1, 0), (1, 2), (3, 1), (2, 3), (1, 4)] {
            let h = SeparatedHarmonic::new(j, m);
            let x = Vec3::new(0.3, -0.4, 0.5);
            let e = 1e-3;
            let mut lap = 0.0;
            for i in 0..3 {
                let mut p = x;
                let mut q = x;
                p[i] += e;
                q[i] -= e;
                lap += (h.eval(2, &p).0 + h.eval(2, &q).0 - 2.0 * h.eval(2, &x).0) / (e * e);
            }
            assert!(lap.abs() < 1e-5, "j={j} m={m} lap={lap}");
        }
    }

    proptest! {
        #[test]
        fn ladder_times_four_is_integer(n in 1u32..20, k in 1u32..50) {
            let mu = ladder(n, k).unwrap() * Ratio::from_integer(4);
            prop_assert!(mu.is_integer());
            prop_assert_eq!(mu.to_integer(), (k * (k + 2 * n - 2)) as u64);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn modes_satisfy_weak_eigen_equation(c0 in -1.0f64..1.0, c1 in -1.0f64..1.0, c2 in -1.0f64..1.0) {
            // test functions vanishing on the slit: (ρ - x_N) * (c0 + c1 x_1 + c2 x_3)
            let b = SlitSphereBasis::build(2, 3).unwrap();
            let rule = SphereRule::new(2, 160, 160);
            for mode in &b.modes {
                let mu = ladder_f64(2, mode.k).unwrap();
                let mut lhs = 0.0;
                let mut rhs = 0.0;
                for (p, w) in rule.points.iter().zip(&rule.weights) {
                    let th = to_vec3(p);
                    let (y, gy) = mode.value_and_surface_gradient(2, &th);
                    let rho = th[1].hypot(th[2]);
                    let base = rho - th[1];
                    let poly = c0 + c1 * th[0] + c2 * th[2];
                    let phi = base * poly;
                    let gbase = Vec3::new(0.0, th[1] / rho - 1.0, th[2] / rho);
                    let gpoly = Vec3::new(c1, 0.0, c2);
                    let gphi = gbase * poly + gpoly * base;
                    let gphi_s = gphi - th * th.dot(&gphi);
                    lhs += w * gy.dot(&gphi_s);
                    rhs += w * mu * y * phi;
                }
                prop_assert!((lhs - rhs).abs() < 1e-4, "k={} lhs={} rhs={}", mode.k, lhs, rhs);
            }
        }
    }
}
