//! Crack geometry: the crack sheet, the radius-preserving straightening map
//! `Ξ`, its inverse `Φ`, and the coefficient fields of the straightened
//! operator.
//!
//! Coordinates are ordered `(x', x_N, x_{N+1})` with `N = d - 1`. The crack lies
//! in the hyperplane `x_{N+1} = 0` and occupies `x_N >= g(x')`. In dimension 2
//! there is no `x'` and the edge is the origin; in dimension 3 the edge is the
//! curve `x_2 = g(x_1)`. Points are stored as 3-vectors; for `d = 2` the third
//! component is unused and kept at zero.

pub mod smoothed;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

const MODULE: &str = "geometry";

/// Shape of the crack edge `x_N = g(x')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum CrackFamily {
    Flat,
    /// `g(x') = -a |x'|^2`
    Paraboloid {
        a: f64,
    },
    /// `g(x') = -a |x'|^2 - b |x'|^4`
    Quartic {
        a: f64,
        b: f64,
    },
}

impl CrackFamily {
    pub fn name(&self) -> &'static str {
        match self {
            CrackFamily::Flat => "flat",
            CrackFamily::Paraboloid { .. } => "paraboloid",
            CrackFamily::Quartic { .. } => "quartic",
        }
    }
}

/// Index of the coordinate `x_N` (the in-crack direction normal to the edge).
#[inline]
pub fn normal_axis(dim: usize) -> usize {
    dim - 2
}

/// Index of the coordinate `x_{N+1}` (normal to the crack hyperplane).
#[inline]
pub fn crack_axis(dim: usize) -> usize {
    dim - 1
}

/// A validated crack geometry together with its working radius.
#[derive(Debug, Clone, Serialize)]
pub struct CrackGeometry {
    pub dim: usize,
    pub family: CrackFamily,
    /// Radius on which the sheet function is assumed valid.
    pub validity_radius: f64,
    /// Fitted constant `C` with `|g(x')| <= C |x'|^2` on the validity ball.
    pub curvature_constant: f64,
    /// Minimum sampled value of `g - x'·∇g`; nonnegative for star-shaped cracks.
    pub star_margin: f64,
    /// Largest dyadic radius on which the straightening map passed the
    /// invertibility scan.
    pub r_bar: f64,
}

/// Coefficient data of the straightened operator at a straightened point `y`.
#[derive(Debug, Clone, Copy)]
pub struct Coefficients {
    /// Diffusion matrix `A(y)`.
    pub a: Mat3,
    /// Volume weight `w(y) = |det JΦ(y)|`.
    pub w: f64,
    /// Original point `Φ(y)`.
    pub phi: Vec3,
    /// Jacobian `JΦ(y)`.
    pub jphi: Mat3,
    /// Jacobian `JΞ(Φ(y))`, the inverse of `jphi`.
    pub jxi: Mat3,
}

impl CrackGeometry {
    /// Validate parameters, fit the curvature constant, check star-shape and
    /// determine the working radius.
    pub fn construct(dim: usize, family: CrackFamily, validity_radius: f64) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::construction(MODULE, format!("ambient dimension {dim} unsupported; numerics need d in {{2,3}}")));
        }
        if !(validity_radius.is_finite() && validity_radius > 0.0) {
            return Err(Error::construction(MODULE, format!("validity radius {validity_radius} must be positive")));
        }
        match family {
            CrackFamily::Flat => {}
            CrackFamily::Paraboloid { a } => {
                if !a.is_finite() {
                    return Err(Error::construction(MODULE, "paraboloid coefficient must be finite"));
                }
            }
            CrackFamily::Quartic { a, b } => {
                if !(a.is_finite() && b.is_finite()) {
                    return Err(Error::construction(MODULE, "quartic coefficients must be finite"));
                }
            }
        }
        if dim == 2 && family != CrackFamily::Flat {
            return Err(Error::construction(MODULE, "in dimension 2 the crack edge is a point; only the flat family applies"));
        }
        let mut geom = CrackGeometry { dim, family, validity_radius, curvature_constant: 0.0, star_margin: 0.0, r_bar: 0.0 };
        let samples = 2001;
        let mut c_fit: f64 = 0.0;
        let mut margin = f64::INFINITY;
        for i in 0..samples {
            let s = validity_radius * (i as f64) / (samples - 1) as f64;
            for &x1 in &[s, -s] {
                let g = geom.height(x1);
                if s > 0.0 {
                    c_fit = c_fit.max(g.abs() / (s * s));
                }
                margin = margin.min(g - x1 * geom.slope(x1));
            }
        }
        if margin < -1e-14 {
            return Err(Error::construction(MODULE, format!("crack is not star-shaped: min of g - x'·grad g is {margin:e} < 0")));
        }
        geom.curvature_constant = c_fit;
        geom.star_margin = margin.max(0.0);

        let mut j = (-(validity_radius / 4.0).log2()).ceil() as i32;
        loop {
            let r = 2f64.powi(-j);
            if geom.invertibility_scan(r, 1000, 0x5eed).is_ok() {
                geom.r_bar = r;
                break;
            }
            j += 1;
            if j > 60 {
                return Err(Error::construction(MODULE, "straightening map failed the invertibility scan at every dyadic radius"));
            }
        }
        Ok(geom)
    }

    pub fn flat(dim: usize) -> Self {
        Self::construct(dim, CrackFamily::Flat, 1.0).expect("flat crack is always valid")
    }

    pub fn is_flat(&self) -> bool {
        match self.family {
            CrackFamily::Flat => true,
            CrackFamily::Paraboloid { a } => a == 0.0,
            CrackFamily::Quartic { a, b } => a == 0.0 && b == 0.0,
        }
    }

    pub fn sphere_dim(&self) -> usize {
        self.dim - 1
    }

    /// Edge height `g(x_1)`; zero in dimension 2.
    pub fn height(&self, x1: f64) -> f64 {
        if self.dim == 2 {
            return 0.0;
        }
        match self.family {
            CrackFamily::Flat => 0.0,
            CrackFamily::Paraboloid { a } => -a * x1 * x1,
            CrackFamily::Quartic { a, b } => {
                let s2 = x1 * x1;
                -a * s2 - b * s2 * s2
            }
        }
    }

    /// Derivative `g'(x_1)`.
    pub fn slope(&self, x1: f64) -> f64 {
        if self.dim == 2 {
            return 0.0;
        }
        match self.family {
            CrackFamily::Flat => 0.0,
            CrackFamily::Paraboloid { a } => -2.0 * a * x1,
            CrackFamily::Quartic { a, b } => -2.0 * a * x1 - 4.0 * b * x1 * x1 * x1,
        }
    }

    fn edge_height_at(&self, y: &Vec3) -> (f64, f64) {
        if self.dim == 3 {
            (self.height(y[0]), self.slope(y[0]))
        } else {
            (0.0, 0.0)
        }
    }

    /// Whether `x` lies on the (curved-edge) crack.
    pub fn on_crack(&self, x: &Vec3, tol: f64) -> bool {
        let (g, _) = self.edge_height_at(x);
        x[crack_axis(self.dim)].abs() <= tol && x[normal_axis(self.dim)] >= g - tol
    }

    /// The straightening map `Ξ`.
    pub fn xi(&self, y: &Vec3) -> Vec3 {
        if self.is_flat() {
            return *y;
        }
        let r2 = y.norm_squared();
        if r2 == 0.0 {
            return *y;
        }
        let k = normal_axis(self.dim);
        let (g, _) = self.edge_height_at(y);
        let q = g * g - 2.0 * g * y[k];
        let s = (1.0 + q / r2).sqrt();
        let mut p = *y;
        p[k] -= g;
        p / s
    }

    /// Analytic Jacobian of `Ξ`.
    pub fn jac_xi(&self, y: &Vec3) -> Mat3 {
        if self.is_flat() {
            return Mat3::identity();
        }
        let r2 = y.norm_squared();
        if r2 == 0.0 {
            return Mat3::identity();
        }
        let k = normal_axis(self.dim);
        let (g, dg) = self.edge_height_at(y);
        let mut p = *y;
        p[k] -= g;
        let mut dp = Mat3::identity();
        if self.dim == 3 {
            dp[(k, 0)] = -dg;
        }
        let q = g * g - 2.0 * g * y[k];
        let mut dq = Vec3::zeros();
        if self.dim == 3 {
            dq[0] = (2.0 * g - 2.0 * y[k]) * dg;
        }
        dq[k] = -2.0 * g;
        let qq = 1.0 + q / r2;
        let dqq = dq / r2 - y * (2.0 * q / (r2 * r2));
        let s = qq.powf(-0.5);
        let ds = dqq * (-0.5 * qq.powf(-1.5));
        let mut j = dp * s + p * ds.transpose();
        if self.dim == 2 {
            j[(2, 2)] = 1.0;
        }
        j
    }

    /// Central finite-difference Jacobian of `Ξ`, used as a cross-check.
    pub fn jac_xi_fd(&self, y: &Vec3) -> Mat3 {
        let h = 1e-6 * y.norm().max(1e-3);
        let mut j = Mat3::identity();
        for c in 0..self.dim {
            let mut yp = *y;
            let mut ym = *y;
            yp[c] += h;
            ym[c] -= h;
            let col = (self.xi(&yp) - self.xi(&ym)) / (2.0 * h);
            for r in 0..self.dim {
                j[(r, c)] = col[r];
            }
        }
        j
    }

    /// The inverse map `Φ = Ξ^{-1}` by Newton iteration from `y = x`.
    pub fn phi(&self, x: &Vec3) -> Result<Vec3> {
        if self.is_flat() {
            return Ok(*x);
        }
        let scale = x.norm();
        if scale == 0.0 {
            return Ok(*x);
        }
        let mut y = *x;
        for _ in 0..60 {
            let res = self.xi(&y) - x;
            if res.norm() <= 1e-15 * scale {
                return Ok(y);
            }
            let j = self.jac_xi(&y);
            let step = match j.try_inverse() {
                Some(inv) => inv * res,
                None => return Err(Error::numerical(MODULE, format!("singular Jacobian of the straightening map at {y:?}"))),
            };
            y -= step;
            if step.norm() <= 1e-15 * scale {
                return Ok(y);
            }
        }
        let res = (self.xi(&y) - x).norm();
        if res <= 1e-12 * scale {
            Ok(y)
        } else {
            Err(Error::numerical(MODULE, format!("Newton inversion of the straightening map did not converge at {x:?} (residual {res:e})")))
        }
    }

    /// Coefficients of the straightened operator at the straightened point `y`.
    pub fn coefficients(&self, y: &Vec3) -> Result<Coefficients> {
        if self.is_flat() {
            return Ok(Coefficients { a: Mat3::identity(), w: 1.0, phi: *y, jphi: Mat3::identity(), jxi: Mat3::identity() });
        }
        let phi = self.phi(y)?;
        let j = self.jac_xi(&phi);
        let det = j.determinant();
        if !(det > 0.0) {
            return Err(Error::numerical(MODULE, format!("straightening Jacobian not positive at {phi:?}")));
        }
        let jphi = j.try_inverse().ok_or_else(|| Error::numerical(MODULE, "singular straightening Jacobian"))?;
        let w = 1.0 / det;
        let mut a = j * j.transpose() * w;
        if self.dim == 2 {
            a[(2, 2)] = 1.0;
        }
        Ok(Coefficients { a, w, phi, jphi, jxi: j })
    }

    /// Check invertibility of `Ξ` on `n` seeded points of the ball of radius `r`.
    pub fn invertibility_scan(&self, r: f64, n: usize, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n {
            let y = sample_ball(&mut rng, self.dim, r);
            let det = self.jac_xi(&y).determinant();
            if !(det > 0.0) {
                return Err(Error::numerical(MODULE, format!("Jacobian determinant {det:e} at {y:?}")));
            }
            let x = self.xi(&y);
            let back = self.phi(&x)?;
            let err = (back - y).norm();
            if err > 1e-10 * y.norm().max(1e-12) {
                return Err(Error::numerical(MODULE, format!("round trip error {err:e} at {y:?}")));
            }
        }
        Ok(())
    }

    /// Largest sampled `‖A(y) - I‖ / |y|` on each ball `B_r`.
    pub fn coefficient_deviation_scan(&self, radii: &[f64], samples: usize, seed: u64) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.dim;
        radii
            .iter()
            .map(|&r| {
                let mut worst: f64 = 0.0;
                for _ in 0..samples {
                    let y = sample_ball(&mut rng, d, r);
                    let n = y.norm();
                    if n == 0.0 {
                        continue;
                    }
                    let a = self.coefficients(&y)?.a;
                    let dev = nalgebra::DMatrix::from_fn(d, d, |i, j| a[(i, j)] - if i == j { 1.0 } else { 0.0 }).norm();
                    worst = worst.max(dev / n);
                }
                Ok(worst)
            })
            .collect()
    }

    /// Sampled invariants of the straightening on the working ball.
    pub fn invariant_audit(&self, samples: usize, seed: u64) -> Result<InvariantAudit> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut audit = InvariantAudit::default();
        let d = self.dim;
        for i in 0..samples {
            let mut y = sample_ball(&mut rng, d, self.r_bar);
            if i % 4 == 0 {
                // points on the crack itself
                y[crack_axis(d)] = 0.0;
                let (g, _) = self.edge_height_at(&y);
                let k = normal_axis(d);
                y[k] = g + (y[k].abs());
            }
            let r = y.norm();
            let x = self.xi(&y);
            audit.max_norm_defect = audit.max_norm_defect.max((x.norm() - r).abs() / r.max(1e-300));
            let back = self.phi(&x)?;
            audit.max_round_trip_defect = audit.max_round_trip_defect.max((back - y).norm() / r.max(1e-300));
            if self.on_crack(&y, 0.0) {
                audit.crack_points += 1;
                let off = x[crack_axis(d)].abs();
                let below = (-x[normal_axis(d)]).max(0.0);
                audit.max_crack_defect = audit.max_crack_defect.max(off.max(below));
            }
            let c = self.coefficients(&x)?;
            let a = c.a.fixed_view::<3, 3>(0, 0).into_owned();
            let asym = (a - a.transpose()).abs().max();
            audit.max_asymmetry = audit.max_asymmetry.max(asym);
            let sub = nalgebra::DMatrix::from_fn(d, d, |i, j| a[(i, j)]);
            let eig = sub.clone().symmetric_eigen();
            audit.min_eigenvalue = audit.min_eigenvalue.min(eig.eigenvalues.min());
            let det_a = sub.determinant();
            let expected = c.w.powi(d as i32 - 2);
            audit.max_det_defect = audit.max_det_defect.max((det_a - expected).abs() / expected);
            let identity_defect = (c.w * c.w - det_a * c.w.powi(d as i32 - 2)).abs();
            audit.max_weight_identity_defect = audit.max_weight_identity_defect.max(identity_defect);
            let dev = (sub - nalgebra::DMatrix::identity(d, d)).norm();
            if r > 0.0 {
                audit.fitted_a_constant = audit.fitted_a_constant.max(dev / r);
            }
            let fd = self.jac_xi_fd(&y);
            let an = self.jac_xi(&y);
            audit.max_jacobian_fd_gap = audit.max_jacobian_fd_gap.max((fd - an).abs().max());
        }
        audit.samples = samples;
        Ok(audit)
    }
}

/// Results of [`CrackGeometry::invariant_audit`].
#[derive(Debug, Clone, Serialize)]
pub struct InvariantAudit {
    pub samples: usize,
    pub crack_points: usize,
    pub max_norm_defect: f64,
    /// Largest `|Φ(Ξ(y)) - y| / |y|`.
    pub max_round_trip_defect: f64,
    pub max_crack_defect: f64,
    pub max_asymmetry: f64,
    pub min_eigenvalue: f64,
    pub max_det_defect: f64,
    pub max_weight_identity_defect: f64,
    pub fitted_a_constant: f64,
    pub max_jacobian_fd_gap: f64,
}

impl Default for InvariantAudit {
    fn default() -> Self {
        InvariantAudit {
            samples: 0,
            crack_points: 0,
            max_norm_defect: 0.0,
            max_round_trip_defect: 0.0,
            max_crack_defect: 0.0,
            max_asymmetry: 0.0,
            min_eigenvalue: f64::INFINITY,
            max_det_defect: 0.0,
            max_weight_identity_defect: 0.0,
            fitted_a_constant: 0.0,
            max_jacobian_fd_gap: 0.0,
        }
    }
}

impl InvariantAudit {
    /// Radius preservation to 1e-10 and the round trip to 1e-8, with the
    /// coefficient matrix symmetric positive definite.
    pub fn passed(&self) -> bool {
        self.samples > 0
            && self.max_norm_defect <= 1e-10
            && self.max_round_trip_defect <= 1e-8
            && self.max_crack_defect <= 1e-10
            && self.max_asymmetry <= 1e-12
            && self.min_eigenvalue > 0.0
            && self.max_det_defect <= 1e-8
    }
}

/// Uniform sample from the ball of radius `r` in `R^dim` (padded to 3 components).
pub fn sample_ball(rng: &mut impl Rng, dim: usize, r: f64) -> Vec3 {
    loop {
        let mut v = Vec3::zeros();
        for i in 0..dim {
            v[i] = rng.gen_range(-1.0..1.0);
        }
        let n2 = v.norm_squared();
        if n2 <= 1.0 && n2 > 1e-12 {
            return v * r;
        }
    }
}

/// Largest dyadic number `2^{-j}` not exceeding `r`.
pub fn dyadic_floor(r: f64) -> f64 {
    2f64.powi(r.log2().floor() as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn parab() -> CrackGeometry {
        CrackGeometry::construct(3, CrackFamily::Paraboloid { a: 0.5 }, 1.0).unwrap()
    }

    #[test]
    fn flat_geometry_is_identity() {
        let g = CrackGeometry::flat(3);
        let y = Vec3::new(0.1, -0.2, 0.05);
        assert_eq!(g.xi(&y), y);
        assert_eq!(g.phi(&y).unwrap(), y);
        let c = g.coefficients(&y).unwrap();
        assert_eq!(c.a, Mat3::identity());
        assert_eq!(c.w, 1.0);
        assert_eq!(g.r_bar, 0.25);
    }

    #[test]
    fn convex_crack_is_rejected() {
        let err = CrackGeometry::construct(3, CrackFamily::Paraboloid { a: -0.5 }, 1.0).unwrap_err();
        assert!(matches!(err, Error::Construction { .. }));
        assert!(CrackGeometry::construct(2, CrackFamily::Paraboloid { a: 0.5 }, 1.0).is_err());
        assert!(CrackGeometry::construct(4, CrackFamily::Flat, 1.0).is_err());
    }

    #[test]
    fn curvature_constant_is_fitted() {
        assert_relative_eq!(parab().curvature_constant, 0.5, epsilon = 1e-12);
        let q = CrackGeometry::construct(3, CrackFamily::Quartic { a: 0.3, b: 0.2 }, 0.5).unwrap();
        assert_relative_eq!(q.curvature_constant, 0.3 + 0.2 * 0.25, epsilon = 1e-9);
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences() {
        let g = parab();
        let y = Vec3::new(0.07, -0.03, 0.02);
        let gap = (g.jac_xi(&y) - g.jac_xi_fd(&y)).abs().max();
        assert!(gap < 1e-7, "gap {gap}");
    }

    #[test]
    fn invariants_hold_on_samples() {
        let g = parab();
        let a = g.invariant_audit(400, 7).unwrap();
        assert!(a.max_norm_defect < 1e-12);
        assert!(a.max_round_trip_defect < 1e-10);
        assert!(a.max_crack_defect < 1e-12);
        assert!(a.min_eigenvalue > 0.0);
        assert!(a.max_det_defect < 1e-10);
        assert!(a.max_weight_identity_defect < 1e-10);
        assert!(a.passed());
    }

    #[test]
    fn coefficient_deviation_stays_bounded_near_the_edge() {
        let g = parab();
        let radii: Vec<f64> = (0..8).map(|i| g.r_bar * 0.5f64.powi(i)).collect();
        let scan = g.coefficient_deviation_scan(&radii, 500, 3).unwrap();
        assert!(scan.iter().all(|v| v.is_finite() && *v <= scan[0] * 1.5 + 1e-12), "{scan:?}");
        let flat = CrackGeometry::flat(3).coefficient_deviation_scan(&radii, 100, 3).unwrap();
        assert!(flat.iter().all(|v| *v == 0.0));
    }

    proptest! {
        #[test]
        fn straightening_round_trips(x1 in -0.2f64..0.2, x2 in -0.2f64..0.2, x3 in -0.2f64..0.2) {
            let g = parab();
            let y = Vec3::new(x1, x2, x3);
            prop_assume!(y.norm() > 1e-8);
            let x = g.xi(&y);
            prop_assert!((x.norm() - y.norm()).abs() <= 1e-13 * y.norm().max(1.0));
            let back = g.phi(&x).unwrap();
            prop_assert!((back - y).norm() <= 1e-11 * y.norm());
        }

        #[test]
        fn dyadic_floor_brackets(r in 1e-6f64..10.0) {
            let d = dyadic_floor(r);
            prop_assert!(d <= r && 2.0 * d > r);
        }
    }
}
