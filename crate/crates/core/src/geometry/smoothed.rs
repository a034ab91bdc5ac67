//! Smoothed approximating domains: the crack is replaced by a thin notch whose
//! wall is the graph `x_N = g(x') + f_n(x_{N+1})`.

use serde::Serialize;

use super::{crack_axis, normal_axis, CrackGeometry, Vec3};
use crate::error::{Error, Result};

const MODULE: &str = "geometry";

/// Smoothing profile `f_n(t)`: `n|t| + exp(2n²|t|/(n²|t| - 2))/n` for
/// `|t| < 2/n²` and `n|t|` beyond.
pub fn notch_profile(n: u32, t: f64) -> f64 {
    let nf = n as f64;
    let a = t.abs();
    let cut = 2.0 / (nf * nf);
    if a < cut {
        let e = 2.0 * nf * nf * a / (nf * nf * a - 2.0);
        nf * a + e.exp() / nf
    } else {
        nf * a
    }
}

/// Derivative `f_n'(t)`.
pub fn notch_profile_slope(n: u32, t: f64) -> f64 {
    let nf = n as f64;
    let a = t.abs();
    let cut = 2.0 / (nf * nf);
    let d = if a < cut {
        let den = nf * nf * a - 2.0;
        let e = 2.0 * nf * nf * a / den;
        let de = -4.0 * nf * nf / (den * den);
        nf + e.exp() * de / nf
    } else {
        nf
    };
    if t < 0.0 {
        -d
    } else {
        d
    }
}

/// The domain `{|x| < r, x_N < g(x') + f_n(x_{N+1})}`.
#[derive(Debug, Clone, Serialize)]
pub struct SmoothedDomain {
    pub n: u32,
    pub radius: f64,
    pub geometry: CrackGeometry,
}

/// Outcome of the star-shape certificate.
#[derive(Debug, Clone, Serialize)]
pub struct StarCertificate {
    pub samples: usize,
    pub min_support: f64,
    pub passed: bool,
}

impl SmoothedDomain {
    pub fn new(geometry: &CrackGeometry, n: u32, radius: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::construction(MODULE, "smoothing index n must be positive"));
        }
        if !(radius > 0.0) {
            return Err(Error::construction(MODULE, "smoothed domain radius must be positive"));
        }
        Ok(SmoothedDomain { n, radius, geometry: geometry.clone() })
    }

    fn wall(&self, x: &Vec3) -> f64 {
        let d = self.geometry.dim;
        let g = if d == 3 { self.geometry.height(x[0]) } else { 0.0 };
        g + notch_profile(self.n, x[crack_axis(d)])
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        x.norm() < self.radius && x[normal_axis(self.geometry.dim)] < self.wall(x)
    }

    /// Unit outward normal on the notch wall through the point with the given
    /// `x'` and `x_{N+1}` coordinates.
    pub fn wall_normal(&self, x1: f64, t: f64) -> Vec3 {
        let d = self.geometry.dim;
        let dg = if d == 3 { self.geometry.slope(x1) } else { 0.0 };
        let fp = notch_profile_slope(self.n, t);
        let mut nu = Vec3::zeros();
        if d == 3 {
            nu[0] = -dg;
        }
        nu[normal_axis(d)] = 1.0;
        nu[crack_axis(d)] = -fp;
        nu / (1.0 + fp * fp + dg * dg).sqrt()
    }

    /// Sample the support function `x·ν` on the notch wall inside the ball
    /// and on the spherical cap; star-shapedness requires it nonnegative.
    pub fn star_certificate(&self, samples: usize) -> StarCertificate {
        let d = self.geometry.dim;
        let mut min_support = f64::INFINITY;
        let nf = self.n as f64;
        let tmax = self.radius;
        let m1 = if d == 3 { (samples as f64).sqrt().ceil() as usize } else { 1 };
        let mt = samples.div_ceil(m1).max(2);
        let mut count = 0;
        for i in 0..m1 {
            let x1 = if d == 3 { -self.radius + 2.0 * self.radius * (i as f64 + 0.5) / m1 as f64 } else { 0.0 };
            for j in 0..mt {
                // cluster samples near the smoothed tip region
                let s = -1.0 + 2.0 * (j as f64) / (mt - 1) as f64;
                let t = if j % 2 == 0 { s * 3.0 / (nf * nf) } else { s * tmax };
                let mut x = Vec3::zeros();
                if d == 3 {
                    x[0] = x1;
                }
                x[crack_axis(d)] = t;
                x[normal_axis(d)] = self.wall(&x);
                if x.norm() >= self.radius {
                    continue;
                }
                let nu = self.wall_normal(x1, t);
                min_support = min_support.min(x.dot(&nu));
                count += 1;
            }
        }
        // spherical part of the boundary has support function equal to the radius
        min_support = min_support.min(self.radius);
        StarCertificate { samples: count, min_support, passed: min_support >= -1e-10 }
    }

    /// In dimension 2, the polar angle range `[τ, 2π - τ]` of the circle of
    /// radius `rho` that lies inside the domain (`τ = 0` inside the tip).
    pub fn angular_gap(&self, rho: f64) -> f64 {
        let tip = 1.0 / self.n as f64;
        if rho <= tip {
            return 0.0;
        }
        // solve f_n(t)^2 + t^2 = rho^2 for t in [0, rho]
        let (mut lo, mut hi) = (0.0f64, rho);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let f = notch_profile(self.n, mid);
            if f * f + mid * mid < rho * rho {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        t.atan2(notch_profile(self.n, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn profile_values_at_key_points() {
        for n in [2u32, 5, 16] {
            let nf = n as f64;
            assert_relative_eq!(notch_profile(n, 0.0), 1.0 / nf, epsilon = 1e-15);
            let c = 2.0 / (nf * nf);
            assert_relative_eq!(notch_profile(n, c), 2.0 / nf, epsilon = 1e-15);
            assert_relative_eq!(notch_profile(n, c * (1.0 - 1e-9)), 2.0 / nf, epsilon = 1e-7);
            assert_eq!(notch_profile(n, -0.3), notch_profile(n, 0.3));
        }
    }

    #[test]
    fn slope_matches_finite_differences() {
        let n = 7;
        for &t in &[0.001, 0.02, 0.039, 0.05, -0.01] {
            let h = 1e-7;
            let fd = (notch_profile(n, t + h) - notch_profile(n, t - h)) / (2.0 * h);
            assert_relative_eq!(notch_profile_slope(n, t), fd, max_relative = 1e-5);
        }
    }

    #[test]
    fn smoothed_domains_are_star_shaped() {
        let flat = CrackGeometry::flat(2);
        for n in [8u32, 16, 32] {
            let dom = SmoothedDomain::new(&flat, n, 0.25).unwrap();
            assert!(dom.star_certificate(4000).passed);
            assert!(!dom.contains(&Vec3::new(0.2, 0.0, 0.0)));
            assert!(dom.contains(&Vec3::new(-0.1, 0.0, 0.0)));
        }
        let par = CrackGeometry::construct(3, crate::geometry::CrackFamily::Paraboloid { a: 0.5 }, 1.0).unwrap();
        let dom = SmoothedDomain::new(&par, 8, 0.25).unwrap();
        assert!(dom.star_certificate(4000).passed);
    }

    #[test]
    fn angular_gap_matches_wall() {
        let dom = SmoothedDomain::new(&CrackGeometry::flat(2), 10, 0.25).unwrap();
        assert_eq!(dom.angular_gap(0.05), 0.0);
        let tau = dom.angular_gap(0.2);
        let p = Vec3::new(0.2 * tau.cos(), 0.2 * tau.sin(), 0.0);
        assert_relative_eq!(notch_profile(10, p[1]), p[0], epsilon = 1e-12);
    }
}
