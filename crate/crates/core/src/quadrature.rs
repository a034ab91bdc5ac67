//! Quadrature rules: Gauss–Legendre on intervals, collapsed product rules on
//! simplices and product rules on the unit circle and the unit 2-sphere.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "gauss_legendre needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_interval(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    x.iter().zip(&w).map(|(&xi, &wi)| (mid + half * xi, half * wi)).collect()
}

/// Quadrature rule on the reference simplex of dimension `dim`, given as
/// barycentric coordinates (length `dim + 1`) and weights summing to 1.
#[derive(Debug, Clone)]
pub struct SimplexRule {
    pub dim: usize,
    pub bary: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl SimplexRule {
    /// Collapsed (Duffy) product Gauss rule with `n` points per direction.
    pub fn collapsed(dim: usize, n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        let u: Vec<f64> = x.iter().map(|v| 0.5 * (v + 1.0)).collect();
        let wu: Vec<f64> = w.iter().map(|v| 0.5 * v).collect();
        let mut bary = Vec::new();
        let mut weights = Vec::new();
        match dim {
            1 => {
                for i in 0..n {
                    bary.push(vec![1.0 - u[i], u[i]]);
                    weights.push(wu[i]);
                }
            }
            2 => {
                for i in 0..n {
                    for j in 0..n {
                        let s = u[i];
                        let t = u[j] * (1.0 - s);
                        bary.push(vec![1.0 - s - t, s, t]);
                        weights.push(2.0 * wu[i] * wu[j] * (1.0 - s));
                    }
                }
            }
            3 => {
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            let a = u[i];
                            let b = u[j] * (1.0 - a);
                            let c = u[k] * (1.0 - a - b);
                            bary.push(vec![1.0 - a - b - c, a, b, c]);
                            weights.push(6.0 * wu[i] * wu[j] * wu[k] * (1.0 - a) * (1.0 - a - b));
                        }
                    }
                }
            }
            _ => panic!("simplex rules are provided for dimensions 1 to 3"),
        }
        SimplexRule { dim, bary, weights }
    }

    /// Symmetric low-order rule: degree 2 with `dim + 1` interior points.
    pub fn degree2(dim: usize) -> Self {
        match dim {
            2 => {
                let a = 1.0 / 6.0;
                let b = 2.0 / 3.0;
                SimplexRule { dim, bary: vec![vec![b, a, a], vec![a, b, a], vec![a, a, b]], weights: vec![1.0 / 3.0; 3] }
            }
            3 => {
                let a = 0.138_196_601_125_010_5;
                let b = 0.585_410_196_624_968_5;
                SimplexRule { dim, bary: vec![vec![b, a, a, a], vec![a, b, a, a], vec![a, a, b, a], vec![a, a, a, b]], weights: vec![0.25; 4] }
            }
            _ => Self::collapsed(dim, 2),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Product quadrature on the unit sphere `S^N` for `N = 1` or `N = 2`.
///
/// For `N = 1` the node at angle `t` is `(cos t, sin t)`. For `N = 2` the node
/// is `(cos θ, sin θ cos t, sin θ sin t)`: `θ` is the polar angle from the
/// first axis and `t` the azimuth in the plane of the last two axes. In both
/// cases the slit sits at `t = 0`, so Gauss nodes never touch it.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub sphere_dim: usize,
    pub n_theta: usize,
    pub n_t: usize,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    pub fn new(sphere_dim: usize, n_theta: usize, n_t: usize) -> Self {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let ts = gauss_legendre_interval(n_t, 0.0, 2.0 * PI);
        match sphere_dim {
            1 => {
                for &(t, wt) in &ts {
                    points.push(vec![t.cos(), t.sin()]);
                    weights.push(wt);
                }
            }
            2 => {
                let ths = gauss_legendre_interval(n_theta, 0.0, PI);
                for &(th, wth) in &ths {
                    let (s, c) = th.sin_cos();
                    for &(t, wt) in &ts {
                        points.push(vec![c, s * t.cos(), s * t.sin()]);
                        weights.push(wth * wt * s);
                    }
                }
            }
            _ => panic!("sphere rules are provided for S^1 and S^2"),
        }
        SphereRule { sphere_dim, n_theta, n_t, points, weights }
    }

    /// Default resolution adequate for fields with a square-root edge singularity.
    pub fn standard(sphere_dim: usize) -> Self {
        match sphere_dim {
            1 => Self::new(1, 1, 256),
            _ => Self::new(2, 48, 96),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn ambient_dim(&self) -> usize {
        self.sphere_dim + 1
    }
}

/// Surface measure of the unit sphere `S^N` in `R^{N+1}`.
pub fn sphere_area(sphere_dim: usize) -> f64 {
    let n = sphere_dim as f64 + 1.0;
    2.0 * PI.powf(n / 2.0) / gamma(n / 2.0)
}

/// Gamma function for positive half-integers and integers.
pub fn gamma(x: f64) -> f64 {
    if x == 0.5 {
        return PI.sqrt();
    }
    if x == 1.0 {
        return 1.0;
    }
    (x - 1.0) * gamma(x - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            for p in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(p as i32)).sum();
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} p={p} q={q}");
            }
        }
    }

    #[test]
    fn simplex_rules_integrate_monomials() {
        // integral of x^a y^b over the unit triangle is a! b! / (a+b+2)!
        let rule = SimplexRule::collapsed(2, 4);
        let fact = |n: u32| (1..=n).product::<u32>().max(1) as f64;
        for a in 0..4u32 {
            for b in 0..(4 - a) {
                let q: f64 = rule.bary.iter().zip(&rule.weights).map(|(l, w)| w * l[1].powi(a as i32) * l[2].powi(b as i32)).sum::<f64>() / 2.0;
                assert_relative_eq!(q, fact(a) * fact(b) / fact(a + b + 2), max_relative = 1e-12);
            }
        }
        let tet = SimplexRule::collapsed(3, 3);
        let q: f64 = tet.bary.iter().zip(&tet.weights).map(|(l, w)| w * l[1] * l[2] * l[3]).sum::<f64>() / 6.0;
        assert_relative_eq!(q, 1.0 / 720.0, max_relative = 1e-12);
        for d in 2..=3 {
            let r = SimplexRule::degree2(d);
            assert_relative_eq!(r.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn sphere_rules_reproduce_area() {
        let c = SphereRule::new(1, 1, 32);
        assert_relative_eq!(c.weights.iter().sum::<f64>(), 2.0 * PI, max_relative = 1e-13);
        let s = SphereRule::new(2, 16, 32);
        assert_relative_eq!(s.weights.iter().sum::<f64>(), 4.0 * PI, max_relative = 1e-13);
        assert_relative_eq!(sphere_area(2), 4.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(sphere_area(3), 2.0 * PI * PI, max_relative = 1e-14);
    }
}
