//! Potentials `f` and the report of the structural hypotheses they satisfy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

const MODULE: &str = "solver";

/// Radial potential families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PotentialFamily {
    Zero,
    /// `f(x) = c |x|^{-2+δ}` with `δ > 0`.
    InverseSquareSub {
        c: f64,
        delta: f64,
    },
    /// `f(x) = c`.
    Constant {
        c: f64,
    },
    /// `f(x) = Σ_i c_i |x|^{2i}`.
    SmoothRadial {
        coeffs: Vec<f64>,
    },
}

/// Which integrability hypothesis the Pohozaev remainder is written under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Hypothesis {
    /// Pointwise decay: the remainder is `∫ f u (x·∇u)`.
    #[default]
    H1,
    /// Differentiable potential: the remainder is written with `∇f·x`.
    H2,
}

/// A potential together with the hypothesis it is treated under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    #[serde(flatten)]
    pub family: PotentialFamily,
    #[serde(default)]
    pub hypothesis: Hypothesis,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec { family: PotentialFamily::Zero, hypothesis: Hypothesis::H1 }
    }
}

impl PotentialSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn inverse_square_sub(c: f64, delta: f64) -> Self {
        PotentialSpec { family: PotentialFamily::InverseSquareSub { c, delta }, hypothesis: Hypothesis::H1 }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.family {
            PotentialFamily::Zero => Ok(()),
            PotentialFamily::InverseSquareSub { c, delta } => {
                if !(c.is_finite() && *delta > 0.0 && *delta <= 2.0) {
                    Err(Error::precondition(MODULE, format!("inverse-square potential needs finite c and δ in (0, 2], got c={c}, δ={delta}")))
                } else {
                    Ok(())
                }
            }
            PotentialFamily::Constant { c } => {
                if c.is_finite() {
                    Ok(())
                } else {
                    Err(Error::precondition(MODULE, "constant potential must be finite"))
                }
            }
            PotentialFamily::SmoothRadial { coeffs } => {
                if coeffs.iter().all(|c| c.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::precondition(MODULE, "smooth radial coefficients must be finite"))
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match &self.family {
            PotentialFamily::Zero => true,
            PotentialFamily::InverseSquareSub { c, .. } | PotentialFamily::Constant { c } => *c == 0.0,
            PotentialFamily::SmoothRadial { coeffs } => coeffs.iter().all(|c| *c == 0.0),
        }
    }

    /// `f` as a function of the radius.
    pub fn radial(&self, r: f64) -> f64 {
        match &self.family {
            PotentialFamily::Zero => 0.0,
            PotentialFamily::InverseSquareSub { c, delta } => c * r.powf(delta - 2.0),
            PotentialFamily::Constant { c } => *c,
            PotentialFamily::SmoothRadial { coeffs } => {
                let r2 = r * r;
                coeffs.iter().rev().fold(0.0, |acc, c| acc * r2 + c)
            }
        }
    }

    /// `r f'(r)`, i.e. `∇f(x)·x`.
    pub fn radial_derivative_times_r(&self, r: f64) -> f64 {
        match &self.family {
            PotentialFamily::Zero | PotentialFamily::Constant { .. } => 0.0,
            PotentialFamily::InverseSquareSub { c, delta } => c * (delta - 2.0) * r.powf(delta - 2.0),
            PotentialFamily::SmoothRadial { coeffs } => {
                let r2 = r * r;
                coeffs.iter().enumerate().map(|(i, c)| 2.0 * i as f64 * c * r2.powi(i as i32)).sum()
            }
        }
    }

    pub fn value(&self, x: &Vec3) -> f64 {
        self.radial(x.norm())
    }

    /// `ξ_f(r) = sup_{B_r} |x|² |f(x)|`.
    pub fn xi(&self, r: f64) -> f64 {
        match &self.family {
            PotentialFamily::Zero => 0.0,
            PotentialFamily::InverseSquareSub { c, delta } => c.abs() * r.powf(*delta),
            PotentialFamily::Constant { c } => c.abs() * r * r,
            PotentialFamily::SmoothRadial { .. } => (0..=400)
                .map(|i| {
                    let s = r * i as f64 / 400.0;
                    s * s * self.radial(s).abs()
                })
                .fold(0.0, f64::max),
        }
    }

    /// `∫_0^R ξ_f(s)/s ds`.
    fn xi_integral(&self, big_r: f64) -> f64 {
        match &self.family {
            PotentialFamily::Zero => 0.0,
            PotentialFamily::InverseSquareSub { c, delta } => c.abs() * big_r.powf(*delta) / delta,
            PotentialFamily::Constant { c } => c.abs() * big_r * big_r / 2.0,
            PotentialFamily::SmoothRadial { .. } => crate::quadrature::gauss_legendre_interval(64, 0.0, big_r).iter().map(|(s, w)| w * self.xi(*s) / s).sum(),
        }
    }

    /// `∫_0^R (1/r) ∫_0^r ξ_f(s)/s ds dr`.
    fn averaged_xi_integral(&self, big_r: f64) -> f64 {
        match &self.family {
            PotentialFamily::Zero => 0.0,
            PotentialFamily::InverseSquareSub { c, delta } => c.abs() * big_r.powf(*delta) / (delta * delta),
            PotentialFamily::Constant { c } => c.abs() * big_r * big_r / 4.0,
            PotentialFamily::SmoothRadial { .. } => {
                crate::quadrature::gauss_legendre_interval(32, 0.0, big_r).iter().map(|(r, w)| w * self.xi_integral(*r) / r).sum()
            }
        }
    }
}

/// One checked hypothesis.
#[derive(Debug, Clone, Serialize)]
pub struct Condition {
    pub name: String,
    pub applicable: bool,
    pub passed: bool,
    pub detail: String,
}

/// Sampled hypothesis report for a potential on the cracked ball.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub sphere_dim: usize,
    pub radii: Vec<f64>,
    pub xi: Vec<f64>,
    /// `ω(r) = 2 ξ_f(r) / ((N - 1) r)`; undefined when `N = 1`.
    pub omega: Vec<Option<f64>>,
    /// Hardy-type bound on the relative size of the potential term.
    pub eta_bound: Vec<f64>,
    pub hardy_constant: f64,
    pub r0: f64,
    pub conditions: Vec<Condition>,
}

impl HypothesisReport {
    pub fn all_passed(&self) -> bool {
        self.conditions.iter().all(|c| !c.applicable || c.passed)
    }
}

/// Hardy constant used to bound the potential term: `(N-1)²/4` for `N >= 2`,
/// and the cracked-disk constant `1/4` (the first slit-circle eigenvalue) for
/// `N = 1`, where the crack-free constant vanishes.
pub fn hardy_constant(sphere_dim: usize) -> f64 {
    if sphere_dim >= 2 {
        let a = sphere_dim as f64 - 1.0;
        a * a / 4.0
    } else {
        0.25
    }
}

/// Evaluate the hypotheses on a logarithmic radius grid up to the validity
/// radius and determine `r_0`.
pub fn hypothesis_report(spec: &PotentialSpec, sphere_dim: usize, validity_radius: f64) -> Result<HypothesisReport> {
    spec.validate()?;
    if sphere_dim == 0 {
        return Err(Error::domain(MODULE, "sphere dimension must be at least 1"));
    }
    let n = 121;
    let lo = validity_radius * 1e-6;
    let radii: Vec<f64> = (0..n).map(|i| lo * (validity_radius / lo).powf(i as f64 / (n - 1) as f64)).collect();
    let xi: Vec<f64> = radii.iter().map(|&r| spec.xi(r)).collect();
    let nm1 = sphere_dim as f64 - 1.0;
    let omega: Vec<Option<f64>> = radii.iter().zip(&xi).map(|(&r, &x)| if sphere_dim >= 2 { Some(2.0 * x / (nm1 * r)) } else { None }).collect();
    let hardy = hardy_constant(sphere_dim);
    let eta_bound: Vec<f64> = xi.iter().map(|x| x / hardy).collect();

    let mut r0 = 0.0;
    for i in 0..n {
        let ok_eta = eta_bound[i] < 0.5;
        let ok_omega = omega[i].is_none_or(|w| radii[i] * w < nm1 / 4.0);
        if ok_eta && ok_omega {
            r0 = radii[i];
        } else {
            break;
        }
    }
    let mut conditions = Vec::new();
    let xi_small = spec.xi(validity_radius * 1e-8);
    conditions.push(Condition {
        name: "xi_vanishes_at_origin".into(),
        applicable: true,
        passed: xi_small < 1e-3 * spec.xi(validity_radius).max(1.0),
        detail: format!("xi_f(1e-8 R) = {xi_small:e}"),
    });
    let i1 = spec.xi_integral(validity_radius);
    conditions.push(Condition { name: "xi_over_r_integrable".into(), applicable: true, passed: i1.is_finite(), detail: format!("integral = {i1:e}") });
    let i2 = spec.averaged_xi_integral(validity_radius);
    conditions.push(Condition { name: "averaged_xi_integrable".into(), applicable: true, passed: i2.is_finite(), detail: format!("integral = {i2:e}") });
    let worst_romega = omega.iter().zip(&radii).filter(|(_, &r)| r <= r0).filter_map(|(w, r)| w.map(|w| w * r)).fold(0.0, f64::max);
    conditions.push(Condition {
        name: "r_omega_below_quarter_gap".into(),
        applicable: sphere_dim >= 2,
        passed: sphere_dim < 2 || worst_romega < nm1 / 4.0,
        detail: if sphere_dim >= 2 { format!("max r*omega on (0, r0] = {worst_romega:e} vs {}", nm1 / 4.0) } else { "vacuous for N = 1".into() },
    });
    let worst_eta = eta_bound.iter().zip(&radii).filter(|(_, &r)| r <= r0).map(|(e, _)| *e).fold(0.0, f64::max);
    conditions.push(Condition {
        name: "hardy_bound_below_half".into(),
        applicable: true,
        passed: r0 > 0.0 && worst_eta < 0.5,
        detail: format!("max eta bound on (0, r0] = {worst_eta:e}, hardy constant {hardy}"),
    });
    Ok(HypothesisReport { sphere_dim, radii, xi, omega, eta_bound, hardy_constant: hardy, r0, conditions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn xi_closed_forms() {
        let p = PotentialSpec::inverse_square_sub(0.3, 0.5);
        assert_relative_eq!(p.xi(0.25), 0.3 * 0.5, max_relative = 1e-14);
        let q = PotentialSpec { family: PotentialFamily::SmoothRadial { coeffs: vec![1.0, -2.0] }, hypothesis: Hypothesis::H2 };
        // on [0, 1/2], s²(1 - 2 s²) peaks at s² = 1/4 with value 1/8
        assert_relative_eq!(q.xi(0.5), 0.125, max_relative = 1e-3);
        assert_relative_eq!(p.radial_derivative_times_r(0.5), -1.5 * 0.3 * 0.5f64.powf(-1.5), max_relative = 1e-14);
    }

    #[test]
    fn r0_matches_hardy_threshold() {
        // 4 * 0.3 r^{1/2} < 1/2  <=>  r < (5/12)^2
        let rep = hypothesis_report(&PotentialSpec::inverse_square_sub(0.3, 0.5), 2, 1.0).unwrap();
        assert!(rep.r0 <= (5.0f64 / 12.0).powi(2));
        assert!(rep.r0 > 0.9 * (5.0f64 / 12.0).powi(2));
        assert!(rep.all_passed());
        let rep1 = hypothesis_report(&PotentialSpec::inverse_square_sub(0.3, 0.5), 1, 1.0).unwrap();
        assert!(rep1.omega.iter().all(|w| w.is_none()));
        assert!(!rep1.conditions.iter().find(|c| c.name == "r_omega_below_quarter_gap").unwrap().applicable);
    }

    #[test]
    fn invalid_potentials_are_rejected() {
        assert!(PotentialSpec::inverse_square_sub(0.3, 0.0).validate().is_err());
        assert!(PotentialSpec::inverse_square_sub(f64::NAN, 0.5).validate().is_err());
        let zero = hypothesis_report(&PotentialSpec::zero(), 2, 1.0).unwrap();
        assert_eq!(zero.r0, 1.0);
    }
}
