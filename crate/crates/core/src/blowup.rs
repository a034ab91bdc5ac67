//! Blow-up analysis at the crack edge: the normalised rescalings `w^λ`, the
//! Fourier coefficients `φ_{k,m}(λ)` of the straightened field on the slit
//! sphere, the correction integrals `Υ_{k,m}(λ)`, and the two routes to the
//! coefficients `β_m` of the limiting profile.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{sphere_integrals, Field, Integrand, Pullback};
use crate::geometry::{CrackGeometry, Mat3, Vec3};
use crate::io::fmt_g17;
use crate::quadrature::{gauss_legendre_interval, SphereRule};
use crate::solver::potential::PotentialSpec;
use crate::spectral::{to_vec3, SlitSphereBasis, SphereMode};

const MODULE: &str = "blowup";

/// Largest tolerated ratio between the estimated tail below `λ_cut` and the
/// leading term of the integral formula.
pub const TAIL_LIMIT: f64 = 0.1;

/// `w^λ(x) = u(λx)/√H(λ)` for the original-coordinate field `u`.
pub struct ScaledField<'a> {
    u: &'a dyn Field,
    lambda: f64,
    scale: f64,
}

impl<'a> ScaledField<'a> {
    /// Normalised rescaling; `u` is read in original coordinates.
    pub fn normalized(u: &'a dyn Field, lambda: f64) -> Result<Self> {
        let rule = SphereRule::standard(u.dim() - 1);
        let h = sphere_integrals(u, &rule, lambda, 1, &|_, v, _, out| out[0] = v * v)[0];
        if !(h > 0.0) {
            return Err(Error::numerical(MODULE, format!("H({lambda}) = {h:e} is not positive")));
        }
        Ok(ScaledField { u, lambda, scale: 1.0 / h.sqrt() })
    }

    /// The rescaling `x -> scale · u(λx)`.
    pub fn with_scale(u: &'a dyn Field, lambda: f64, scale: f64) -> Self {
        ScaledField { u, lambda, scale }
    }
}

impl Field for ScaledField<'_> {
    fn dim(&self) -> usize {
        self.u.dim()
    }

    fn eval(&self, x: &Vec3) -> Option<(f64, Vec3)> {
        let (v, g) = self.u.eval(&(x * self.lambda))?;
        Some((self.scale * v, g * (self.scale * self.lambda)))
    }

    fn ball_integrals(&self, radii: &[f64], ncomp: usize, f: &Integrand) -> Vec<Vec<f64>> {
        let (lambda, scale) = (self.lambda, self.scale);
        let jac = lambda.powi(-(self.u.dim() as i32));
        let scaled: Vec<f64> = radii.iter().map(|r| r * lambda).collect();
        let inner = move |y: &Vec3, v: f64, g: &Vec3, out: &mut [f64]| {
            f(&(y / lambda), scale * v, &(g * (scale * lambda)), out);
            out.iter_mut().for_each(|o| *o *= jac);
        };
        self.u.ball_integrals(&scaled, ncomp, &inner)
    }

    fn resolution(&self, r: f64) -> f64 {
        self.u.resolution(r * self.lambda) / self.lambda
    }

    fn radius(&self) -> f64 {
        self.u.radius() / self.lambda
    }
}

/// `φ_{k,m}(λ) = ∫_{S^N} v(λθ) Y_{k,m}(θ) dS` for the straightened field `v`.
pub fn fourier_coefficient(v: &dyn Field, mode: &SphereMode, lambda: f64, rule: &SphereRule) -> f64 {
    let n = v.dim() - 1;
    sphere_integrals(v, rule, lambda, 1, &|x, val, _, out| out[0] = val * mode.value(n, x))[0]
}

/// All coefficients of the given modes at radius `λ`, plus `∫_{S^N} v(λθ)²`.
fn fourier_row(v: &dyn Field, modes: &[&SphereMode], lambda: f64, rule: &SphereRule) -> (Vec<f64>, f64) {
    let n = v.dim() - 1;
    let m = modes.len();
    let s = sphere_integrals(v, rule, lambda, m + 1, &|x, val, _, out| {
        for (o, mode) in out.iter_mut().zip(modes) {
            *o = val * mode.value(n, x);
        }
        out[m] = val * val;
    });
    (s[..m].to_vec(), s[m])
}

/// `Υ_{k,m}(s)` for each radius (ascending) and each mode: the volume terms
/// `-∫(A - I)∇v·∇Ŷ + ∫ f̃ v Ŷ` over `B_s` and the surface term
/// `∫_{∂B_s} (A - I)∇v·ν Ŷ`, where `Ŷ(x) = Y(x/|x|)`.
pub fn upsilon(v: &dyn Field, potential: &PotentialSpec, geometry: &CrackGeometry, modes: &[&SphereMode], radii: &[f64]) -> Result<Vec<Vec<f64>>> {
    Ok(corrections(v, potential, geometry, modes, radii, &[])?.0)
}

/// Radial weight `w(s)` and its tail primitive `W(ρ) = ∫_ρ^R w(s) ds`.
type RadialWeight<'a> = &'a (dyn Fn(f64) -> (f64, f64) + Sync);

/// `Υ` at each radius together with, per weight and mode, the ball integral
/// of `F(x) W(|x|) + w(|x|) G(x)` and the volume part of `Υ`, where `F` and
/// `G` are the volume and flux densities of `Υ`.
fn corrections(
    v: &dyn Field,
    potential: &PotentialSpec,
    geometry: &CrackGeometry,
    modes: &[&SphereMode],
    radii: &[f64],
    weights: &[RadialWeight],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let n = v.dim() - 1;
    let m = modes.len();
    let flat = geometry.is_flat();
    let stride = m * (1 + weights.len());
    if flat && potential.is_zero() {
        return Ok((vec![vec![0.0; m]; radii.len()], vec![vec![0.0; stride]; radii.len()]));
    }
    let vol = v.ball_integrals(radii, stride, &|y, val, g, out| {
        let r = y.norm();
        if r == 0.0 {
            return;
        }
        let theta = y / r;
        let (a_minus_i, w) = if flat {
            (Mat3::zeros(), 1.0)
        } else {
            match coefficient_excess(geometry, y) {
                Some(c) => c,
                None => {
                    out.iter_mut().for_each(|o| *o = f64::NAN);
                    return;
                }
            }
        };
        let ft = if potential.is_zero() { 0.0 } else { w * potential.radial(r) };
        let flux = a_minus_i * g;
        let radial_flux = flux.dot(&theta);
        let ws: Vec<(f64, f64)> = weights.iter().map(|f| f(r)).collect();
        for (i, mode) in modes.iter().enumerate() {
            let (density, flux_density) = if flat {
                (ft * val * mode.value(n, &theta), 0.0)
            } else {
                let (yv, sg) = mode.value_and_surface_gradient(n, &theta);
                (ft * val * yv - flux.dot(&sg) / r, radial_flux * yv)
            };
            out[i] = density;
            for (j, (wr, big_w)) in ws.iter().enumerate() {
                out[m * (1 + j) + i] = density * big_w + wr * flux_density;
            }
        }
    });
    let rule = SphereRule::standard(n);
    let mut rows = Vec::with_capacity(radii.len());
    for (raw, &s) in vol.iter().zip(radii) {
        let mut row = raw[..m].to_vec();
        if !flat {
            let surf = sphere_integrals(v, &rule, s, m, &|y, _, g, out| {
                let theta = y / s;
                let Some((a_minus_i, _)) = coefficient_excess(geometry, y) else {
                    out.iter_mut().for_each(|o| *o = f64::NAN);
                    return;
                };
                let flux = (a_minus_i * g).dot(&theta);
                for (o, mode) in out.iter_mut().zip(modes) {
                    *o = flux * mode.value(n, &theta);
                }
            });
            let area = s.powi(n as i32);
            for (r, sv) in row.iter_mut().zip(surf) {
                *r += area * sv;
            }
        }
        if row.iter().chain(raw).any(|x| !x.is_finite()) {
            return Err(Error::numerical(MODULE, format!("non-finite correction integral at s = {s}")));
        }
        rows.push(row);
    }
    Ok((rows, vol))
}

fn coefficient_excess(geometry: &CrackGeometry, y: &Vec3) -> Option<(Mat3, f64)> {
    let c = geometry.coefficients(y).ok()?;
    let mut a = c.a - Mat3::identity();
    if geometry.dim == 2 {
        a[(2, 2)] = 0.0;
    }
    Some((a, c.w))
}

/// Pieces of the integral formula for one coefficient.
#[derive(Debug, Clone, Serialize)]
pub struct IntegralTerms {
    /// `R^{-k₀/2} φ_{k₀,m}(R)`.
    pub leading: f64,
    /// Contribution of `Υ` over `[λ_cut, R]`.
    pub bulk: f64,
    /// Power-envelope estimate of the contribution of `(0, λ_cut)`.
    pub tail: f64,
    /// Fitted `Υ(s) ≈ C s^p` below the cut, when the correction is nonzero.
    pub envelope: Option<(f64, f64)>,
}

/// Result of the integral route.
#[derive(Debug, Clone, Serialize)]
pub struct IntegralEstimate {
    pub radius: f64,
    pub lambda_cut: f64,
    pub beta: Vec<f64>,
    pub terms: Vec<IntegralTerms>,
    /// Radii at which `Υ` was sampled and the samples per mode.
    pub nodes: Vec<f64>,
    pub upsilon: Vec<Vec<f64>>,
}

/// Samples above `λ_cut` used to fit the tail envelope.
const TAIL_SAMPLES: usize = 5;

/// `β_m` from the Cauchy-type integral formula at radius `R`.
///
/// The weighted integrals of `Υ` over `[λ_cut, R]` are evaluated by exchanging
/// the order of integration, which turns each into one ball integral with a
/// closed-form radial weight.
pub fn beta_integral(
    v: &dyn Field,
    potential: &PotentialSpec,
    geometry: &CrackGeometry,
    basis: &SlitSphereBasis,
    k0: u32,
    radius: f64,
    lambda_cut: f64,
) -> Result<IntegralEstimate> {
    let modes: Vec<&SphereMode> = basis.modes_of(k0).collect();
    if modes.is_empty() {
        return Err(Error::precondition(MODULE, format!("basis has no modes at rung {k0}")));
    }
    if !(lambda_cut > 0.0 && lambda_cut < radius && radius <= v.radius() * (1.0 + 1e-12)) {
        return Err(Error::precondition(MODULE, format!("need 0 < λ_cut = {lambda_cut} < R = {radius} <= {}", v.radius())));
    }
    let n = (v.dim() - 1) as f64;
    let k = k0 as f64;
    let half = 0.5 * k;
    let rule = SphereRule::standard(v.dim() - 1);
    let (phi_r, _) = fourier_row(v, &modes, radius, &rule);

    let e = 1.0 - n - half;
    let inner = move |r: f64| (r.powf(-n - half), (radius.powf(e) - r.powf(e)) / e);
    let outer = move |r: f64| (r.powf(half - 1.0), (radius.powf(half) - r.powf(half)) / half);
    let fit_nodes: Vec<f64> = (0..TAIL_SAMPLES).map(|i| lambda_cut * 2f64.powf(i as f64 / 2.0)).filter(|s| *s < radius).collect();
    let mut nodes = fit_nodes.clone();
    nodes.push(radius);
    let (ups, weighted) = corrections(v, potential, geometry, &modes, &nodes, &[&inner, &outer])?;
    let (at_cut, at_r) = (&weighted[0], &weighted[nodes.len() - 1]);
    let (w1_cut, w2_cut) = (inner(lambda_cut).1, outer(lambda_cut).1);

    let c1 = (2.0 * n + k - 2.0) / (2.0 * (n + k - 1.0));
    let c2 = k * radius.powf(1.0 - n - k) / (2.0 * (n + k - 1.0));
    let m = modes.len();
    let mut beta = Vec::with_capacity(m);
    let mut terms = Vec::with_capacity(m);
    for (mi, phi) in phi_r.iter().enumerate() {
        let leading = radius.powf(-half) * phi;
        let i1 = at_r[m + mi] - at_cut[m + mi] + w1_cut * at_cut[mi];
        let i2 = at_r[2 * m + mi] - at_cut[2 * m + mi] + w2_cut * at_cut[mi];
        let samples: Vec<(f64, f64)> = fit_nodes.iter().zip(&ups).map(|(&s, row)| (s, row[mi])).collect();
        let (tail, envelope) = tail_estimate(&samples, lambda_cut, n, half, c1, c2)?;
        let bulk = c1 * i1 + c2 * i2;
        if tail.abs() > TAIL_LIMIT * leading.abs().max(1e-300) && tail.abs() > 1e-14 {
            return Err(Error::accuracy(
                MODULE,
                format!("tail below λ_cut = {lambda_cut:.3e} is {tail:.3e}, more than {TAIL_LIMIT} of the leading term {leading:.3e} (mode {})", mi + 1),
            ));
        }
        beta.push(leading + bulk + tail);
        terms.push(IntegralTerms { leading, bulk, tail, envelope });
    }
    let upsilon = (0..m).map(|mi| ups.iter().map(|row| row[mi]).collect()).collect();
    Ok(IntegralEstimate { radius, lambda_cut, beta, terms, nodes, upsilon })
}

/// Fit `Υ(s) ≈ C s^p` on samples just above the cut and integrate the two
/// weights of the formula over `(0, λ_cut)`.
fn tail_estimate(samples: &[(f64, f64)], cut: f64, n: f64, half: f64, c1: f64, c2: f64) -> Result<(f64, Option<(f64, f64)>)> {
    let scale = samples.iter().map(|(_, u)| u.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok((0.0, None));
    }
    let sign = samples[0].1.signum();
    if samples.len() < 2 || samples.iter().any(|(_, u)| u.signum() != sign || *u == 0.0) {
        return Err(Error::accuracy(MODULE, "correction integrals change sign above λ_cut; no power envelope can bound the tail"));
    }
    let xs: Vec<f64> = samples.iter().map(|(s, _)| s.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|(_, u)| u.abs().ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let p = sxy / sxx;
    let c = sign * (my - p * mx).exp();
    let e1 = p - n - half + 1.0;
    let e2 = p + half;
    if !(e1 > 0.0 && e2 > 0.0) {
        return Err(Error::accuracy(MODULE, format!("fitted envelope exponent {p:.3} does not make the tail integrable")));
    }
    let tail = c1 * c * cut.powf(e1) / e1 + c2 * c * cut.powf(e2) / e2;
    Ok((tail, Some((c, p))))
}

/// Result of the direct route.
#[derive(Debug, Clone, Serialize)]
pub struct DirectEstimate {
    pub lambdas: Vec<f64>,
    /// `λ^{-k₀/2} φ_{k₀,m}(λ)` per mode along the grid.
    pub sequences: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    /// `false` when no monotone stretch was available and the raw
    /// smallest-λ value is reported.
    pub extrapolated: Vec<bool>,
}

/// `β_m` as the Richardson-extrapolated limit of `λ^{-k₀/2} φ_{k₀,m}(λ)` on a
/// decreasing dyadic grid. Extrapolation uses the last pair of the longest
/// monotone stretch, since under-resolved radii make the sequence turn back.
pub fn beta_direct(v: &dyn Field, basis: &SlitSphereBasis, k0: u32, lambdas: &[f64]) -> Result<DirectEstimate> {
    let modes: Vec<&SphereMode> = basis.modes_of(k0).collect();
    if modes.is_empty() {
        return Err(Error::precondition(MODULE, format!("basis has no modes at rung {k0}")));
    }
    if lambdas.len() < 2 {
        return Err(Error::precondition(MODULE, "the direct route needs at least two radii"));
    }
    let rule = SphereRule::standard(v.dim() - 1);
    let half = 0.5 * k0 as f64;
    let rows: Vec<Vec<f64>> = lambdas.iter().map(|&l| fourier_row(v, &modes, l, &rule).0.iter().map(|p| p * l.powf(-half)).collect()).collect();
    let mut sequences = Vec::new();
    let mut beta = Vec::new();
    let mut extrapolated = Vec::new();
    for mi in 0..modes.len() {
        let seq: Vec<f64> = rows.iter().map(|r| r[mi]).collect();
        let last = monotone_prefix(&seq);
        let monotone = last >= 1;
        if monotone {
            let ratio = lambdas[last - 1] / lambdas[last];
            beta.push((ratio * seq[last] - seq[last - 1]) / (ratio - 1.0));
        } else {
            beta.push(seq[seq.len() - 1]);
        }
        extrapolated.push(monotone);
        sequences.push(seq);
    }
    Ok(DirectEstimate { lambdas: lambdas.to_vec(), sequences, beta, extrapolated })
}

/// Last index of the longest prefix whose successive differences keep one
/// sign; `0` when the sequence turns back at its second step.
fn monotone_prefix(seq: &[f64]) -> usize {
    let mut sign = 0.0;
    for i in 1..seq.len() {
        let d = seq[i] - seq[i - 1];
        if d == 0.0 {
            continue;
        }
        if sign == 0.0 {
            sign = d.signum();
        } else if d.signum() != sign {
            return if i >= 2 { i - 1 } else { 0 };
        }
    }
    seq.len() - 1
}

/// `‖u - P‖_{H¹(B_1)}` for two fields given pointwise, by a shell quadrature.
fn h1_distance(dim: usize, a: &dyn Fn(&Vec3) -> (f64, Vec3), b: &dyn Fn(&Vec3) -> (f64, Vec3)) -> f64 {
    let n = (dim - 1) as i32;
    let rule = if dim == 2 { SphereRule::new(1, 1, 128) } else { SphereRule::new(2, 16, 32) };
    let mut total = 0.0;
    for (t, wt) in gauss_legendre_interval(16, 0.0, 1.0) {
        let s = t * t;
        let jac = 2.0 * t * s.powi(n);
        let mut shell = 0.0;
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let x = to_vec3(p) * s;
            let (va, ga) = a(&x);
            let (vb, gb) = b(&x);
            shell += w * ((va - vb).powi(2) + (ga - gb).norm_squared());
        }
        total += wt * jac * shell;
    }
    total.sqrt()
}

/// Everything the blow-up analysis reports.
#[derive(Debug, Clone, Serialize)]
pub struct BlowupReport {
    /// Identifier of the eigenbasis the coefficients refer to.
    pub basis_id: String,
    pub k0: u32,
    pub lambdas: Vec<f64>,
    /// `φ_{k,m}(λ)` for every mode up to `k_max`, one row per mode.
    pub phi: Vec<PhiRow>,
    /// `∫_{S^N} v(λθ)² - Σ φ_{k,m}(λ)²` along the grid.
    pub parseval_gap: Vec<f64>,
    pub direct: DirectEstimate,
    pub integral: IntegralEstimate,
    pub beta_direct: Vec<f64>,
    pub beta_integral: Vec<f64>,
    pub cross_route_discrepancy: f64,
    /// `‖w^λ|_{S^N} - Σβ_m Y_m / |β|‖_{L²(S^N)}` along the grid.
    pub profile_errors: Vec<f64>,
    /// `‖λ^{-k₀/2}u(λ·) - |x|^{k₀/2} Σβ_m Y_m‖_{H¹(B_1)}` along the grid.
    pub blowup_errors: Vec<f64>,
    /// `‖w^{λ/2} - w^λ‖_{H¹(B_1)}` for consecutive grid points.
    pub cauchy_steps: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhiRow {
    pub k: u32,
    pub m: u32,
    pub values: Vec<f64>,
}

/// Settings of the blow-up analysis.
#[derive(Debug, Clone, Serialize)]
pub struct BlowupOptions {
    /// Radius `R` of the integral formula.
    pub radius: f64,
    /// Decreasing dyadic grid for the direct route.
    pub lambdas: Vec<f64>,
    pub k_max: u32,
    pub lambda_cut: f64,
}

impl BlowupOptions {
    /// Dyadic grid `R, R/2, …` down to the first radius at or above `λ_cut`.
    pub fn dyadic(radius: f64, lambda_cut: f64, k_max: u32) -> Self {
        let mut lambdas = vec![radius];
        while lambdas[lambdas.len() - 1] * 0.5 >= lambda_cut {
            let next = lambdas[lambdas.len() - 1] * 0.5;
            lambdas.push(next);
        }
        BlowupOptions { radius, lambdas, k_max, lambda_cut }
    }
}

/// Smallest radius on a quarter-octave grid below `radius` that keeps at least
/// three local mesh widths, with a floor of `1e-6 R` for closed-form fields.
pub fn resolvable_cut(v: &dyn Field, radius: f64) -> f64 {
    let floor = 1e-6 * radius;
    let mut s = radius;
    loop {
        let next = s * 2f64.powf(-0.25);
        if next < floor || next < 3.0 * v.resolution(next) {
            return s;
        }
        s = next;
    }
}

/// Run both routes for rung `k0` and compare them.
pub fn blowup_report(
    v: &dyn Field,
    potential: &PotentialSpec,
    geometry: &CrackGeometry,
    basis: &SlitSphereBasis,
    k0: u32,
    opts: &BlowupOptions,
) -> Result<BlowupReport> {
    if k0 == 0 || k0 > basis.k_max || opts.k_max > basis.k_max {
        return Err(Error::precondition(MODULE, format!("rung {k0} and k_max {} must lie in 1..={}", opts.k_max, basis.k_max)));
    }
    let mut warnings = Vec::new();
    for &l in &opts.lambdas {
        if l < 3.0 * v.resolution(l) {
            warnings.push(format!("λ = {l:.3e} is below three local mesh widths"));
        }
    }
    let rule = SphereRule::standard(v.dim() - 1);
    let all: Vec<&SphereMode> = basis.modes.iter().filter(|m| m.k <= opts.k_max).collect();
    let mut phi: Vec<PhiRow> = all.iter().map(|m| PhiRow { k: m.k, m: m.m, values: Vec::new() }).collect();
    let mut parseval_gap = Vec::new();
    for &l in &opts.lambdas {
        let (row, mass) = fourier_row(v, &all, l, &rule);
        parseval_gap.push(mass - row.iter().map(|p| p * p).sum::<f64>());
        for (r, p) in phi.iter_mut().zip(row) {
            r.values.push(p);
        }
    }
    let direct = beta_direct(v, basis, k0, &opts.lambdas)?;
    let integral = beta_integral(v, potential, geometry, basis, k0, opts.radius, opts.lambda_cut)?;
    let diff: f64 = direct.beta.iter().zip(&integral.beta).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = direct.beta.iter().map(|b| b * b).sum::<f64>().sqrt();
    let cross_route_discrepancy = diff / norm.max(1e-300);

    let beta = integral.beta.clone();
    let modes: Vec<SphereMode> = basis.modes_of(k0).cloned().collect();
    let n = v.dim() - 1;
    let half = 0.5 * k0 as f64;
    let beta_norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
    if beta_norm == 0.0 {
        warnings.push(format!("all coefficients vanish at rung {k0}; the profile is zero"));
    }
    let profile = |x: &Vec3| -> (f64, Vec3) {
        let mut val = 0.0;
        let mut g = Vec3::zeros();
        for (mode, b) in modes.iter().zip(&beta) {
            let (mv, mg) = mode.eval_homogeneous(n, x);
            val += b * mv;
            g += mg * *b;
        }
        (val, g)
    };
    let u = Pullback::new(v, geometry);
    let mut profile_errors = Vec::new();
    let mut blowup_errors = Vec::new();
    for &l in &opts.lambdas {
        let w = ScaledField::normalized(&u, l)?;
        let e = sphere_integrals(&w, &rule, 1.0, 1, &|x, val, _, out| {
            let p = if beta_norm > 0.0 { profile(x).0 / beta_norm } else { 0.0 };
            out[0] = (val - p).powi(2);
        })[0];
        profile_errors.push(e.sqrt());
        let scaled = ScaledField::with_scale(&u, l, l.powf(-half));
        blowup_errors.push(h1_distance(v.dim(), &|x| scaled.eval(x).unwrap_or((0.0, Vec3::zeros())), &profile));
    }
    let mut cauchy_steps = Vec::new();
    for pair in opts.lambdas.windows(2) {
        let a = ScaledField::normalized(&u, pair[0])?;
        let b = ScaledField::normalized(&u, pair[1])?;
        cauchy_steps.push(h1_distance(v.dim(), &|x| a.eval(x).unwrap_or((0.0, Vec3::zeros())), &|x| b.eval(x).unwrap_or((0.0, Vec3::zeros()))));
    }
    Ok(BlowupReport {
        basis_id: format!("slit-sphere separated harmonics, N={}, k_max={}, Cholesky-orthonormalised", basis.sphere_dim, basis.k_max),
        k0,
        lambdas: opts.lambdas.clone(),
        phi,
        parseval_gap,
        beta_direct: direct.beta.clone(),
        beta_integral: integral.beta.clone(),
        direct,
        integral,
        cross_route_discrepancy,
        profile_errors,
        blowup_errors,
        cauchy_steps,
        warnings,
    })
}

/// CSV of the normalised angular profile against the fitted one at radius `λ`.
pub fn profile_csv(v: &dyn Field, geometry: &CrackGeometry, basis: &SlitSphereBasis, k0: u32, beta: &[f64], lambda: f64, config_hash: &str) -> Result<String> {
    let u = Pullback::new(v, geometry);
    let w = ScaledField::normalized(&u, lambda)?;
    let n = v.dim() - 1;
    let modes: Vec<&SphereMode> = basis.modes_of(k0).collect();
    let norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt().max(1e-300);
    let rule = SphereRule::new(n, if n == 1 { 1 } else { 24 }, 64);
    let mut out = format!("# config_hash={config_hash}\n");
    out.push_str(if n == 1 { "x1,x2,w_lambda,profile\n" } else { "x1,x2,x3,w_lambda,profile\n" });
    for p in &rule.points {
        let x = to_vec3(p);
        let wv = w.value(&x);
        let pv: f64 = modes.iter().zip(beta).map(|(m, b)| b * m.value(n, &x)).sum::<f64>() / norm;
        let coords: Vec<String> = p.iter().map(|c| fmt_g17(*c)).collect();
        out.push_str(&format!("{},{},{}\n", coords.join(","), fmt_g17(wv), fmt_g17(pv)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::mode_field;

    #[test]
    fn monotone_prefix_stops_at_the_first_turn() {
        assert_eq!(monotone_prefix(&[1.0, 2.0, 3.0, 2.5]), 2);
        assert_eq!(monotone_prefix(&[3.0, 2.0, 2.0, 1.0]), 3);
        assert_eq!(monotone_prefix(&[1.0, 2.0, 1.0]), 1);
        assert_eq!(monotone_prefix(&[5.0, 5.0]), 1);
    }

    #[test]
    fn exact_mode_coefficients_are_recovered() {
        for n in [1usize, 2] {
            let basis = SlitSphereBasis::build(n, 3).unwrap();
            let geom = CrackGeometry::flat(n + 1);
            let v = mode_field(basis.mode(2, 1).unwrap(), n, 1.0, 1.7);
            let rule = SphereRule::standard(n);
            for l in [0.5, 0.1] {
                for mode in &basis.modes {
                    let p = fourier_coefficient(&v, mode, l, &rule);
                    let expect = if mode.k == 2 && mode.m == 1 { 1.7 * l } else { 0.0 };
                    assert!((p - expect).abs() < 1e-9, "N={n} k={} m={} {p}", mode.k, mode.m);
                }
            }
            let opts = BlowupOptions::dyadic(0.5, 0.01, 3);
            let rep = blowup_report(&v, &PotentialSpec::zero(), &geom, &basis, 2, &opts).unwrap();
            assert!((rep.beta_integral[0] - 1.7).abs() < 1e-9);
            assert!((rep.beta_direct[0] - 1.7).abs() < 1e-9);
            assert!(rep.profile_errors.iter().all(|e| *e < 1e-8));
            assert!(rep.blowup_errors.iter().all(|e| *e < 1e-8));
        }
    }

    #[test]
    fn scaled_field_is_normalized_on_the_unit_sphere() {
        let basis = SlitSphereBasis::build(1, 1).unwrap();
        let v = mode_field(basis.mode(1, 1).unwrap(), 1, 1.0, 3.0);
        let w = ScaledField::normalized(&v, 0.2).unwrap();
        let rule = SphereRule::standard(1);
        let mass = sphere_integrals(&w, &rule, 1.0, 1, &|_, val, _, out| out[0] = val * val)[0];
        assert!((mass - 1.0).abs() < 1e-12);
        let b = w.ball_integrals(&[1.0], 1, &|_, _, g, out| out[0] = g.norm_squared())[0][0];
        // ∫_{B_1}|∇(r^{1/2}ψ)|² = 1/2 ∫_{S^1} ψ² for a unit-normalised mode
        assert!((b - 0.5).abs() < 1e-8, "{b}");
    }

    #[test]
    fn upsilon_vanishes_for_flat_unperturbed_problems() {
        let basis = SlitSphereBasis::build(1, 2).unwrap();
        let v = mode_field(basis.mode(1, 1).unwrap(), 1, 1.0, 1.0);
        let modes: Vec<&SphereMode> = basis.modes.iter().collect();
        let u = upsilon(&v, &PotentialSpec::zero(), &CrackGeometry::flat(2), &modes, &[0.1, 0.5]).unwrap();
        assert!(u.iter().flatten().all(|x| *x == 0.0));
    }

    #[test]
    fn integral_route_matches_closed_form_for_power_potentials() {
        // Υ(s) = c s^p / p, so both weighted integrals from 0 to R are elementary
        let (c, delta, radius) = (0.3, 0.5, 0.8);
        for n in [1usize, 2] {
            let basis = SlitSphereBasis::build(n, 1).unwrap();
            let v = mode_field(basis.mode(1, 1).unwrap(), n, 1.0, 1.0);
            let pot = PotentialSpec::inverse_square_sub(c, delta);
            let est = beta_integral(&v, &pot, &CrackGeometry::flat(n + 1), &basis, 1, radius, 0.01).unwrap();
            let nf = n as f64;
            let p = nf + delta - 0.5;
            let c1 = (2.0 * nf - 1.0) / (2.0 * nf);
            let c2 = radius.powf(-nf) / (2.0 * nf);
            let (e1, e2) = (p - nf + 0.5, p + 0.5);
            let expect = 1.0 + c1 * c / p * radius.powf(e1) / e1 + c2 * c / p * radius.powf(e2) / e2;
            assert!((est.beta[0] - expect).abs() < 1e-6, "N={n} {} {expect}", est.beta[0]);
        }
    }

    #[test]
    fn upsilon_matches_separated_quadrature_for_power_potentials() {
        // Υ_{1,1}(s) = c ∫_0^s ρ^{N+δ-2+1/2} dρ for v = ρ^{1/2} Y_{1,1}
        let (c, delta) = (0.3, 0.5);
        for n in [1usize, 2] {
            let basis = SlitSphereBasis::build(n, 1).unwrap();
            let v = mode_field(basis.mode(1, 1).unwrap(), n, 1.0, 1.0);
            let mode = basis.mode(1, 1).unwrap();
            let pot = PotentialSpec::inverse_square_sub(c, delta);
            let s = 0.3;
            let u = upsilon(&v, &pot, &CrackGeometry::flat(n + 1), &[mode], &[s]).unwrap()[0][0];
            let e = n as f64 + delta - 1.5;
            let expect = c * s.powf(e + 1.0) / (e + 1.0);
            assert!((u - expect).abs() < 1e-6 * expect, "N={n} {u} {expect}");
        }
    }
}
