//! Almgren frequency of a solution around the crack edge: the boundary mass
//! `H(r)`, the energy `D(r)`, their quotient `N(r)`, the Pohozaev residual,
//! doubling audits and the fitted vanishing order.

use nalgebra::{Matrix2, Vector2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{sphere_integrals, Field, Pullback};
use crate::geometry::CrackGeometry;
use crate::io::fmt_g17;
use crate::quadrature::SphereRule;
use crate::solver::potential::{Hypothesis, PotentialSpec};

const MODULE: &str = "frequency";

/// Distance to the ladder below which a fitted order is snapped.
pub const SNAP_TOLERANCE: f64 = 0.05;

/// Sampling window of a frequency trace.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FrequencyOptions {
    pub r_min: f64,
    pub r_max: f64,
    pub points: usize,
    /// Radii below this many local mesh widths are excluded from fits.
    pub resolve_factor: f64,
}

impl FrequencyOptions {
    pub fn new(r_min: f64, r_max: f64, points: usize) -> Self {
        FrequencyOptions { r_min, r_max, points, resolve_factor: 3.0 }
    }

    /// Geometric grid from `r_min` to `r_max`.
    pub fn radii(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.r_max];
        }
        let q = (self.r_max / self.r_min).ln() / (self.points - 1) as f64;
        (0..self.points).map(|i| self.r_min * (q * i as f64).exp()).collect()
    }
}

/// Quantities sampled at one radius.
#[derive(Debug, Clone, Serialize)]
pub struct TracePoint {
    pub r: f64,
    pub h: f64,
    pub d: f64,
    pub n: f64,
    pub pohozaev_residual: f64,
    pub pohozaev_tolerance: f64,
    /// `|R_volume - R_boundary|` between the two forms of the Pohozaev remainder.
    pub remainder_gap: f64,
    /// Relative defect of `∫_{B_r}(|∇u|² - fu²) = ∫_{∂B_r} u ∂_ν u`.
    pub energy_defect: f64,
    pub local_h: f64,
    pub resolvable: bool,
}

/// Weighted least-squares fit of `N(r) ≈ γ + s r`.
#[derive(Debug, Clone, Serialize)]
pub struct GammaFit {
    pub gamma: f64,
    pub std_error: f64,
    /// `γ ± 2 σ`.
    pub confidence: (f64, f64),
    /// Radii used by the fit.
    pub window: (f64, f64),
    pub points: usize,
    pub slope: f64,
    pub residuals: Vec<f64>,
    /// Order estimated as half the slope of `log H` against `log r`.
    pub gamma_log_h: f64,
    /// Nearest ladder index `k₀` with `k₀/2` closest to `γ`.
    pub nearest_k: u32,
    pub snap_distance: f64,
    /// `Some(k₀)` when `|γ - k₀/2| < 0.05`.
    pub snapped_k: Option<u32>,
}

impl GammaFit {
    /// The order used downstream: the snapped ladder value when available.
    pub fn order(&self) -> f64 {
        self.snapped_k.map_or(self.gamma, |k| 0.5 * k as f64)
    }
}

/// A sampled frequency trace with its fit.
#[derive(Debug, Clone, Serialize)]
pub struct FrequencyTrace {
    pub sphere_dim: usize,
    pub hypothesis: Hypothesis,
    pub points: Vec<TracePoint>,
    pub fit: GammaFit,
    /// `r^{-2γ̂} H(r)` at the smallest resolvable radius.
    pub normalization_limit: f64,
    /// Relative variation of `r^{-2γ̂} H(r)` over the lowest resolvable half-decade.
    pub normalization_variation: f64,
    /// Largest sampled `N(r)`.
    pub upper_bound: f64,
    /// Every sampled `N(r)` exceeds `-(N-1)/4`.
    pub lower_bound_holds: bool,
    /// Radii flagged as under-resolved.
    pub warnings: Vec<String>,
}

/// Sphere integrals at one radius, normalised to the unit sphere.
#[derive(Debug, Clone, Copy)]
struct SphereTerms {
    u2: f64,
    grad2: f64,
    normal2: f64,
    u_normal: f64,
    f_u2: f64,
}

fn sphere_terms(u: &dyn Field, potential: &PotentialSpec, rule: &SphereRule, r: f64) -> SphereTerms {
    let zero = potential.is_zero();
    let s = sphere_integrals(u, rule, r, 5, &|x, v, g, out| {
        let dn = x.dot(g) / r;
        out[0] = v * v;
        out[1] = g.norm_squared();
        out[2] = dn * dn;
        out[3] = v * dn;
        out[4] = if zero { 0.0 } else { potential.value(x) * v * v };
    });
    SphereTerms { u2: s[0], grad2: s[1], normal2: s[2], u_normal: s[3], f_u2: s[4] }
}

/// Ball integrals `[∫|∇u|², ∫fu², ∫fu(x·∇u), ∫(x·∇f + (N+1)f)u²]`.
fn ball_terms(u: &dyn Field, potential: &PotentialSpec, radii: &[f64]) -> Result<Vec<[f64; 4]>> {
    let zero = potential.is_zero();
    let d = u.dim() as f64;
    let rows = u.ball_integrals(radii, 4, &|x, v, g, out| {
        out[0] = g.norm_squared();
        if !zero {
            let r = x.norm();
            let f = potential.radial(r);
            out[1] = f * v * v;
            out[2] = f * v * x.dot(g);
            out[3] = (potential.radial_derivative_times_r(r) + d * f) * v * v;
        }
    });
    rows.into_iter()
        .zip(radii)
        .map(|(row, r)| {
            if row.iter().all(|v| v.is_finite()) {
                Ok([row[0], row[1], row[2], row[3]])
            } else {
                Err(Error::numerical(MODULE, format!("non-finite ball integral at r = {r}")))
            }
        })
        .collect()
}

fn sphere_rule(u: &dyn Field) -> SphereRule {
    SphereRule::standard(u.dim() - 1)
}

/// `H(r) = r^{-N} ∫_{∂B_r} u² dS` for the straightened field `v`.
pub fn compute_h(field: &dyn Field, geometry: &CrackGeometry, r: f64) -> Result<f64> {
    let u = Pullback::new(field, geometry);
    check_radius(&u, r)?;
    let h = sphere_terms(&u, &PotentialSpec::zero(), &sphere_rule(&u), r).u2;
    positive_mass(h, r)
}

/// `D(r) = r^{1-N} ∫_{B_r} (|∇u|² - f u²)`.
pub fn compute_d(field: &dyn Field, potential: &PotentialSpec, geometry: &CrackGeometry, r: f64) -> Result<f64> {
    let u = Pullback::new(field, geometry);
    check_radius(&u, r)?;
    let n = u.dim() as i32 - 1;
    let b = ball_terms(&u, potential, &[r])?[0];
    Ok(r.powi(1 - n) * (b[0] - b[1]))
}

/// Left-hand side of the local Pohozaev inequality at radius `r`.
pub fn pohozaev_residual(field: &dyn Field, potential: &PotentialSpec, geometry: &CrackGeometry, r: f64) -> Result<f64> {
    let u = Pullback::new(field, geometry);
    check_radius(&u, r)?;
    let s = sphere_terms(&u, potential, &sphere_rule(&u), r);
    let b = ball_terms(&u, potential, &[r])?[0];
    Ok(pohozaev_parts(u.dim() - 1, potential.hypothesis, r, &s, &b).0)
}

/// Returns the residual and the gap between the two remainder forms.
fn pohozaev_parts(sphere_dim: usize, hypothesis: Hypothesis, r: f64, s: &SphereTerms, b: &[f64; 4]) -> (f64, f64) {
    let nn = sphere_dim as f64;
    let area = r.powi(sphere_dim as i32);
    let volume_form = b[2];
    let boundary_form = 0.5 * r * area * s.f_u2 - 0.5 * b[3];
    let remainder = match hypothesis {
        Hypothesis::H1 => volume_form,
        Hypothesis::H2 => boundary_form,
    };
    let lhs = -0.5 * (nn - 1.0) * b[0] + 0.5 * r * area * s.grad2 - r * area * s.normal2 - remainder;
    (lhs, (volume_form - boundary_form).abs())
}

fn check_radius(u: &dyn Field, r: f64) -> Result<()> {
    if !(r > 0.0 && r <= u.radius() * (1.0 + 1e-12)) {
        return Err(Error::precondition(MODULE, format!("radius {r} outside (0, {}]", u.radius())));
    }
    Ok(())
}

fn positive_mass(h: f64, r: f64) -> Result<f64> {
    if h > 0.0 && h.is_finite() {
        Ok(h)
    } else {
        Err(Error::numerical(MODULE, format!("non-positive H({r}) = {h:e}; the field is under-resolved at this radius")))
    }
}

/// Sample the trace on a geometric grid and fit the vanishing order.
pub fn frequency_trace(field: &dyn Field, potential: &PotentialSpec, geometry: &CrackGeometry, opts: &FrequencyOptions) -> Result<FrequencyTrace> {
    if !(opts.r_min > 0.0 && opts.r_min < opts.r_max && opts.points >= 4) {
        return Err(Error::precondition(MODULE, "radii window needs 0 < r_min < r_max and at least 4 points"));
    }
    let u = Pullback::new(field, geometry);
    check_radius(&u, opts.r_max)?;
    let sphere_dim = u.dim() - 1;
    let nn = sphere_dim as i32;
    let radii = opts.radii();
    let rule = sphere_rule(&u);
    let balls = ball_terms(&u, potential, &radii)?;
    let mut points = Vec::with_capacity(radii.len());
    let mut warnings = Vec::new();
    for (&r, b) in radii.iter().zip(&balls) {
        let s = sphere_terms(&u, potential, &rule, r);
        let h = positive_mass(s.u2, r)?;
        let energy = b[0] - b[1];
        let d = r.powi(1 - nn) * energy;
        let flux = r.powi(nn) * s.u_normal;
        let (residual, gap) = pohozaev_parts(sphere_dim, potential.hypothesis, r, &s, b);
        let local_h = u.resolution(r);
        let resolvable = r >= opts.resolve_factor * local_h;
        if !resolvable {
            warnings.push(format!("r = {r:.4e} is below {} local mesh widths (h = {local_h:.3e})", opts.resolve_factor));
        }
        points.push(TracePoint {
            r,
            h,
            d,
            n: d / h,
            pohozaev_residual: residual,
            pohozaev_tolerance: 5.0 * local_h.sqrt() * b[0] + 1e-9 * b[0].abs().max(1e-300),
            remainder_gap: gap,
            energy_defect: (energy - flux).abs() / (energy.abs() + flux.abs()).max(1e-300),
            local_h,
            resolvable,
        });
    }
    let fit = fit_gamma(&points)?;
    let order = fit.order();
    let resolved: Vec<&TracePoint> = points.iter().filter(|p| p.resolvable).collect();
    let normalized: Vec<(f64, f64)> = resolved.iter().map(|p| (p.r, p.h * p.r.powf(-2.0 * order))).collect();
    let r_lo = normalized[0].0;
    let half_decade: Vec<f64> = normalized.iter().filter(|(r, _)| *r <= r_lo * 10f64.sqrt() * (1.0 + 1e-12)).map(|p| p.1).collect();
    let hi = half_decade.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = half_decade.iter().cloned().fold(f64::INFINITY, f64::min);
    let lower = -(sphere_dim as f64 - 1.0) / 4.0;
    Ok(FrequencyTrace {
        sphere_dim,
        hypothesis: potential.hypothesis,
        normalization_limit: normalized[0].1,
        normalization_variation: (hi - lo) / hi,
        upper_bound: points.iter().map(|p| p.n).fold(f64::NEG_INFINITY, f64::max),
        lower_bound_holds: points.iter().all(|p| p.n > lower),
        fit,
        points,
        warnings,
    })
}

/// Fit `γ` on the lower half of the resolvable radii, weighting by `1/r`.
fn fit_gamma(points: &[TracePoint]) -> Result<GammaFit> {
    let resolved: Vec<&TracePoint> = points.iter().filter(|p| p.resolvable).collect();
    let m = resolved.len().div_ceil(2).max(3);
    if resolved.len() < 3 {
        return Err(Error::accuracy(MODULE, format!("only {} resolvable radii; at least 3 are needed to fit the order", resolved.len())));
    }
    let window = &resolved[..m.min(resolved.len())];
    let xs: Vec<f64> = window.iter().map(|p| p.r).collect();
    let ys: Vec<f64> = window.iter().map(|p| p.n).collect();
    let ws: Vec<f64> = xs.iter().map(|r| xs[0] / r).collect();
    let (coef, cov, residuals) = weighted_line(&xs, &ys, &ws)?;
    let gamma = coef[0];
    let std_error = cov[(0, 0)].max(0.0).sqrt();
    let logs: Vec<f64> = xs.iter().map(|r| r.ln()).collect();
    let logh: Vec<f64> = window.iter().map(|p| p.h.ln()).collect();
    let (lcoef, _, _) = weighted_line(&logs, &logh, &vec![1.0; logs.len()])?;
    let nearest_k = (2.0 * gamma).round().max(0.0) as u32;
    let snap_distance = (gamma - 0.5 * nearest_k as f64).abs();
    Ok(GammaFit {
        gamma,
        std_error,
        confidence: (gamma - 2.0 * std_error, gamma + 2.0 * std_error),
        window: (xs[0], xs[xs.len() - 1]),
        points: xs.len(),
        slope: coef[1],
        residuals,
        gamma_log_h: 0.5 * lcoef[1],
        nearest_k,
        snap_distance,
        snapped_k: (nearest_k >= 1 && snap_distance < SNAP_TOLERANCE).then_some(nearest_k),
    })
}

/// Weighted least squares for `y ≈ c₀ + c₁ x`; returns the coefficients, their
/// covariance and the residuals.
fn weighted_line(xs: &[f64], ys: &[f64], ws: &[f64]) -> Result<(Vector2<f64>, Matrix2<f64>, Vec<f64>)> {
    let mut ata = Matrix2::zeros();
    let mut atb = Vector2::zeros();
    for ((&x, &y), &w) in xs.iter().zip(ys).zip(ws) {
        let a = Vector2::new(1.0, x);
        ata += a * a.transpose() * w;
        atb += a * (w * y);
    }
    let inv = ata.try_inverse().ok_or_else(|| Error::numerical(MODULE, "degenerate fit window"))?;
    let coef = inv * atb;
    let residuals: Vec<f64> = xs.iter().zip(ys).map(|(&x, &y)| y - coef[0] - coef[1] * x).collect();
    let dof = (xs.len() as f64 - 2.0).max(1.0);
    let s2 = residuals.iter().zip(ws).map(|(e, w)| w * e * e).sum::<f64>() / dof;
    Ok((coef, inv * s2, residuals))
}

/// One sample of the `H' = 2D/r` identity.
#[derive(Debug, Clone, Serialize)]
pub struct IdentitySample {
    pub r: f64,
    pub h_prime: f64,
    pub two_d_over_r: f64,
    pub defect: f64,
    pub in_fit_window: bool,
}

/// Compare a log-central difference of `H` with `2D/r` at interior radii.
pub fn h_identity(trace: &FrequencyTrace) -> Vec<IdentitySample> {
    let p = &trace.points;
    let (lo, hi) = trace.fit.window;
    (1..p.len().saturating_sub(1))
        .filter(|&i| p[i - 1].resolvable && p[i].resolvable && p[i + 1].resolvable)
        .map(|i| {
            let slope = (p[i + 1].h.ln() - p[i - 1].h.ln()) / (p[i + 1].r.ln() - p[i - 1].r.ln());
            let h_prime = slope * p[i].h / p[i].r;
            let two_d_over_r = 2.0 * p[i].d / p[i].r;
            IdentitySample {
                r: p[i].r,
                h_prime,
                two_d_over_r,
                defect: (h_prime - two_d_over_r).abs() / h_prime.abs().max(1e-300),
                in_fit_window: p[i].r >= lo && p[i].r <= hi,
            }
        })
        .collect()
}

/// One doubling ratio `H(Rλ)/H(λ)`.
#[derive(Debug, Clone, Serialize)]
pub struct DoublingSample {
    pub lambda: f64,
    pub factor: f64,
    pub ratio: f64,
    /// `R^{2 min N}` and `R^{2 max N}` over the sampled trace.
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DoublingReport {
    pub factors: Vec<f64>,
    pub samples: Vec<DoublingSample>,
    /// Smallest `C₄` with `1/C₄ <= ratio <= C₄` for every sample.
    pub c4: f64,
    /// Relative slack allowed around the frequency envelope.
    pub slack: f64,
    pub passed: bool,
}

/// Doubling audit over the resolvable radii `λ` of the trace with `Rλ` in
/// the sampled window.
pub fn doubling(field: &dyn Field, geometry: &CrackGeometry, trace: &FrequencyTrace, factors: &[f64], slack: f64) -> Result<DoublingReport> {
    let resolved: Vec<&TracePoint> = trace.points.iter().filter(|p| p.resolvable).collect();
    let r_top = trace.points.last().map_or(0.0, |p| p.r);
    let n_min = resolved.iter().map(|p| p.n).fold(f64::INFINITY, f64::min);
    let n_max = resolved.iter().map(|p| p.n).fold(f64::NEG_INFINITY, f64::max);
    let mut samples = Vec::new();
    for &factor in factors {
        for p in resolved.iter().filter(|p| p.r * factor <= r_top * (1.0 + 1e-12)) {
            let ratio = compute_h(field, geometry, factor * p.r)? / p.h;
            samples.push(DoublingSample { lambda: p.r, factor, ratio, lower: factor.powf(2.0 * n_min), upper: factor.powf(2.0 * n_max) });
        }
    }
    if samples.is_empty() {
        return Err(Error::accuracy(MODULE, "no resolvable radius leaves room for the doubling factors"));
    }
    let c4 = samples.iter().map(|s| s.ratio.max(1.0 / s.ratio)).fold(1.0, f64::max);
    let passed = c4.is_finite() && samples.iter().all(|s| s.ratio >= s.lower * (1.0 - slack) && s.ratio <= s.upper * (1.0 + slack));
    Ok(DoublingReport { factors: factors.to_vec(), samples, c4, slack, passed })
}

/// Upper and lower power envelopes of `H` over the resolvable window.
#[derive(Debug, Clone, Serialize)]
pub struct Envelope {
    pub order: f64,
    pub sigma: f64,
    /// `H(r) <= K₁ r^{2γ̂}`.
    pub k1: f64,
    /// `H(r) >= K₂ r^{2γ̂ + σ}`.
    pub k2: f64,
}

pub fn envelope(trace: &FrequencyTrace, sigma: f64) -> Envelope {
    let order = trace.fit.order();
    let resolved = trace.points.iter().filter(|p| p.resolvable);
    let k1 = resolved.clone().map(|p| p.h * p.r.powf(-2.0 * order)).fold(0.0, f64::max);
    let k2 = resolved.map(|p| p.h * p.r.powf(-2.0 * order - sigma)).fold(f64::INFINITY, f64::min);
    Envelope { order, sigma, k1, k2 }
}

/// Outcome of the Pohozaev audit at a set of radii.
#[derive(Debug, Clone, Serialize)]
pub struct PohozaevAudit {
    pub radii: Vec<f64>,
    pub residuals: Vec<f64>,
    pub tolerances: Vec<f64>,
    /// Radii where the residual falls below `-tolerance`.
    pub failures: Vec<f64>,
}

impl PohozaevAudit {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Check the Pohozaev inequality at `count` resolvable radii spread over the trace.
pub fn pohozaev_audit(trace: &FrequencyTrace, count: usize) -> PohozaevAudit {
    let resolved: Vec<&TracePoint> = trace.points.iter().filter(|p| p.resolvable).collect();
    let picks: Vec<&TracePoint> =
        if resolved.len() <= count { resolved } else { (0..count).map(|i| resolved[i * (resolved.len() - 1) / (count - 1).max(1)]).collect() };
    PohozaevAudit {
        radii: picks.iter().map(|p| p.r).collect(),
        residuals: picks.iter().map(|p| p.pohozaev_residual).collect(),
        tolerances: picks.iter().map(|p| p.pohozaev_tolerance).collect(),
        failures: picks.iter().filter(|p| p.pohozaev_residual < -p.pohozaev_tolerance).map(|p| p.r).collect(),
    }
}

/// CSV export with a leading `# config_hash=` line.
pub fn trace_csv(trace: &FrequencyTrace, config_hash: &str) -> String {
    let mut out = format!("# config_hash={config_hash}\nr,H,D,N,pohozaev_residual\n");
    for p in &trace.points {
        out.push_str(&format!("{},{},{},{},{}\n", fmt_g17(p.r), fmt_g17(p.h), fmt_g17(p.d), fmt_g17(p.n), fmt_g17(p.pohozaev_residual)));
    }
    out
}

/// Fit summary written next to the CSV trace.
#[derive(Debug, Clone, Serialize)]
pub struct FitSummary<'a> {
    pub config_hash: &'a str,
    pub gamma: f64,
    pub confidence: (f64, f64),
    pub window: (f64, f64),
    pub residuals: &'a [f64],
    pub gamma_log_h: f64,
    pub snapped_k0: Option<u32>,
    pub snap_distance: f64,
    pub normalization_limit: f64,
    pub normalization_variation: f64,
    pub upper_bound: f64,
    pub lower_bound_holds: bool,
    pub warnings: &'a [String],
}

impl<'a> FitSummary<'a> {
    pub fn new(trace: &'a FrequencyTrace, config_hash: &'a str) -> Self {
        FitSummary {
            config_hash,
            gamma: trace.fit.gamma,
            confidence: trace.fit.confidence,
            window: trace.fit.window,
            residuals: &trace.fit.residuals,
            gamma_log_h: trace.fit.gamma_log_h,
            snapped_k0: trace.fit.snapped_k,
            snap_distance: trace.fit.snap_distance,
            normalization_limit: trace.normalization_limit,
            normalization_variation: trace.normalization_variation,
            upper_bound: trace.upper_bound,
            lower_bound_holds: trace.lower_bound_holds,
            warnings: &trace.warnings,
        }
    }
}
