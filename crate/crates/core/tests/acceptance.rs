//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line to
//! stderr and then asserts. Tests share one lock so that their timings do
//! not include each other's work.

use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use cracklab::blowup::{beta_direct, beta_integral, BlowupOptions};
use cracklab::config::ExperimentConfig;
use cracklab::experiment::{Experiment, FrequencyOutcome, Produced, SolvedField};
use cracklab::field::{ExactField, Field, MeshField};
use cracklab::frequency::{frequency_trace, FrequencyOptions};
use cracklab::geometry::{CrackFamily, CrackGeometry, Vec3};
use cracklab::solver::potential::PotentialSpec;
use cracklab::spectral::{ladder, SlitSphereBasis};
use num_rational::Ratio;

const SEED: u64 = 42;

fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: u32, name: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[criterion {id}] {verdict} {name}: {detail}");
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    ExperimentConfig::load(&path).unwrap()
}

/// A produced field with its frequency analysis and wall time.
struct Solved {
    experiment: Experiment,
    produced: Produced,
    frequency: FrequencyOutcome,
    elapsed: Duration,
}

impl Solved {
    fn build(config: ExperimentConfig) -> Solved {
        let t = Instant::now();
        let experiment = Experiment::new(config).unwrap();
        let produced = experiment.produce(SEED).unwrap();
        let frequency = experiment.frequency(produced.field.as_field()).unwrap();
        Solved { experiment, produced, frequency, elapsed: t.elapsed() }
    }

    fn field(&self) -> &dyn Field {
        self.produced.field.as_field()
    }
}

fn perturbed_2d() -> &'static Solved {
    static CELL: OnceLock<Solved> = OnceLock::new();
    CELL.get_or_init(|| Solved::build(config("flat2d_perturbed.toml")))
}

fn plain_2d() -> &'static Solved {
    static CELL: OnceLock<Solved> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut c = config("flat2d_perturbed.toml");
        c.boundary.perturbation = None;
        Solved::build(c)
    })
}

fn flat_3d() -> &'static Solved {
    static CELL: OnceLock<Solved> = OnceLock::new();
    CELL.get_or_init(|| Solved::build(config("flat3d.toml")))
}

fn paraboloid_3d() -> &'static Solved {
    static CELL: OnceLock<Solved> = OnceLock::new();
    CELL.get_or_init(|| Solved::build(config("paraboloid3d.toml")))
}

fn manufactured_2d() -> &'static Solved {
    static CELL: OnceLock<Solved> = OnceLock::new();
    CELL.get_or_init(|| Solved::build(config("flat2d_manufactured_k1.toml")))
}

/// `ρ^{k/2} sin(k t/2)` in the plane of the last two coordinates, with its
/// gradient written out by hand.
fn crack_mode(dim: usize, k: u32, radius: f64) -> ExactField {
    let a = 0.5 * k as f64;
    ExactField::new(dim, radius, move |x: &Vec3| {
        let (xn, xn1) = (x[dim - 2], x[dim - 1]);
        let rho = xn.hypot(xn1);
        if rho == 0.0 {
            return (0.0, Vec3::zeros());
        }
        let mut t = xn1.atan2(xn);
        if t < 0.0 {
            t += std::f64::consts::TAU;
        }
        let amp = a * rho.powf(a - 1.0);
        let mut g = Vec3::zeros();
        g[dim - 2] = amp * ((a - 1.0) * t).sin();
        g[dim - 1] = amp * ((a - 1.0) * t).cos();
        (rho.powf(a) * (a * t).sin(), g)
    })
}

fn relative_gap(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / norm
}

#[test]
fn criterion_1_ladder_is_exact() {
    let _g = serial();
    let t = Instant::now();
    let mut worst = String::new();
    let mut ok = true;
    for n in 1..=6u64 {
        for k in 1..=20u64 {
            let got = ladder(n as u32, k as u32).unwrap();
            let expect = Ratio::new(k * (k + 2 * n - 2), 4);
            if got != expect {
                ok = false;
                worst = format!("N={n} k={k}: {got} != {expect}");
            }
        }
        let first = ladder(n as u32, 1).unwrap();
        if first != Ratio::new(2 * n - 1, 4) {
            ok = false;
            worst = format!("first eigenvalue for N={n} is {first}");
        }
    }
    let elapsed = t.elapsed();
    let pass = ok && elapsed < Duration::from_secs(1);
    report(1, "ladder exactness", pass, format!("120 rungs exact={ok} {worst} in {elapsed:?}"));
}

#[test]
fn criterion_2_slit_sphere_spectrum() {
    let _g = serial();
    let t = Instant::now();
    let exp = Experiment::new(config("sphere_spectrum.toml")).unwrap();
    let spectrum = exp.spectrum(SEED).unwrap();
    let elapsed = t.elapsed();
    let numeric = spectrum.numeric.expect("numeric eigensolve requested");
    let mut distinct: Vec<f64> = Vec::new();
    for &mu in &numeric.eigenvalues {
        if distinct.last().is_none_or(|last| (mu - last) / last > 0.05) {
            distinct.push(mu);
        }
    }
    let expected: Vec<f64> = (1..=4).map(|k| (k * (k + 2)) as f64 / 4.0).collect();
    let errors: Vec<f64> = expected.iter().zip(&distinct).map(|(e, m)| (m - e).abs() / e).collect();
    let pass = numeric.cells >= 40_000 && distinct.len() >= 4 && errors.iter().all(|e| *e < 0.01) && elapsed < Duration::from_secs(120);
    report(
        2,
        "slit-sphere eigenvalues",
        pass,
        format!("{} cells, distinct {:?}, relative errors {:?}, {elapsed:?}", numeric.cells, &distinct[..distinct.len().min(4)], errors),
    );
}

#[test]
fn criterion_3_manufactured_mode_frequency() {
    let _g = serial();
    let mut lines = Vec::new();
    let mut pass = true;
    for dim in [2usize, 3] {
        for k in 1..=3u32 {
            let t = Instant::now();
            let radius = 0.125;
            let field = crack_mode(dim, k, radius);
            let opts = FrequencyOptions::new(1e-3 * radius, radius, 30);
            let trace = frequency_trace(&field, &PotentialSpec::zero(), &CrackGeometry::flat(dim), &opts).unwrap();
            let half = 0.5 * k as f64;
            let resolved: Vec<f64> = trace.points.iter().filter(|p| p.resolvable).map(|p| (p.n - half).abs()).collect();
            let worst = resolved.iter().cloned().fold(0.0, f64::max);
            let elapsed = t.elapsed();
            let ok = !resolved.is_empty() && worst < 1e-3 && trace.fit.snapped_k == Some(k) && elapsed < Duration::from_secs(60);
            pass &= ok;
            lines.push(format!("d={dim} k={k}: max|N-k/2|={worst:.1e} over {} radii, γ={:.6}, {elapsed:.1?}", resolved.len(), trace.fit.gamma));
        }
    }
    report(3, "manufactured-mode frequency", pass, lines.join("; "));
}

#[test]
fn criterion_4_solved_problems_snap_to_the_first_rung() {
    let _g = serial();
    let mut lines = Vec::new();
    let mut pass = true;
    for (label, solved, budget) in [("d=2", plain_2d(), 600), ("d=3", flat_3d(), 600)] {
        let fit = &solved.frequency.trace.fit;
        let window: Vec<f64> = solved.frequency.identity.iter().filter(|s| s.in_fit_window).map(|s| s.defect).collect();
        let worst = window.iter().cloned().fold(0.0, f64::max);
        let ok = (fit.gamma - 0.5).abs() < 0.05 && !window.is_empty() && worst < 0.02 && solved.elapsed < Duration::from_secs(budget);
        pass &= ok;
        lines.push(format!("{label}: γ={:.4}, max identity defect {worst:.2e} over {} radii, {:.1?}", fit.gamma, window.len(), solved.elapsed));
    }
    report(4, "solved-problem ladder snap", pass, lines.join("; "));
}

#[test]
fn criterion_5_pohozaev_inequality() {
    let _g = serial();
    let mut lines = Vec::new();
    let mut pass = true;
    for (label, solved) in [("flat d=3", flat_3d()), ("paraboloid d=3", paraboloid_3d()), ("flat d=2", perturbed_2d())] {
        let audit = &solved.frequency.pohozaev;
        let ok = audit.radii.len() == 10 && audit.passed();
        pass &= ok;
        let margin = audit.residuals.iter().zip(&audit.tolerances).map(|(r, t)| r / t).fold(f64::INFINITY, f64::min);
        lines.push(format!("{label}: {} radii, min residual/tolerance {margin:.3}", audit.radii.len()));
    }
    // exact mode with f ≡ 0: the inequality is an identity
    let exact = manufactured_2d();
    let points: Vec<_> = exact.frequency.trace.points.iter().filter(|p| p.resolvable).collect();
    let worst = points.iter().map(|p| p.pohozaev_residual.abs() / p.pohozaev_tolerance).fold(0.0, f64::max);
    let scale = points.iter().map(|p| p.pohozaev_residual.abs() / (p.d * p.h / p.r).abs().max(1e-300)).fold(0.0, f64::max);
    let ok = exact.frequency.pohozaev.radii.len() == 10 && worst <= 1.0 && scale < 1e-8;
    pass &= ok;
    lines.push(format!("exact mode: max |residual|/tolerance {worst:.2e}, relative {scale:.2e}"));
    report(5, "Pohozaev audit", pass, lines.join("; "));
}

#[test]
fn criterion_6_blowup_coefficients() {
    let _g = serial();
    let solved = perturbed_2d();
    let (report_2d, _) = solved.experiment.blowup(solved.field(), &solved.frequency.trace).unwrap();
    let cross = report_2d.cross_route_discrepancy;

    let exact = manufactured_2d();
    let field = exact.field();
    let basis = SlitSphereBasis::build(1, 2).unwrap();
    let pot = PotentialSpec::zero();
    let r = 0.8 * field.radius();
    let geometry = &exact.experiment.geometry;
    let at_r = beta_integral(field, &pot, geometry, &basis, 1, r, 1e-3 * r).unwrap().beta;
    let at_half = beta_integral(field, &pot, geometry, &basis, 1, 0.5 * r, 1e-3 * r).unwrap().beta;
    let independence = relative_gap(&at_r, &at_half);

    let SolvedField::Mesh(mesh_field) = &solved.produced.field else { panic!("solved field expected") };
    let mesh = solved.produced.mesh.clone().unwrap();
    let k0 = report_2d.k0;
    let basis = SlitSphereBasis::build(1, 4).unwrap();
    let pot = &solved.experiment.config.potential;
    let geometry = &solved.experiment.geometry;
    let radius = report_2d.integral.radius;
    let cut = report_2d.integral.lambda_cut;
    let lambdas = BlowupOptions::dyadic(radius, cut, 4).lambdas;
    let base_int = beta_integral(mesh_field, pot, geometry, &basis, k0, radius, cut).unwrap().beta;
    let base_dir = beta_direct(mesh_field, &basis, k0, &lambdas).unwrap().beta;
    let mut linearity: f64 = 0.0;
    for c in [2.0, -3.0] {
        let scaled = MeshField::new(Arc::clone(&mesh), mesh_field.values.iter().map(|v| c * v).collect());
        let int = beta_integral(&scaled, pot, geometry, &basis, k0, radius, cut).unwrap().beta;
        let dir = beta_direct(&scaled, &basis, k0, &lambdas).unwrap().beta;
        let target_int: Vec<f64> = base_int.iter().map(|b| c * b).collect();
        let target_dir: Vec<f64> = base_dir.iter().map(|b| c * b).collect();
        linearity = linearity.max(relative_gap(&target_int, &int)).max(relative_gap(&target_dir, &dir));
    }
    let pass = cross < 0.05 && independence < 1e-6 && linearity < 1e-12;
    report(
        6,
        "blow-up coefficients",
        pass,
        format!(
            "cross-route {cross:.4} (direct {:?}, integral {:?}); R vs R/2 {independence:.1e}; linearity {linearity:.1e}",
            report_2d.beta_direct, report_2d.beta_integral
        ),
    );
}

#[test]
fn criterion_7_approximating_domains() {
    let _g = serial();
    let t = Instant::now();
    let exp = Experiment::new(config("flat2d_approx.toml")).unwrap();
    let reference = exp.produce(SEED).unwrap();
    let outcome = exp.approx(reference.field.as_field(), SEED).unwrap();
    let ns: Vec<u32> = outcome.results.iter().map(|r| r.n).collect();
    let errors: Vec<f64> = outcome.results.iter().map(|r| r.h1_error).collect();
    let certified = outcome.results.iter().all(|r| r.certificate.passed);
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    let pass = ns == [8, 16, 32] && certified && decreasing && outcome.strictly_decreasing;
    report(7, "approximating domains", pass, format!("n={ns:?}, certificates {certified}, H1 errors {errors:.4?}, {:.1?}", t.elapsed()));
}

#[test]
fn criterion_8_straightening_invariants() {
    let _g = serial();
    let mut lines = Vec::new();
    let mut pass = true;
    let families = [(3, CrackFamily::Paraboloid { a: 0.5 }), (3, CrackFamily::Paraboloid { a: 1.5 }), (3, CrackFamily::Quartic { a: 0.5, b: 1.0 })];
    for (dim, family) in families {
        let geometry = CrackGeometry::construct(dim, family, 0.5).unwrap();
        let audit = geometry.invariant_audit(10_000, SEED).unwrap();
        let radii: Vec<f64> = (0..10).map(|j| 0.4 * 0.5f64.powi(j)).collect();
        let scan = geometry.coefficient_deviation_scan(&radii, 2000, SEED).unwrap();
        let top = scan.iter().cloned().fold(0.0, f64::max);
        // the ratio must not grow as the balls shrink
        let bounded = scan.iter().all(|s| s.is_finite()) && scan[scan.len() - 1] <= 1.01 * scan[0].max(scan[1]);
        let ok = audit.samples >= 10_000 && audit.max_norm_defect <= 1e-10 && audit.max_round_trip_defect <= 1e-8 && audit.passed() && bounded;
        pass &= ok;
        lines.push(format!(
            "{} d={dim}: radius {:.1e}, round trip {:.1e}, sup |A-I|/|x| {top:.3} (smallest ball {:.3})",
            family.name(),
            audit.max_norm_defect,
            audit.max_round_trip_defect,
            scan[scan.len() - 1]
        ));
    }
    report(8, "straightening invariants", pass, lines.join("; "));
}

#[test]
fn criterion_9_doubling() {
    let _g = serial();
    let mut lines = Vec::new();
    let mut pass = true;
    let cases = [("flat d=2 perturbed", perturbed_2d()), ("flat d=2", plain_2d()), ("flat d=3", flat_3d()), ("paraboloid d=3", paraboloid_3d())];
    for (label, solved) in cases {
        let d = &solved.frequency.doubling;
        let factors_ok = d.factors == [1.25, 1.5, 2.0] && [1.25, 1.5, 2.0].iter().all(|f| d.samples.iter().any(|s| s.factor == *f));
        let ok = factors_ok && d.passed && d.c4.is_finite();
        pass &= ok;
        lines.push(format!("{label}: C={:.3} over {} ratios, within envelope {}", d.c4, d.samples.len(), d.passed));
    }
    report(9, "doubling", pass, lines.join("; "));
}
