//! Orchestration of the subcommands: build the geometry, mesh and field a
//! configuration describes, run one analysis and write its artifacts.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use crate::blowup::{blowup_report, profile_csv, resolvable_cut, BlowupOptions, BlowupReport};
use crate::config::{ExperimentConfig, FieldSource};
use crate::error::{Error, Result};
use crate::field::{mode_field, ExactField, Field, MeshField};
use crate::frequency::{
    doubling, envelope, frequency_trace, h_identity, pohozaev_audit, trace_csv, DoublingReport, Envelope, FitSummary, FrequencyOptions, FrequencyTrace,
    IdentitySample, PohozaevAudit,
};
use crate::geometry::{CrackGeometry, InvariantAudit, Vec3};
use crate::io::{write_json, write_text};
use crate::mesh::build::{cracked_ball, cracked_disk, BallParams, PolarParams};
use crate::mesh::io::{field_to_string, mesh_to_string};
use crate::mesh::Mesh;
use crate::solver::approx::{solve_approximating, ApproxOptions, ApproxResult};
use crate::solver::potential::{hypothesis_report, HypothesisReport};
use crate::solver::{assemble, solve_dirichlet, CoercivityReport, SolveReport};
use crate::spectral::eigen::{slit_sphere_eigenvalues, EigenOptions, NumericSpectrum};
use crate::spectral::{ladder, multiplicity, RungCheck, SlitSphereBasis};

const MODULE: &str = "cli";

/// The field an experiment analyses, in straightened coordinates.
pub enum SolvedField {
    Mesh(MeshField),
    Exact(ExactField),
}

impl SolvedField {
    pub fn as_field(&self) -> &dyn Field {
        match self {
            SolvedField::Mesh(f) => f,
            SolvedField::Exact(f) => f,
        }
    }
}

pub struct Produced {
    pub field: SolvedField,
    pub mesh: Option<Arc<Mesh>>,
    pub report: Option<SolveReport>,
}

/// A validated configuration with its hash and geometry.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub hash: String,
    pub geometry: CrackGeometry,
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config_hash: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let geometry = CrackGeometry::construct(config.dimension, config.crack, config.validity_radius)?;
        if config.radius > geometry.r_bar {
            return Err(Error::precondition(
                MODULE,
                format!("radius {} exceeds the working radius {} of the straightening map", config.radius, geometry.r_bar),
            ));
        }
        let hash = config.hash();
        Ok(Experiment { config, hash, geometry })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(ExperimentConfig::load(path)?)
    }

    fn out(&self, dir: &Path, name: &str) -> PathBuf {
        dir.join(name)
    }

    fn write_stamped<T: Serialize>(&self, path: &Path, body: &T) -> Result<()> {
        write_json(path, &Stamped { config_hash: &self.hash, body })
    }

    pub fn mesh(&self) -> Result<Mesh> {
        let c = &self.config;
        let polar = PolarParams { radius: c.radius, h: c.mesh.h, grading: c.mesh.grading };
        match c.dimension {
            2 => cracked_disk(polar),
            _ => cracked_ball(BallParams { polar, axial_grading: c.mesh.axial_grading }),
        }
    }

    /// Outer trace `Σ a |y|^{k/2} Y_{k,m}(y/|y|)` in straightened coordinates.
    pub fn boundary_trace(&self) -> Result<impl Fn(&Vec3) -> f64 + Sync> {
        let b = &self.config.boundary;
        let n = self.config.sphere_dim();
        let k_top = b.perturbation.map_or(b.k, |p| p.k.max(b.k));
        let basis = SlitSphereBasis::build(n, k_top)?;
        let mut terms = Vec::new();
        for (k, m, a) in std::iter::once((b.k, b.m, b.amplitude)).chain(b.perturbation.map(|p| (p.k, p.m, p.amplitude))) {
            let mode = basis.mode(k, m).ok_or_else(|| Error::Config(format!("no slit-sphere mode (k={k}, m={m}) for N={n}")))?;
            terms.push((mode.clone(), a));
        }
        Ok(move |y: &Vec3| terms.iter().map(|(mode, a)| a * mode.eval_homogeneous(n, y).0).sum())
    }

    /// Solve the configured problem, or build the closed-form mode.
    pub fn produce(&self, seed: u64) -> Result<Produced> {
        let c = &self.config;
        if c.boundary.source == FieldSource::Manufactured {
            if c.boundary.perturbation.is_some() {
                return Err(Error::Config("manufactured fields take a single mode".into()));
            }
            let n = c.sphere_dim();
            let basis = SlitSphereBasis::build(n, c.boundary.k)?;
            let mode =
                basis.mode(c.boundary.k, c.boundary.m).ok_or_else(|| Error::Config(format!("no slit-sphere mode (k={}, m={})", c.boundary.k, c.boundary.m)))?;
            let field = mode_field(mode, n, c.radius, c.boundary.amplitude);
            return Ok(Produced { field: SolvedField::Exact(field), mesh: None, report: None });
        }
        let mesh = Arc::new(self.mesh()?);
        let problem = assemble(mesh.clone(), &self.geometry, &c.potential)?;
        let trace = self.boundary_trace()?;
        let (field, report) = solve_dirichlet(&problem, &trace, seed)?;
        Ok(Produced { field: SolvedField::Mesh(field), mesh: Some(mesh), report: Some(report) })
    }

    pub fn frequency(&self, field: &dyn Field) -> Result<FrequencyOutcome> {
        let f = &self.config.frequency;
        let r_max = field.radius();
        let opts = FrequencyOptions::new(f.r_min_ratio * self.config.radius, r_max, f.points);
        let trace = frequency_trace(field, &self.config.potential, &self.geometry, &opts)?;
        let identity = h_identity(&trace);
        let doubling = doubling(field, &self.geometry, &trace, &f.doubling_factors, f.doubling_slack)?;
        let envelope = envelope(&trace, f.envelope_sigma);
        let pohozaev = pohozaev_audit(&trace, f.pohozaev_radii);
        Ok(FrequencyOutcome { trace, identity, doubling, envelope, pohozaev })
    }

    /// Blow-up analysis at the rung the frequency fit snapped to.
    pub fn blowup(&self, field: &dyn Field, trace: &FrequencyTrace) -> Result<(BlowupReport, String)> {
        let k0 = trace.fit.snapped_k.ok_or_else(|| {
            Error::accuracy(
                "blowup",
                format!("fitted order {:.4} is {:.4} away from the ladder; no rung to expand in", trace.fit.gamma, trace.fit.snap_distance),
            )
        })?;
        let b = &self.config.blowup;
        let basis = SlitSphereBasis::build(self.config.sphere_dim(), b.k_max.max(k0))?;
        let radius = b.radius_ratio * field.radius();
        let cut = b.lambda_cut.unwrap_or_else(|| resolvable_cut(field, radius));
        let opts = BlowupOptions::dyadic(radius, cut, b.k_max.max(k0));
        let report = blowup_report(field, &self.config.potential, &self.geometry, &basis, k0, &opts)?;
        let lambda = (cut * b.profile_ratio).min(radius);
        let csv = profile_csv(field, &self.geometry, &basis, k0, &report.beta_integral, lambda, &self.hash)?;
        Ok((report, csv))
    }

    /// Approximating smoothed-domain solves against the cracked reference.
    pub fn approx(&self, reference: &dyn Field, seed: u64) -> Result<ApproxOutcome> {
        let a = &self.config.approx;
        let r0 = a.radius_ratio * self.config.radius;
        let opts = ApproxOptions { h: a.h, grading: a.grading, lift_width: a.lift_width_ratio * r0 };
        let mut results = Vec::new();
        for &n in &a.n {
            let (_, res) = solve_approximating(&self.geometry, &self.config.potential, n, r0, reference, opts, seed)?;
            results.push(res);
        }
        let strictly_decreasing = results.windows(2).all(|w| w[1].h1_error < w[0].h1_error);
        Ok(ApproxOutcome { radius: r0, options: opts, results, strictly_decreasing })
    }

    pub fn spectrum(&self, seed: u64) -> Result<SpectrumOutcome> {
        let s = &self.config.spectrum;
        let n = self.config.sphere_dim();
        let mut rungs = Vec::new();
        for k in 1..=s.k_max {
            let mu = ladder(n as u32, k)?;
            rungs.push(Rung {
                k,
                mu: *mu.numer() as f64 / *mu.denom() as f64,
                exact: format!("{}/{}", mu.numer(), mu.denom()),
                multiplicity: multiplicity(n, k),
            });
        }
        let basis = SlitSphereBasis::build(n, s.k_max)?;
        let mut numeric = None;
        let mut checks = Vec::new();
        if s.cells > 0 {
            // shift below the first rung so the lowest eigenvalues converge first
            let shift = 0.8 * rungs[0].mu;
            let spectrum = slit_sphere_eigenvalues(n, s.cells, EigenOptions { count: s.eigenvalues, shift, tol: 1e-9, seed })?;
            checks = basis.validate_against(&spectrum.eigenvalues)?;
            numeric = Some(spectrum);
        }
        Ok(SpectrumOutcome {
            sphere_dim: n,
            rungs,
            basis_orthonormality_defect: basis.orthonormality_defect,
            basis_modes: basis.modes.iter().map(|m| (m.k, m.m)).collect(),
            numeric,
            checks,
        })
    }

    /// Hypothesis report, straightening invariants, solver probes and the
    /// Pohozaev and doubling audits.
    pub fn audit(&self, seed: u64) -> Result<AuditOutcome> {
        let c = &self.config;
        let hypotheses = hypothesis_report(&c.potential, c.sphere_dim(), c.validity_radius)?;
        let invariants = self.geometry.invariant_audit(c.audit.invariant_samples, seed)?;
        let produced = self.produce(seed)?;
        let field = produced.field.as_field();
        let coercivity = match (&produced.mesh, produced.report.is_some()) {
            (Some(mesh), true) => Some(assemble(mesh.clone(), &self.geometry, &c.potential)?.coercivity_probe(c.audit.coercivity_probes, seed)),
            _ => None,
        };
        let freq = self.frequency(field)?;
        let mut failures = Vec::new();
        if !hypotheses.all_passed() {
            failures.push("potential hypotheses".to_string());
        }
        if !invariants.passed() {
            failures.push("straightening invariants".to_string());
        }
        if coercivity.as_ref().is_some_and(|c| !c.passed) {
            failures.push("coercivity probe".to_string());
        }
        if !freq.pohozaev.passed() {
            failures.push(format!("Pohozaev inequality at r = {:?}", freq.pohozaev.failures));
        }
        if !freq.doubling.passed {
            failures.push("doubling envelope".to_string());
        }
        Ok(AuditOutcome {
            passed: failures.is_empty(),
            failures,
            hypotheses,
            invariants,
            coercivity,
            solve: produced.report,
            pohozaev: freq.pohozaev,
            doubling: freq.doubling,
        })
    }

    /// Run one subcommand, writing artifacts into `out`. Returns whether
    /// every audited property held.
    pub fn run(&self, command: Command, out: &Path, seed: u64) -> Result<bool> {
        match command {
            Command::Spectrum => {
                let s = self.spectrum(seed)?;
                self.write_stamped(&self.out(out, "spectrum.json"), &s)?;
                Ok(true)
            }
            Command::Solve => {
                let p = self.produce(seed)?;
                let (SolvedField::Mesh(field), Some(mesh)) = (&p.field, &p.mesh) else {
                    return Err(Error::Config("`solve` needs boundary.source = \"solve\"".into()));
                };
                write_text(&self.out(out, "mesh.txt"), &mesh_to_string(mesh, &self.hash))?;
                write_text(&self.out(out, "field.txt"), &field_to_string(&field.values, &self.hash))?;
                self.write_stamped(&self.out(out, "solve.json"), &p.report)?;
                Ok(true)
            }
            Command::Frequency => {
                let p = self.produce(seed)?;
                let f = self.frequency(p.field.as_field())?;
                write_text(&self.out(out, "frequency.csv"), &trace_csv(&f.trace, &self.hash))?;
                let fit = FitReport {
                    fit: FitSummary::new(&f.trace, &self.hash),
                    identity: &f.identity,
                    doubling: &f.doubling,
                    envelope: &f.envelope,
                    pohozaev: &f.pohozaev,
                };
                write_json(&self.out(out, "fit.json"), &fit)?;
                Ok(true)
            }
            Command::Blowup => {
                let p = self.produce(seed)?;
                let field = p.field.as_field();
                let f = self.frequency(field)?;
                let (report, csv) = self.blowup(field, &f.trace)?;
                self.write_stamped(&self.out(out, "blowup.json"), &report)?;
                write_text(&self.out(out, "profile.csv"), &csv)?;
                Ok(true)
            }
            Command::Approx => {
                if self.config.dimension != 2 {
                    return Err(Error::Config("`approx` runs in dimension 2".into()));
                }
                let p = self.produce(seed)?;
                let a = self.approx(p.field.as_field(), seed)?;
                self.write_stamped(&self.out(out, "approx.json"), &a)?;
                Ok(a.strictly_decreasing)
            }
            Command::Audit => {
                let a = self.audit(seed)?;
                self.write_stamped(&self.out(out, "audit.json"), &a)?;
                Ok(a.passed)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Solve,
    Frequency,
    Blowup,
    Approx,
    Audit,
}

#[derive(Debug, Clone, Serialize)]
pub struct FrequencyOutcome {
    pub trace: FrequencyTrace,
    pub identity: Vec<IdentitySample>,
    pub doubling: DoublingReport,
    pub envelope: Envelope,
    pub pohozaev: PohozaevAudit,
}

#[derive(Serialize)]
struct FitReport<'a> {
    #[serde(flatten)]
    fit: FitSummary<'a>,
    identity: &'a [IdentitySample],
    doubling: &'a DoublingReport,
    envelope: &'a Envelope,
    pohozaev: &'a PohozaevAudit,
}

#[derive(Debug, Clone, Serialize)]
pub struct ApproxOutcome {
    pub radius: f64,
    pub options: ApproxOptions,
    pub results: Vec<ApproxResult>,
    pub strictly_decreasing: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Rung {
    pub k: u32,
    pub mu: f64,
    /// Exact rational value.
    pub exact: String,
    pub multiplicity: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumOutcome {
    pub sphere_dim: usize,
    pub rungs: Vec<Rung>,
    pub basis_orthonormality_defect: f64,
    pub basis_modes: Vec<(u32, u32)>,
    pub numeric: Option<NumericSpectrum>,
    pub checks: Vec<RungCheck>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditOutcome {
    pub passed: bool,
    pub failures: Vec<String>,
    pub hypotheses: HypothesisReport,
    pub invariants: InvariantAudit,
    pub coercivity: Option<CoercivityReport>,
    pub solve: Option<SolveReport>,
    pub pohozaev: PohozaevAudit,
    pub doubling: DoublingReport,
}
