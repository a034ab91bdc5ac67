//! Experiment configuration: a TOML key-value tree, its canonical
//! serialisation (sorted dotted keys, `%.17g` floats) and the SHA-256 hash of
//! that serialisation, which every artifact carries.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::CrackFamily;
use crate::io::{fmt_g17, read_text};
use crate::solver::potential::PotentialSpec;

/// Default seed of probe-field sampling.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Ambient dimension `d = N + 1`, either 2 or 3.
    pub dimension: usize,
    pub crack: CrackFamily,
    #[serde(default)]
    pub potential: PotentialSpec,
    /// Radius on which the crack sheet and the potential are trusted.
    pub validity_radius: f64,
    /// Radius of the computational ball.
    pub radius: f64,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub frequency: FrequencyConfig,
    #[serde(default)]
    pub blowup: BlowupConfig,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub approx: ApproxConfig,
    #[serde(default)]
    pub audit: AuditConfig,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    /// Mesh width on the outer sphere.
    pub h: f64,
    /// Radial grading exponent toward the crack edge.
    pub grading: f64,
    /// Grading of the extrusion layers toward `x_1 = 0` (dimension 3).
    pub axial_grading: f64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig { h: 0.004, grading: 3.0, axial_grading: 3.0 }
    }
}

/// How the field is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FieldSource {
    /// Finite element solve with the mode trace on the outer sphere.
    #[default]
    Solve,
    /// The closed-form homogeneous mode itself (flat crack, zero potential).
    Manufactured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundaryConfig {
    pub source: FieldSource,
    /// Rung and index of the leading mode of the trace.
    pub k: u32,
    pub m: u32,
    pub amplitude: f64,
    /// Optional second mode added to the trace.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<ModeTerm>,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        BoundaryConfig { source: FieldSource::Solve, k: 1, m: 1, amplitude: 1.0, perturbation: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeTerm {
    pub k: u32,
    pub m: u32,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrequencyConfig {
    /// Smallest radius of the trace, relative to the ball radius.
    pub r_min_ratio: f64,
    pub points: usize,
    pub doubling_factors: Vec<f64>,
    pub doubling_slack: f64,
    pub envelope_sigma: f64,
    pub pohozaev_radii: usize,
}

impl Default for FrequencyConfig {
    fn default() -> Self {
        FrequencyConfig { r_min_ratio: 1e-3, points: 40, doubling_factors: vec![1.25, 1.5, 2.0], doubling_slack: 0.1, envelope_sigma: 0.1, pohozaev_radii: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlowupConfig {
    /// Radius `R` of the integral formula, relative to the ball radius.
    pub radius_ratio: f64,
    pub k_max: u32,
    /// Absolute `λ_cut`; chosen from the mesh resolution when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_cut: Option<f64>,
    /// Radius of the angular profile samples, relative to `λ_cut`.
    pub profile_ratio: f64,
}

impl Default for BlowupConfig {
    fn default() -> Self {
        BlowupConfig { radius_ratio: 0.8, k_max: 4, lambda_cut: None, profile_ratio: 8.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    pub k_max: u32,
    /// Target cell count of the numeric eigensolve; 0 skips it.
    pub cells: usize,
    pub eigenvalues: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig { k_max: 4, cells: 0, eigenvalues: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApproxConfig {
    pub n: Vec<u32>,
    /// Radius `r_0` of the approximating domains, relative to the ball radius.
    pub radius_ratio: f64,
    /// Width of the lift cutoff zone, relative to `r_0`.
    pub lift_width_ratio: f64,
    pub h: f64,
    pub grading: f64,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        ApproxConfig { n: vec![8, 16, 32], radius_ratio: 0.5, lift_width_ratio: 1.5, h: 0.004, grading: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub invariant_samples: usize,
    pub coercivity_probes: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig { invariant_samples: 10_000, coercivity_probes: 20 }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Config(format!("config file {} does not exist", path.display())));
        }
        Self::from_toml(&read_text(path)?).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Range checks on every parameter.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(2..=3).contains(&self.dimension) {
            return bad(format!("dimension must be 2 or 3, got {}", self.dimension));
        }
        if self.dimension == 2 && self.crack != CrackFamily::Flat {
            return bad("only the flat crack exists in dimension 2".into());
        }
        if !(self.radius > 0.0 && self.radius <= self.validity_radius) {
            return bad(format!("need 0 < radius = {} <= validity_radius = {}", self.radius, self.validity_radius));
        }
        let m = &self.mesh;
        if !(m.h > 0.0 && m.h < self.radius && m.grading >= 1.0 && m.axial_grading >= 1.0) {
            return bad(format!("mesh needs 0 < h < radius and gradings >= 1, got {m:?}"));
        }
        let b = &self.boundary;
        if b.k == 0 || b.m == 0 || !b.amplitude.is_finite() {
            return bad("boundary mode needs k >= 1, m >= 1 and a finite amplitude".into());
        }
        if b.source == FieldSource::Manufactured && (self.crack != CrackFamily::Flat || !self.potential.is_zero()) {
            return bad("manufactured fields solve the problem only for the flat crack with zero potential".into());
        }
        let f = &self.frequency;
        if !(f.r_min_ratio > 0.0
            && f.r_min_ratio < 1.0
            && f.points >= 4
            && f.doubling_factors.iter().all(|r| *r > 1.0)
            && f.doubling_slack >= 0.0
            && f.envelope_sigma > 0.0)
        {
            return bad(format!("invalid frequency settings {f:?}"));
        }
        let u = &self.blowup;
        if !(u.radius_ratio > 0.0 && u.radius_ratio <= 1.0 && u.k_max >= 1 && u.profile_ratio >= 1.0 && u.lambda_cut.is_none_or(|c| c > 0.0)) {
            return bad(format!("invalid blowup settings {u:?}"));
        }
        if self.spectrum.k_max == 0 {
            return bad("spectrum.k_max must be at least 1".into());
        }
        let a = &self.approx;
        if !(a.radius_ratio > 0.0
            && a.radius_ratio <= 1.0
            && a.lift_width_ratio > std::f64::consts::SQRT_2
            && a.h > 0.0
            && a.grading >= 1.0
            && a.n.iter().all(|n| *n >= 2))
        {
            return bad(format!("invalid approx settings {a:?}"));
        }
        Ok(())
    }

    /// Sorted `dotted.key = value` lines with `%.17g` floats; valid TOML.
    pub fn canonical(&self) -> String {
        let value = serde_json::to_value(self).expect("config serialises");
        let mut lines = Vec::new();
        flatten("", &value, &mut lines);
        lines.sort();
        lines.iter().map(|l| l.to_string() + "\n").collect()
    }

    /// Hex SHA-256 of the canonical serialisation.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn sphere_dim(&self) -> usize {
        self.dimension - 1
    }
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<String>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        Value::Null => {}
        other => out.push(format!("{prefix} = {}", scalar(other))),
    }
}

fn scalar(value: &Value) -> String {
    match value {
        Value::Number(n) if n.is_f64() => {
            let s = fmt_g17(n.as_f64().expect("float"));
            // keep floats typed as floats when read back
            if s.contains(['.', 'e', 'n', 'i']) {
                s
            } else {
                s + ".0"
            }
        }
        Value::Array(items) => format!("[{}]", items.iter().map(scalar).collect::<Vec<_>>().join(", ")),
        other => other.to_string(),
    }
}
