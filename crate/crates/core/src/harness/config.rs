//! Study configuration: a TOML document with unknown keys rejected, plus
//! `key=value` overrides applied before validation.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grid::{MeshSpec, Profile};
use crate::model::{builtin, cfl_estimate, CflEstimate, Model, SampleLattice};
use crate::walk::ExpectationMode;

/// Environment variable overriding `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "LFVAR_OUTPUT_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("invalid value for '{key}': {reason}")]
    Invalid { key: String, reason: String },
    #[error("malformed override '{0}'; expected key=value")]
    BadOverride(String),
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    VError,
    UPointwise,
    Characteristic,
    Dispersion,
    Equivalence,
}

impl StudyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StudyKind::VError => "v-error",
            StudyKind::UPointwise => "u-pointwise",
            StudyKind::Characteristic => "characteristic",
            StudyKind::Dispersion => "dispersion",
            StudyKind::Equivalence => "equivalence",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_model")]
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub c: f64,
    /// The constant `h(c)` on the right of the Hamilton-Jacobi equation.
    #[serde(default)]
    pub h: f64,
}

fn default_model() -> String {
    "burgers".into()
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            name: default_model(),
            params: BTreeMap::new(),
            c: 0.0,
            h: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialData {
    /// `v⁰ = A cos(2πy)/(2π)`, `u⁰ = −A sin(2πy)`.
    Cosine {
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `u_left` on `[0, 1/2)`, `u_right` on `[1/2, 1)`.
    Riemann { u_left: f64, u_right: f64 },
    Zero,
}

fn one() -> f64 {
    1.0
}

impl InitialData {
    pub fn u0(&self) -> Profile {
        match *self {
            InitialData::Cosine { amplitude } => Profile::smooth(move |y| -amplitude * (2.0 * PI * y).sin()),
            InitialData::Riemann { u_left, u_right } => Profile::PiecewiseConstant {
                breaks: vec![0.0, 0.5],
                values: vec![u_left, u_right],
            },
            InitialData::Zero => Profile::PiecewiseConstant {
                breaks: vec![0.0],
                values: vec![0.0],
            },
        }
    }

    /// Periodic primitive `v⁰` on the real line.
    pub fn v0(&self) -> Arc<dyn Fn(f64) -> f64 + Send + Sync> {
        match *self {
            InitialData::Cosine { amplitude } => Arc::new(move |y: f64| amplitude * (2.0 * PI * y).cos() / (2.0 * PI)),
            InitialData::Riemann { u_left, u_right } => Arc::new(move |y: f64| {
                let z = y.rem_euclid(1.0);
                if z < 0.5 {
                    u_left * z
                } else {
                    u_left * 0.5 + u_right * (z - 0.5)
                }
            }),
            InitialData::Zero => Arc::new(|_| 0.0),
        }
    }

    /// `sup |u⁰|`.
    pub fn bound(&self) -> f64 {
        match *self {
            InitialData::Cosine { amplitude } => amplitude.abs(),
            InitialData::Riemann { u_left, u_right } => u_left.abs().max(u_right.abs()),
            InitialData::Zero => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WalkModeName {
    Enumerated,
    Occupation,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkConfig {
    #[serde(default = "default_walk_mode")]
    pub mode: WalkModeName,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_walk_mode() -> WalkModeName {
    WalkModeName::Occupation
}

fn default_samples() -> usize {
    10_000
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            mode: default_walk_mode(),
            n_samples: default_samples(),
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn mode(&self) -> ExpectationMode {
        match self.mode {
            WalkModeName::Enumerated => ExpectationMode::Enumerated,
            WalkModeName::Occupation => ExpectationMode::Occupation,
            WalkModeName::Sampled => ExpectationMode::Sampled {
                n_samples: self.n_samples,
                seed: self.seed,
            },
        }
    }
}

/// Velocity field used by the dispersion study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DispersionField {
    Minimizing,
    Constant { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub kind: StudyKind,
    #[serde(default)]
    pub model: ModelConfig,
    pub initial: InitialData,
    /// Values of `N`; `K` follows from the mesh ratio.
    pub ladder: Vec<usize>,
    pub t_final: f64,
    /// Mesh ratio as a fraction of the stability limit.
    #[serde(default = "default_fraction")]
    pub lambda_fraction: f64,
    /// Lower end `λ₀` of the admissible band.
    #[serde(default = "default_lambda_min")]
    pub lambda_min: f64,
    #[serde(default)]
    pub lambda_cap: Option<f64>,
    #[serde(default)]
    pub walk: WalkConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Points per axis of the sup-norm lattice.
    #[serde(default = "default_lattice")]
    pub sample_lattice: usize,
    /// Half-width of the band excluded around shocks; defaults to ten
    /// coarsest cells.
    #[serde(default)]
    pub exclusion_radius: Option<f64>,
    /// `(x, t)` for the characteristic and dispersion studies.
    #[serde(default)]
    pub point: Option<[f64; 2]>,
    #[serde(default)]
    pub dispersion_field: Option<DispersionField>,
}

fn default_fraction() -> f64 {
    0.8
}

fn default_lambda_min() -> f64 {
    1e-3
}

fn default_lattice() -> usize {
    64
}

fn parse_override(raw: &str) -> Result<(Vec<String>, toml::Value), ConfigError> {
    let (key, value) = raw.split_once('=').ok_or_else(|| ConfigError::BadOverride(raw.to_string()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::BadOverride(raw.to_string()));
    }
    let value = value.trim();
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    Ok((key.split('.').map(str::to_string).collect(), parsed))
}

fn apply_override(doc: &mut toml::Table, path: &[String], value: toml::Value) -> Result<(), ConfigError> {
    let (last, parents) = path.split_last().expect("override key is non-empty");
    let mut table = doc;
    for part in parents {
        let entry = table
            .entry(part.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| invalid(&path.join("."), format!("'{part}' is not a table")))?;
    }
    table.insert(last.clone(), value);
    Ok(())
}

/// A configuration resolved against its model: the mesh ratio and stability
/// constants every rung of the ladder uses.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub model: Model,
    pub cfl: CflEstimate,
    pub lambda: f64,
    pub meshes: Vec<MeshSpec>,
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Self::from_toml_with_overrides(text, &[])
    }

    /// Parses `text`, applies `key=value` overrides (dotted keys reach into
    /// tables), and validates.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        for raw in overrides {
            let (path, value) = parse_override(raw)?;
            apply_override(&mut doc, &path, value)?;
        }
        let config: StudyConfig = if overrides.is_empty() {
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?
        } else {
            // Line numbers of the merged document mean nothing to the user.
            let merged = toml::to_string(&doc).map_err(|e| ConfigError::Parse(e.to_string()))?;
            toml::from_str(&merged).map_err(|e| ConfigError::Parse(format!("after --set overrides: {}", e.message())))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.ladder.is_empty() {
            return Err(invalid("ladder", "needs at least one mesh"));
        }
        if self.ladder.iter().any(|&n| n == 0) {
            return Err(invalid("ladder", "mesh sizes must be positive"));
        }
        if self.ladder.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("ladder", "mesh sizes must increase"));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(invalid("t_final", "must be positive"));
        }
        if !(self.lambda_fraction > 0.0 && self.lambda_fraction < 1.0) {
            return Err(invalid("lambda_fraction", "must lie in (0, 1)"));
        }
        if !(self.lambda_min > 0.0) {
            return Err(invalid("lambda_min", "must be positive"));
        }
        if let Some(cap) = self.lambda_cap {
            if !(cap > 0.0) {
                return Err(invalid("lambda_cap", "must be positive"));
            }
        }
        if self.sample_lattice < 2 {
            return Err(invalid("sample_lattice", "needs at least 2 points per axis"));
        }
        if self.walk.mode == WalkModeName::Sampled && self.walk.n_samples == 0 {
            return Err(invalid("walk.n_samples", "must be positive in sampled mode"));
        }
        if let InitialData::Riemann { u_left, u_right } = self.initial {
            if (u_left + u_right).abs() > 1e-12 {
                return Err(invalid("initial", "periodic step data need u_left = -u_right"));
            }
        }
        if let Some(r) = self.exclusion_radius {
            if !(r >= 0.0) {
                return Err(invalid("exclusion_radius", "must be non-negative"));
            }
        }
        if matches!(self.kind, StudyKind::Characteristic | StudyKind::Dispersion) {
            match self.point {
                None => return Err(invalid("point", "required by this study kind")),
                Some([x, t]) if !(t > 0.0 && t <= self.t_final) || !x.is_finite() => {
                    return Err(invalid("point", "needs 0 < t <= t_final"));
                }
                _ => {}
            }
        }
        builtin(&self.model.name, &self.model.params).map_err(|e| invalid("model", e.to_string()))?;
        Ok(())
    }

    /// Stable hash of the configuration (hex, 16 digits).
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("configuration serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn seed(&self) -> u64 {
        self.walk.seed
    }

    /// Output directory: the environment override, then `output_dir`, then
    /// the working directory.
    pub fn output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .or_else(|| self.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn exclusion_radius(&self) -> f64 {
        self.exclusion_radius.unwrap_or_else(|| 10.0 / (2.0 * self.ladder[0] as f64))
    }

    /// Builds the model, its stability constants, and the mesh ladder with
    /// `λ = lambda_fraction · cfl_limit` (capped by `lambda_cap`).
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let ham = builtin(&self.model.name, &self.model.params).map_err(|e| invalid("model", e.to_string()))?;
        let model = Model::new(ham, self.model.c, self.model.h);
        let cfl = cfl_estimate(
            model.ham.as_ref(),
            [self.model.c, self.model.c],
            self.initial.bound(),
            self.t_final,
            &SampleLattice::default(),
        )
        .map_err(|e| invalid("model", e.to_string()))?;
        let mut lambda = self.lambda_fraction * cfl.cfl_limit;
        if let Some(cap) = self.lambda_cap {
            lambda = lambda.min(cap);
        }
        let meshes = self
            .ladder
            .iter()
            .map(|&n| MeshSpec::with_ratio(n, lambda).map_err(|e| invalid("ladder", e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        for mesh in &meshes {
            if !(mesh.lambda >= self.lambda_min && mesh.lambda < cfl.cfl_limit) {
                return Err(invalid(
                    "lambda_min",
                    format!(
                        "mesh N = {} has ratio {} outside [{}, {})",
                        mesh.n, mesh.lambda, self.lambda_min, cfl.cfl_limit
                    ),
                ));
            }
        }
        Ok(Resolved {
            model,
            cfl,
            lambda,
            meshes,
        })
    }
}
