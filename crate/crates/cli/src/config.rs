//! Experiment configuration: one YAML document per run.

use std::fmt;

use chaos_core::mixture::{CoupledModelSpec, FieldLaw, MixtureSpec};
use chaos_core::parisi::DEFAULT_QUAD_N;
use chaos_core::sim::{FunctionSpec, Scheme};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Largest replica-symmetry-breaking depth accepted by `parisi.k`.
pub const MAX_K: usize = 6;
/// Largest Gauss–Hermite rule.
pub const MAX_QUAD_N: usize = 256;

/// Malformed or semantically invalid configuration.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParisiBlock {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

impl Default for ParisiBlock {
    fn default() -> Self {
        Self { k: default_k(), restarts: default_restarts() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointBlock {
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Overrides the smallest support point of system 1's minimizer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
}

impl Default for FixedPointBlock {
    fn default() -> Self {
        Self { tol: default_tol(), c1: None, c2: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BoundSchedule {
    /// Band bound with `v_j` (default `c_j`) and positive parts.
    #[default]
    Band,
    /// Manageable bound at level `iota` on a common `m`.
    Manageable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundBlock {
    /// Number of equally spaced `u` in `[−√(v1 v2), √(v1 v2)]`.
    #[serde(default = "default_u_grid")]
    pub u_grid: usize,
    #[serde(default)]
    pub schedule: BoundSchedule,
    #[serde(default = "default_iota")]
    pub iota: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v2: Option<f64>,
}

impl Default for BoundBlock {
    fn default() -> Self {
        Self { u_grid: default_u_grid(), schedule: BoundSchedule::default(), iota: default_iota(), v1: None, v2: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    #[serde(rename = "N", default = "default_sites")]
    pub n: usize,
    #[serde(rename = "M", default = "default_samples")]
    pub m: usize,
    #[serde(default)]
    pub scheme: Scheme,
}

impl Default for SimulateBlock {
    fn default() -> Self {
        Self { n: default_sites(), m: default_samples(), scheme: Scheme::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GgBlock {
    #[serde(default = "default_replicas")]
    pub n: usize,
    #[serde(default = "default_psi")]
    pub psi: String,
    #[serde(default = "default_f")]
    pub f: String,
}

impl Default for GgBlock {
    fn default() -> Self {
        Self { n: default_replicas(), psi: default_psi(), f: default_f() }
    }
}

/// The full experiment document with defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    /// Disorder correlations per half-degree; all ones when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<Vec<f64>>,
    #[serde(default)]
    pub field: FieldLaw,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_quad_n")]
    pub quad_n: usize,
    #[serde(default = "default_output")]
    pub output: String,
    #[serde(default)]
    pub parisi: ParisiBlock,
    #[serde(default)]
    pub fixed_point: FixedPointBlock,
    #[serde(default)]
    pub bound: BoundBlock,
    #[serde(default)]
    pub simulate: SimulateBlock,
    #[serde(default)]
    pub gg: GgBlock,
}

fn default_k() -> usize {
    1
}
fn default_restarts() -> usize {
    4
}
fn default_tol() -> f64 {
    1e-10
}
fn default_u_grid() -> usize {
    41
}
fn default_iota() -> usize {
    1
}
fn default_sites() -> usize {
    8
}
fn default_samples() -> usize {
    100
}
fn default_replicas() -> usize {
    2
}
fn default_psi() -> String {
    "x^2".into()
}
fn default_f() -> String {
    "R_11^2".into()
}
fn default_quad_n() -> usize {
    DEFAULT_QUAD_N
}
fn default_output() -> String {
    ".".into()
}

/// Parses and validates a YAML document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg: ExperimentConfig = serde_yaml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
    let len = cfg.beta1.len().max(cfg.beta2.len());
    cfg.t.get_or_insert_with(|| vec![1.0; len]);
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    /// Checks every range; the message names the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, msg: String| Err(ConfigError(format!("{key}: {msg}")));
        self.model().map_err(|e| ConfigError(e.to_string()))?;
        if !(1..=MAX_QUAD_N).contains(&self.quad_n) {
            return bad("quad_n", format!("must lie in 1..={MAX_QUAD_N}, got {}", self.quad_n));
        }
        if self.parisi.k > MAX_K {
            return bad("parisi.k", format!("must be at most {MAX_K}, got {}", self.parisi.k));
        }
        if self.parisi.restarts == 0 {
            return bad("parisi.restarts", "must be positive".into());
        }
        if !(self.fixed_point.tol > 0.0 && self.fixed_point.tol.is_finite()) {
            return bad("fixed_point.tol", format!("must be positive, got {}", self.fixed_point.tol));
        }
        for (key, c) in [("fixed_point.c1", self.fixed_point.c1), ("fixed_point.c2", self.fixed_point.c2)] {
            if let Some(c) = c {
                if !(c > 0.0 && c <= 1.0) {
                    return bad(key, format!("must lie in (0, 1], got {c}"));
                }
            }
        }
        if self.bound.u_grid < 2 {
            return bad("bound.u_grid", format!("needs at least 2 points, got {}", self.bound.u_grid));
        }
        if self.bound.iota == 0 || self.bound.iota > self.parisi.k + 1 {
            return bad("bound.iota", format!("must lie in 1..={}, got {}", self.parisi.k + 1, self.bound.iota));
        }
        for (key, v) in [("bound.v1", self.bound.v1), ("bound.v2", self.bound.v2)] {
            if let Some(v) = v {
                if !(v > 0.0 && v < 1.0) {
                    return bad(key, format!("must lie in (0, 1), got {v}"));
                }
            }
        }
        if self.simulate.n == 0 {
            return bad("simulate.N", "must be positive".into());
        }
        if self.simulate.m == 0 {
            return bad("simulate.M", "must be positive".into());
        }
        if !(1..=4).contains(&self.gg.n) {
            return bad("gg.n", format!("must lie in 1..=4, got {}", self.gg.n));
        }
        self.gg_functions()?;
        Ok(())
    }

    pub fn model(&self) -> chaos_core::Result<CoupledModelSpec> {
        let t = self.t.clone().unwrap_or_else(|| vec![1.0; self.beta1.len().max(self.beta2.len())]);
        CoupledModelSpec::new(MixtureSpec::new(self.beta1.clone())?, MixtureSpec::new(self.beta2.clone())?, t, self.field)
    }

    /// `(ψ, f)` of the `gg` block.
    pub fn gg_functions(&self) -> Result<(FunctionSpec, FunctionSpec), ConfigError> {
        let psi = FunctionSpec::parse(&self.gg.psi).map_err(|e| ConfigError(format!("gg.psi: {e}")))?;
        let f = FunctionSpec::parse(&self.gg.f).map_err(|e| ConfigError(format!("gg.f: {e}")))?;
        if psi.uses_overlaps() {
            return Err(ConfigError("gg.psi: must be a polynomial in x only".into()));
        }
        if f.uses_x() {
            return Err(ConfigError("gg.f: must not use x".into()));
        }
        if f.max_replica() > self.gg.n {
            return Err(ConfigError(format!("gg.f: uses replica {} but gg.n = {}", f.max_replica(), self.gg.n)));
        }
        Ok((psi, f))
    }

    /// Normalized YAML form.
    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of [`Self::to_yaml`] with `output` reset, hex encoded.
    pub fn hash(&self) -> String {
        let doc = Self { output: default_output(), ..self.clone() }.to_yaml();
        Sha256::digest(doc.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
