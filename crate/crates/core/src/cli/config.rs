//! Experiment configuration: TOML with nested tables, dotted-path overrides and a content hash.
//!
//! The grammar is documented in `docs/config.md`.

use crate::schedules::StepSchedule;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;
use toml::{Table, Value};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("bad override `{0}`: expected key=value")]
    BadOverride(String),
}

impl ConfigError {
    pub fn invalid(key: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid { key: key.to_string(), reason: reason.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Stability,
    Lsa,
    Td,
    Counterexample,
    Constants,
    DriftCheck,
    ScheduleCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::Stability,
        ExperimentKind::Lsa,
        ExperimentKind::Td,
        ExperimentKind::Counterexample,
        ExperimentKind::Constants,
        ExperimentKind::DriftCheck,
        ExperimentKind::ScheduleCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Stability => "stability",
            ExperimentKind::Lsa => "lsa",
            ExperimentKind::Td => "td",
            ExperimentKind::Counterexample => "counterexample",
            ExperimentKind::Constants => "constants",
            ExperimentKind::DriftCheck => "drift-check",
            ExperimentKind::ScheduleCheck => "schedule-check",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    #[serde(default = "default_replicas")]
    pub replicas: u64,
    #[serde(default = "default_p")]
    pub p: Vec<f64>,
    /// Output directory.
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub grid: Option<GridSpec>,
    pub schedule: Option<StepSchedule>,
    pub model: Option<ModelSpec>,
    pub certificate: Option<CertificateSpec>,
    pub constants: Option<ConstantsSpec>,
    pub init: Option<InitSpec>,
    pub stability: Option<StabilitySpec>,
    pub td: Option<TdSpec>,
    pub counterexample: Option<CounterexampleSpec>,
    pub drift: Option<DriftSpec>,
    pub checks: Option<ChecksSpec>,
}

fn default_replicas() -> u64 {
    1000
}

fn default_p() -> Vec<f64> {
    vec![2.0]
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Step counts at which moments are reported. Exactly one form must be given.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub points: Option<Vec<u64>>,
    pub start: Option<u64>,
    pub stop: Option<u64>,
    pub step: Option<u64>,
    /// Powers of two `2^lo, …, 2^hi`.
    pub log2: Option<[u32; 2]>,
}

impl GridSpec {
    pub fn resolve(&self) -> Result<Vec<u64>, ConfigError> {
        let range = (self.start, self.stop, self.step);
        let forms = [self.points.is_some(), range != (None, None, None), self.log2.is_some()];
        if forms.iter().filter(|f| **f).count() != 1 {
            return Err(ConfigError::invalid("grid", "give exactly one of points, start/stop/step or log2"));
        }
        let pts: Vec<u64> = if let Some(p) = &self.points {
            p.clone()
        } else if let Some([lo, hi]) = self.log2 {
            if lo > hi || hi > 62 {
                return Err(ConfigError::invalid("grid.log2", "need lo <= hi <= 62"));
            }
            (lo..=hi).map(|e| 1u64 << e).collect()
        } else {
            let start = range.0.ok_or_else(|| ConfigError::MissingKey("grid.start".into()))?;
            let stop = range.1.ok_or_else(|| ConfigError::MissingKey("grid.stop".into()))?;
            let step = range.2.unwrap_or(1);
            if step == 0 || stop < start {
                return Err(ConfigError::invalid("grid", "need step > 0 and stop >= start"));
            }
            (start..=stop).step_by(step as usize).collect()
        };
        if pts.is_empty() || pts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConfigError::invalid("grid", "points must be non-empty and strictly increasing"));
        }
        Ok(pts)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Finite chain with per-state matrices `Ā(i)` (d×d) and vectors `b̄(i)`.
    Finite {
        kernel: Option<Vec<Vec<f64>>>,
        /// CSV file, resolved relative to the config file.
        kernel_file: Option<PathBuf>,
        #[serde(default)]
        z0: usize,
        abar: Option<Vec<Vec<Vec<f64>>>>,
        bbar: Option<Vec<Vec<f64>>>,
    },
    /// Scalar autoregression `x' = ρx + σξ`.
    GaussianAr {
        rho: f64,
        sigma: f64,
        #[serde(default)]
        x0: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CertificateSpec {
    /// `W ≡ 1` on a finite chain.
    FiniteUniform {
        c: f64,
        #[serde(default = "one")]
        delta: f64,
        #[serde(default = "default_horizon")]
        horizon: usize,
    },
    /// Prescribed levels `W(i)` on a finite chain.
    FiniteLevels {
        levels: Vec<f64>,
        c: f64,
        #[serde(default = "one")]
        delta: f64,
        r0: f64,
        #[serde(default = "default_horizon")]
        horizon: usize,
    },
    /// `W(x) = 1 + |x|` on the scalar autoregression.
    GaussianArAbs { c: f64, r0: Option<f64> },
}

fn one() -> f64 {
    1.0
}

fn default_horizon() -> usize {
    200
}

/// Primitives of the constants chain. Omitted `c_a`, `c_bk` and `c_alpha` are computed from the model.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSpec {
    pub beta: f64,
    pub c_a: Option<f64>,
    #[serde(default = "half")]
    pub epsilon: f64,
    #[serde(default)]
    pub m: f64,
    /// Moment order parameter `K` of the LSA bounds; the LSA constants are skipped without it.
    pub k: Option<f64>,
    pub c_bk: Option<f64>,
    pub c_alpha: Option<f64>,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    /// `θ₀`; zero when omitted.
    pub theta0: Option<Vec<f64>>,
    /// Standard deviation of a Gaussian perturbation of `θ₀`, drawn per replica.
    #[serde(default)]
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvelopeMode {
    /// Compare only when the first step is below `α_{∞,p}`.
    #[default]
    Checked,
    /// Compare regardless of the step-size cap.
    Uncapped,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbscissaSpec {
    #[default]
    SumAlpha,
    LogN,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySpec {
    #[serde(default)]
    pub envelope: EnvelopeMode,
    /// Step window `[lo, hi]` of the log-linear fit.
    pub fit_window: Option<[u64; 2]>,
    #[serde(default)]
    pub abscissa: AbscissaSpec,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TdSpec {
    pub gamma: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "one_usize")]
    pub tau: usize,
    pub reward: Option<Vec<f64>>,
    pub reward_file: Option<PathBuf>,
    /// S×d feature matrix; one-hot features when omitted.
    pub features: Option<Vec<Vec<f64>>>,
    pub features_file: Option<PathBuf>,
    /// Step window `[lo, hi]` of the log-log fit of `θ̃`.
    pub fit_window: Option<[u64; 2]>,
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleSpec {
    /// Exponent `s` of `P(Y = k) ∝ k⁻ˢ`.
    #[serde(default = "three")]
    pub zeta_s: f64,
    #[serde(default = "default_k_max")]
    pub k_max: u64,
    pub epsilon: f64,
    pub alpha: f64,
    #[serde(default = "one")]
    pub theta0: f64,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
}

fn three() -> f64 {
    3.0
}

fn default_k_max() -> u64 {
    10_000
}

fn default_n_max() -> usize {
    200
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftMethodSpec {
    #[default]
    Auto,
    Exact,
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSpec {
    #[serde(default)]
    pub method: DriftMethodSpec,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Test points of the autoregression; ignored for finite chains, which test every state.
    pub states: Option<Vec<f64>>,
    /// Evenly spaced test points `[lo, hi, count]` of the autoregression.
    pub range: Option<[f64; 3]>,
    /// Window lengths whose extended-chain certificates are also checked.
    #[serde(default)]
    pub windows: Vec<usize>,
    /// Sampled window states per length.
    #[serde(default = "default_window_samples")]
    pub window_samples: usize,
}

fn default_samples() -> usize {
    100_000
}

fn default_window_samples() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksSpec {
    /// Margin `a` used by the schedule conditions.
    pub a: f64,
    #[serde(default = "default_check_horizon")]
    pub horizon: u64,
    #[serde(default)]
    pub require_a5: bool,
    #[serde(default)]
    pub require_a6: bool,
}

fn default_check_horizon() -> u64 {
    10_000
}

/// Command-line overrides layered over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub experiment: Option<ExperimentKind>,
    pub seed: Option<u64>,
    pub replicas: Option<u64>,
    pub out: Option<PathBuf>,
    /// `dotted.key=value` assignments; values use TOML syntax and fall back to bare strings.
    pub set: Vec<String>,
}

/// A validated configuration together with its canonical text and hash.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    /// Directory of the config file, used to resolve relative data paths.
    pub base_dir: PathBuf,
    /// SHA-256 of the canonical TOML of every key except `out`.
    pub hash: String,
}

impl LoadedConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

fn parse_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Sets `dotted.path` in `root`, creating intermediate tables.
pub fn set_path(root: &mut Table, path: &str, value: Value) -> Result<(), ConfigError> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::BadOverride(path.to_string()));
    }
    let mut cur = root;
    for (i, part) in parts[..parts.len() - 1].iter().enumerate() {
        let entry = cur.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => return Err(ConfigError::invalid(&parts[..=i].join("."), "is not a table")),
        };
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

pub fn apply_overrides(table: &mut Table, ov: &Overrides) -> Result<(), ConfigError> {
    for s in &ov.set {
        let (k, v) = s.split_once('=').ok_or_else(|| ConfigError::BadOverride(s.clone()))?;
        set_path(table, k.trim(), parse_value(v.trim()))?;
    }
    if let Some(e) = ov.experiment {
        table.insert("experiment".into(), Value::String(e.name().into()));
    }
    if let Some(seed) = ov.seed {
        let v = i64::try_from(seed).map_err(|_| ConfigError::invalid("seed", "must fit in a signed 64-bit integer"))?;
        table.insert("seed".into(), Value::Integer(v));
    }
    if let Some(r) = ov.replicas {
        table.insert("replicas".into(), Value::Integer(r as i64));
    }
    if let Some(o) = &ov.out {
        table.insert("out".into(), Value::String(o.display().to_string()));
    }
    Ok(())
}

fn hash_table(table: &Table) -> String {
    let mut t = table.clone();
    t.remove("out");
    let canonical = toml::to_string(&t).expect("tables serialise");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

fn map_de_error(e: toml::de::Error) -> ConfigError {
    let msg = e.message().to_string();
    if let Some(rest) = msg.strip_prefix("missing field `") {
        if let Some(key) = rest.split('`').next() {
            return ConfigError::MissingKey(key.to_string());
        }
    }
    ConfigError::Parse(msg)
}

/// Parses TOML text, applies overrides and validates the schema.
pub fn load_str(text: &str, base_dir: &Path, ov: &Overrides) -> Result<LoadedConfig, ConfigError> {
    let mut table: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.message().to_string()))?;
    apply_overrides(&mut table, ov)?;
    let hash = hash_table(&table);
    let config: ExperimentConfig = Value::Table(table).try_into().map_err(map_de_error)?;
    validate(&config)?;
    Ok(LoadedConfig { config, base_dir: base_dir.to_path_buf(), hash })
}

pub fn load(path: &Path, ov: &Overrides) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    load_str(&text, &base, ov)
}

fn require<'a, T>(v: &'a Option<T>, key: &str) -> Result<&'a T, ConfigError> {
    v.as_ref().ok_or_else(|| ConfigError::MissingKey(key.to_string()))
}

/// Checks that every section the chosen experiment reads is present and well-formed.
pub fn validate(c: &ExperimentConfig) -> Result<(), ConfigError> {
    if c.p.is_empty() || c.p.iter().any(|p| !(*p >= 1.0 && p.is_finite())) {
        return Err(ConfigError::invalid("p", "moment orders must be finite and at least 1"));
    }
    if let Some(s) = &c.schedule {
        s.validate().map_err(|e| ConfigError::invalid("schedule", e.to_string()))?;
    }
    if let Some(g) = &c.grid {
        g.resolve()?;
    }
    use ExperimentKind::*;
    match c.experiment {
        Stability | Lsa => {
            require(&c.model, "model")?;
            require(&c.schedule, "schedule")?;
            require(&c.grid, "grid")?;
            match require(&c.model, "model")? {
                ModelSpec::Finite { abar, bbar, .. } => {
                    require(abar, "model.abar")?;
                    if c.experiment == Lsa {
                        require(bbar, "model.bbar")?;
                    }
                }
                _ => return Err(ConfigError::invalid("model.kind", "stability and lsa need a finite model")),
            }
        }
        Td => {
            require(&c.model, "model")?;
            require(&c.schedule, "schedule")?;
            require(&c.grid, "grid")?;
            let td = require(&c.td, "td")?;
            if td.reward.is_none() && td.reward_file.is_none() {
                return Err(ConfigError::MissingKey("td.reward".into()));
            }
        }
        Counterexample => {
            require(&c.counterexample, "counterexample")?;
        }
        Constants => {
            require(&c.model, "model")?;
            require(&c.certificate, "certificate")?;
            require(&c.constants, "constants")?;
        }
        DriftCheck => {
            require(&c.model, "model")?;
            require(&c.certificate, "certificate")?;
        }
        ScheduleCheck => {
            require(&c.schedule, "schedule")?;
            require(&c.checks, "checks")?;
        }
    }
    Ok(())
}
