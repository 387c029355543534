use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fimsketch_core::{CbsParams, Criterion, EksParams, InitKind, LandscapeWindow, Mode, PotentialCoeffs, Preset};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Problems with a configuration file or command-line overrides.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config `{path}`: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("override `{0}` is missing a value")]
    MissingValue(String),
    #[error("expected `--key value`, got `{0}`")]
    BadOverride(String),
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        reason: reason.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    FixedSource,
    SourceDesign,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::FixedSource => Mode::FixedSource,
            ModeArg::SourceDesign => Mode::SourceDesign,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    Eks,
    Cbs,
    Resample,
}

impl fmt::Display for Sampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sampler::Eks => "eks",
            Sampler::Cbs => "cbs",
            Sampler::Resample => "resample",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitArg {
    Normal,
    Uniform,
}

impl From<InitArg> for InitKind {
    fn from(i: InitArg) -> Self {
        match i {
            InitArg::Normal => InitKind::Normal,
            InitArg::Uniform => InitKind::Uniform,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionArg {
    #[serde(alias = "c_inv")]
    InverseConditionNumber,
    #[serde(alias = "lambda_min")]
    MinEigenvalue,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::InverseConditionNumber => Criterion::InverseConditionNumber,
            CriterionArg::MinEigenvalue => Criterion::MinEigenvalue,
        }
    }
}

/// One experiment run. Every field has a default; unknown keys are
/// rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Preset name: `systemA`..`systemD` or `landscape2d`.
    pub scenario: String,
    /// Cells per direction.
    pub nx: usize,
    /// Replaces the preset's coefficient values (same basis).
    pub coefficients: Option<Vec<f64>>,
    /// Multiplies the coefficient values.
    pub scale: f64,
    /// Constant source in fixed-source mode.
    pub gamma: f64,
    pub mode: ModeArg,
    pub sampler: Sampler,
    pub init: InitArg,
    /// Number of sensors; defaults to 18, or 8 for `landscape2d`.
    pub c: Option<usize>,
    #[serde(alias = "iterations")]
    pub iters: usize,
    pub criterion: CriterionArg,
    pub seed: u64,
    pub output: PathBuf,
    pub dt0: f64,
    pub eps: f64,
    pub beta: f64,
    pub dt: f64,
    pub init_sigma: f64,
    pub landscape_p1: [f64; 2],
    pub landscape_p2: [f64; 2],
    pub landscape_resolution: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let eks = EksParams::<f64>::default();
        let cbs = CbsParams::<f64>::default();
        let window = LandscapeWindow::<f64>::default();
        Self {
            scenario: "systemC".into(),
            nx: 30,
            coefficients: None,
            scale: 1.0,
            gamma: 1e4,
            mode: ModeArg::FixedSource,
            sampler: Sampler::Eks,
            init: InitArg::Normal,
            c: None,
            iters: 25,
            criterion: CriterionArg::InverseConditionNumber,
            seed: 42,
            output: PathBuf::from("out"),
            dt0: eks.dt0,
            eps: eks.eps,
            beta: cbs.beta,
            dt: cbs.dt,
            init_sigma: 0.3,
            landscape_p1: [window.p1.0, window.p1.1],
            landscape_p2: [window.p2.0, window.p2.1],
            landscape_resolution: window.resolution,
        }
    }
}

impl ScenarioConfig {
    /// Reads a flat TOML file, or the `[config]` table of a run manifest,
    /// then applies `--key value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                let mut t: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
                match t.remove("config") {
                    Some(toml::Value::Table(inner)) => inner,
                    Some(_) => return Err(ConfigError::Parse("`config` must be a table".into())),
                    None => t,
                }
            }
            None => toml::Table::new(),
        };
        apply_overrides(&mut table, overrides)?;
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset(&self) -> Result<Preset, ConfigError> {
        Preset::from_str(&self.scenario).map_err(|_| {
            let names: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
            invalid("scenario", format!("unknown scenario `{}` (expected one of {})", self.scenario, names.join(", ")))
        })
    }

    pub fn is_landscape(&self) -> bool {
        matches!(self.preset(), Ok(Preset::Landscape2d))
    }

    pub fn coeffs(&self) -> Result<PotentialCoeffs<f64>, ConfigError> {
        let base = self.preset()?.coeffs::<f64>();
        let base = match &self.coefficients {
            Some(v) => base
                .with_values(v.clone())
                .map_err(|e| invalid("coefficients", e.to_string()))?,
            None => base,
        };
        Ok(base.scaled(self.scale))
    }

    pub fn sensors(&self) -> usize {
        self.c.unwrap_or(if self.is_landscape() { 8 } else { 18 })
    }

    pub fn eks_params(&self) -> EksParams<f64> {
        EksParams {
            dt0: self.dt0,
            eps: self.eps,
        }
    }

    pub fn cbs_params(&self) -> CbsParams<f64> {
        CbsParams {
            beta: self.beta,
            dt: self.dt,
        }
    }

    pub fn landscape_window(&self) -> LandscapeWindow<f64> {
        LandscapeWindow {
            p1: (self.landscape_p1[0], self.landscape_p1[1]),
            p2: (self.landscape_p2[0], self.landscape_p2[1]),
            resolution: self.landscape_resolution,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.preset()?;
        if !(4..=512).contains(&self.nx) {
            return Err(invalid("nx", "must lie in 4..=512"));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(invalid("scale", "must be positive and finite"));
        }
        if !self.gamma.is_finite() {
            return Err(invalid("gamma", "must be finite"));
        }
        if let Some(v) = &self.coefficients {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(invalid("coefficients", "must be finite"));
            }
        }
        self.coeffs()?;
        if self.sensors() < 2 {
            return Err(invalid("c", "need at least 2 sensors"));
        }
        if self.iters > 1_000_000 {
            return Err(invalid("iters", "at most 1000000"));
        }
        if !(self.dt0.is_finite() && self.dt0 > 0.0) {
            return Err(invalid("dt0", "must be positive"));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(invalid("eps", "must be positive"));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(invalid("beta", "must be non-negative"));
        }
        if !(self.dt.is_finite() && self.dt >= 0.0) {
            return Err(invalid("dt", "must be non-negative"));
        }
        if !(self.init_sigma.is_finite() && self.init_sigma > 0.0) {
            return Err(invalid("init_sigma", "must be positive"));
        }
        if self.is_landscape() {
            if self.mode != ModeArg::FixedSource {
                return Err(invalid("mode", "landscape2d runs in fixed-source mode only"));
            }
            for (key, r) in [("landscape_p1", self.landscape_p1), ("landscape_p2", self.landscape_p2)] {
                if !(r[0].is_finite() && r[1].is_finite() && r[0] < r[1]) {
                    return Err(invalid(key, "need finite lo < hi"));
                }
            }
            if self.landscape_resolution < 2 {
                return Err(invalid("landscape_resolution", "need at least 2"));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Applies `--key value` pairs. Keys may use hyphens; values are parsed as
/// TOML when possible (bare comma lists become arrays) and as strings
/// otherwise.
pub fn apply_overrides(table: &mut toml::Table, args: &[String]) -> Result<(), ConfigError> {
    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let key = flag
            .strip_prefix("--")
            .filter(|k| !k.is_empty())
            .ok_or_else(|| ConfigError::BadOverride(flag.clone()))?;
        let (key, raw) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => (
                key.to_string(),
                it.next().ok_or_else(|| ConfigError::MissingValue(flag.clone()))?.clone(),
            ),
        };
        table.insert(key.replace('-', "_"), parse_value(&raw));
    }
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let text = if raw.contains(',') && !raw.trim_start().starts_with('[') {
        format!("[{raw}]")
    } else {
        raw.to_string()
    };
    format!("v = {text}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
