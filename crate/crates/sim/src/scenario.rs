//! Scenario files and command-line overrides.

use std::path::{Path, PathBuf};

use physobs::example::{ExampleConfig, ExampleError};
use serde::{Deserialize, Serialize};

use crate::model::MODELS;

/// Invalid or unreadable configuration (exit code 2).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub Vec<String>);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration:")?;
        for e in &self.0 {
            write!(f, "\n  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

impl From<ExampleError> for ConfigError {
    fn from(e: ExampleError) -> Self {
        match e {
            ExampleError::Config(v) => ConfigError(v),
            other => ConfigError(vec![other.to_string()]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Observers {
    Proposed,
    Baseline,
    Both,
}

impl Observers {
    pub fn proposed(self) -> bool {
        matches!(self, Observers::Proposed | Observers::Both)
    }

    pub fn baseline(self) -> bool {
        matches!(self, Observers::Baseline | Observers::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub model: String,
    pub observers: Observers,
    pub output_dir: PathBuf,
    /// Store every `decimation`-th step in the trace.
    pub decimation: usize,
    pub params: ExampleConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            model: physobs::example::MODEL_NAME.to_string(),
            observers: Observers::Both,
            output_dir: PathBuf::from("runs/paper-example"),
            decimation: 100,
            params: ExampleConfig::default(),
        }
    }
}

const TOP_LEVEL: [&str; 4] = ["model", "observers", "output_dir", "decimation"];

impl Scenario {
    /// Reads `path` (or the defaults when `None`), applies `key=value`
    /// overrides and validates the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ConfigError(vec![format!("{}: {e}", p.display())]))?;
                text.parse::<toml::Table>()
                    .map_err(|e| ConfigError(vec![format!("{}: {e}", p.display())]))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let scn: Scenario = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(vec![e.message().to_string()]))?;
        scn.validate()?;
        Ok(scn)
    }

    /// A copy of `self` with `key=value` overrides applied, validated.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table = toml::Table::try_from(self).map_err(|e| ConfigError(vec![e.to_string()]))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let scn: Scenario = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(vec![e.message().to_string()]))?;
        scn.validate()?;
        Ok(scn)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut bad = Vec::new();
        if !MODELS.contains(&self.model.as_str()) {
            bad.push(format!("model: unknown model {:?} (known: {})", self.model, MODELS.join(", ")));
        }
        if self.decimation == 0 {
            bad.push("decimation: must be at least 1".into());
        }
        if let Err(e) = self.params.validate() {
            bad.extend(ConfigError::from(e).0);
        }
        let p = &self.params;
        if p.dt > 0.0 && p.t_end > 0.0 {
            let steps = p.t_end / p.dt;
            if (steps - steps.round()).abs() > 1e-6 * steps.max(1.0) {
                bad.push(format!("dt: {} does not divide t_end = {}", p.dt, p.t_end));
            }
            let k_eps = p.t_eps / p.dt;
            if (k_eps - k_eps.round()).abs() > 1e-6 * k_eps.max(1.0) {
                bad.push(format!("dt: {} does not divide t_eps = {}", p.dt, p.t_eps));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(bad))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn steps(&self) -> usize {
        (self.params.t_end / self.params.dt).round() as usize
    }

    pub fn trace_spacing(&self) -> f64 {
        self.params.dt * self.decimation as f64
    }
}

/// Applies `key=value`. Keys are top-level scenario keys, `params.<name>`
/// or a bare parameter name. Values use TOML syntax; anything that does not
/// parse is taken as a string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError(vec![format!("override {spec:?} is not key=value")]))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = parse_value(raw);
    let path: Vec<&str> = if let Some(rest) = key.strip_prefix("params.") {
        vec!["params", rest]
    } else if TOP_LEVEL.contains(&key) {
        vec![key]
    } else {
        vec!["params", key]
    };
    let mut cur = table;
    for seg in &path[..path.len() - 1] {
        let entry = cur
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError(vec![format!("{seg} is not a table")]))?;
    }
    cur.insert(path[path.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => {
            let mut v = t.remove("v").expect("just inserted");
            // integers where floats are expected are accepted by serde, but
            // lists of mixed ints/floats are not; promote them
            if let toml::Value::Array(items) = &mut v {
                if items.iter().any(|i| i.is_float()) {
                    for i in items.iter_mut() {
                        if let Some(n) = i.as_integer() {
                            *i = toml::Value::Float(n as f64);
                        }
                    }
                }
            }
            v
        }
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
