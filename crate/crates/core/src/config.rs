//! Layered run configuration: defaults, then a TOML or JSON file, then
//! `LOGAN_<SECTION>_<KEY>` environment variables, then `section.key=value`
//! overrides from the command line. Later layers win.

use crate::broadcast::BroadcastConfig;
use crate::causal::CausalParams;
use crate::ingest::IngestConfig;
use crate::labeler::{BackendKind, LabelerConfig};
use crate::reports::ReportsConfig;
use crate::templatizer::TemplatizerConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const SECTIONS: [&str; 7] =
    ["ingest", "templatizer", "labeler", "broadcast", "causal", "reports", "output"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("bad override `{0}`: expected section.key=value")]
    BadOverride(String),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub bundle: Option<PathBuf>,
    /// Per-record JSON lines with broadcast labels.
    pub enriched: Option<PathBuf>,
    /// 0 warn, 1 info, 2 debug, 3 trace.
    pub verbosity: u8,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub ingest: IngestConfig,
    pub templatizer: TemplatizerConfig,
    pub labeler: LabelerConfig,
    pub broadcast: BroadcastConfig,
    pub causal: CausalParams,
    pub reports: ReportsConfig,
    pub output: OutputConfig,
}

/// A merged configuration plus the unknown keys that were dropped on the way.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub warnings: Vec<String>,
}

impl RunConfig {
    /// Every section except `output`, which does not affect results.
    pub fn analysis_value(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v.as_object_mut().expect("config is an object").remove("output");
        v
    }

    /// SHA-256 over the canonical JSON of [`RunConfig::analysis_value`].
    pub fn digest(&self) -> String {
        let text = crate::reports::canonical::to_string(&self.analysis_value())
            .expect("config serializes");
        hex(&Sha256::digest(text.as_bytes()))
    }

    /// All violations at once, so a user can fix them in one pass.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(e) = self.templatizer.validate() {
            out.push(format!("templatizer: {e}"));
        }
        if let Err(e) = self.reports.validate() {
            out.push(e);
        }
        let c = &self.causal;
        if c.interval == 0 {
            out.push("causal.interval must be positive".into());
        }
        if c.max_lag == 0 {
            out.push("causal.max_lag must be at least 1".into());
        }
        if !(c.alpha > 0.0 && c.alpha < 1.0) {
            out.push(format!("causal.alpha {} outside (0, 1)", c.alpha));
        }
        let l = &self.labeler;
        if l.backend == BackendKind::Remote && l.endpoint.is_none() {
            out.push("labeler.endpoint is required for the remote backend".into());
        }
        if l.pool == 0 {
            out.push("labeler.pool must be positive".into());
        }
        if l.batch_limit == 0 {
            out.push("labeler.batch_limit must be positive".into());
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    /// Merges the layers and validates the result.
    pub fn load<I>(
        file: Option<&Path>,
        env: I,
        overrides: &[String],
    ) -> Result<Loaded, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let defaults = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
        let mut merged = defaults.clone();
        let mut warnings = Vec::new();

        if let Some(path) = file {
            let layer = read_file(path)?;
            merge_known(&mut merged, &defaults, &layer, "", &mut warnings);
        }

        let mut env: Vec<(String, String)> = env.into_iter().collect();
        env.sort();
        for (name, raw) in env {
            let Some(rest) = name.strip_prefix("LOGAN_") else { continue };
            let Some((section, key)) = rest.split_once('_') else { continue };
            let section = section.to_ascii_lowercase();
            if !SECTIONS.contains(&section.as_str()) {
                // LOGAN_DATA_DIR and friends belong to the service.
                continue;
            }
            let key = key.to_ascii_lowercase();
            set_scalar(&mut merged, &defaults, &section, &key, &raw, &name, &mut warnings)?;
        }

        for o in overrides {
            let (path, raw) = o.split_once('=').ok_or_else(|| ConfigError::BadOverride(o.clone()))?;
            let (section, key) =
                path.split_once('.').ok_or_else(|| ConfigError::BadOverride(o.clone()))?;
            let key = key.replace('-', "_");
            if !SECTIONS.contains(&section) {
                warnings.push(format!("unknown config section `{section}` in `{o}` ignored"));
                continue;
            }
            set_scalar(&mut merged, &defaults, section, &key, raw, o, &mut warnings)?;
        }

        let config = from_value(merged)?;
        config.validate()?;
        Ok(Loaded { config, warnings })
    }
}

fn from_value(merged: Value) -> Result<RunConfig, ConfigError> {
    // Section by section so type errors name their section.
    let mut errors = Vec::new();
    let mut cfg = RunConfig::default();
    let obj = merged.as_object().expect("merged config is an object");
    macro_rules! section {
        ($name:literal, $field:ident) => {
            match serde_json::from_value(obj[$name].clone()) {
                Ok(v) => cfg.$field = v,
                Err(e) => errors.push(format!("{}: {e}", $name)),
            }
        };
    }
    section!("ingest", ingest);
    section!("templatizer", templatizer);
    section!("labeler", labeler);
    section!("broadcast", broadcast);
    section!("causal", causal);
    section!("reports", reports);
    section!("output", output);
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(errors))
    }
}

fn read_file(path: &Path) -> Result<Value, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
    let parse_err = |message: String| ConfigError::Parse { path: path.to_owned(), message };
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let v: Value = if is_json {
        serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?
    } else {
        let t: toml::Value = toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?;
        serde_json::to_value(t).map_err(|e| parse_err(e.to_string()))?
    };
    if !v.is_object() {
        return Err(parse_err("top level must be a table".into()));
    }
    Ok(v)
}

/// Copies keys of `layer` into `target`, recursing into objects, but only
/// where `shape` (the defaults) has the same key. Anything else is reported.
fn merge_known(target: &mut Value, shape: &Value, layer: &Value, prefix: &str, warnings: &mut Vec<String>) {
    let (Some(t), Some(s), Some(l)) = (target.as_object_mut(), shape.as_object(), layer.as_object())
    else {
        return;
    };
    for (k, v) in l {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match s.get(k) {
            None => warnings.push(format!("unknown config key `{path}` ignored")),
            Some(sv) if sv.is_object() && v.is_object() => {
                merge_known(t.get_mut(k).expect("shape and target agree"), sv, v, &path, warnings)
            }
            Some(_) => {
                t.insert(k.clone(), v.clone());
            }
        }
    }
}

fn set_scalar(
    merged: &mut Value,
    defaults: &Value,
    section: &str,
    key: &str,
    raw: &str,
    origin: &str,
    warnings: &mut Vec<String>,
) -> Result<(), ConfigError> {
    let Some(shape) = defaults[section].get(key) else {
        warnings.push(format!("unknown config key `{section}.{key}` from `{origin}` ignored"));
        return Ok(());
    };
    let v = parse_scalar(shape, raw)
        .map_err(|m| ConfigError::Invalid(vec![format!("{section}.{key}: {m}")]))?;
    let obj: &mut Map<String, Value> =
        merged[section].as_object_mut().expect("section is an object");
    obj.insert(key.to_owned(), v);
    Ok(())
}

/// Interprets a command-line or environment string using the type of the
/// default value as a hint. Unsigned fields accept `30s`, `5m`, `1h`.
fn parse_scalar(shape: &Value, raw: &str) -> Result<Value, String> {
    let raw = raw.trim();
    match shape {
        Value::Bool(_) => match raw.to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" | "on" => Ok(Value::Bool(true)),
            "false" | "0" | "no" | "off" => Ok(Value::Bool(false)),
            _ => Err(format!("expected a boolean, got `{raw}`")),
        },
        Value::Number(n) if n.is_u64() => parse_seconds(raw)
            .map(Value::from)
            .or_else(|| raw.parse::<i64>().ok().map(Value::from))
            .ok_or_else(|| format!("expected a non-negative integer, got `{raw}`")),
        Value::Number(_) => raw
            .parse::<f64>()
            .ok()
            .and_then(|f| serde_json::Number::from_f64(f).map(Value::Number))
            .ok_or_else(|| format!("expected a number, got `{raw}`")),
        Value::String(_) => Ok(Value::String(raw.to_owned())),
        Value::Array(_) => match serde_json::from_str::<Value>(raw) {
            Ok(v @ Value::Array(_)) => Ok(v),
            _ if raw.is_empty() => Ok(Value::Array(Vec::new())),
            _ => Ok(Value::Array(raw.split(',').map(|s| Value::String(s.trim().to_owned())).collect())),
        },
        Value::Null | Value::Object(_) => {
            Ok(serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned())))
        }
    }
}

fn parse_seconds(raw: &str) -> Option<u64> {
    let (num, mult) = match raw.char_indices().last()? {
        (i, 's') => (&raw[..i], 1),
        (i, 'm') => (&raw[..i], 60),
        (i, 'h') => (&raw[..i], 3600),
        _ => (raw, 1),
    };
    num.parse::<u64>().ok().map(|n| n * mult)
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
