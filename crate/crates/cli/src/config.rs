//! Config resolution: defaults, then the TOML file, then command-line flags,
//! with the later source winning. Every consumed key is recorded so the run
//! can emit a resolved-config copy; leftover keys are rejected by name.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use toml::Value;

/// A resolved scalar or list parameter, kept in resolution order for the
/// resolved-config copy and the JSON summary.
#[derive(Debug, Clone)]
pub enum Resolved {
    U64(u64),
    F64(f64),
    ListU64(Vec<u64>),
    ListF64(Vec<f64>),
}

pub struct KeyBag {
    experiment: &'static str,
    table: toml::map::Map<String, Value>,
    resolved: Vec<(String, Resolved)>,
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        other => bail!("config key `{key}` must be a number, got {other}"),
    }
}

fn as_u64(key: &str, v: &Value) -> Result<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        other => bail!("config key `{key}` must be a non-negative integer, got {other}"),
    }
}

impl KeyBag {
    /// Loads the config file (if any) and checks its optional `experiment`
    /// key against the subcommand being run.
    pub fn load(experiment: &'static str, config: Option<&Path>) -> Result<Self> {
        let mut table = toml::map::Map::new();
        if let Some(path) = config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            let value: Value = text
                .parse()
                .with_context(|| format!("parsing config {}", path.display()))?;
            table = match value {
                Value::Table(t) => t,
                _ => bail!("config {} is not a key-value table", path.display()),
            };
        }
        if let Some(named) = table.remove("experiment") {
            let named = named
                .as_str()
                .ok_or_else(|| anyhow!("config key `experiment` must be a string"))?
                .to_string();
            if named != experiment {
                bail!("config is for experiment `{named}`, but `{experiment}` was requested");
            }
        }
        Ok(KeyBag {
            experiment,
            table,
            resolved: Vec::new(),
        })
    }

    pub fn f64(&mut self, key: &str, flag: Option<f64>, default: f64) -> Result<f64> {
        let from_config = self.table.remove(key).map(|v| as_f64(key, &v)).transpose()?;
        let v = flag.or(from_config).unwrap_or(default);
        self.resolved.push((key.to_string(), Resolved::F64(v)));
        Ok(v)
    }

    pub fn u64(&mut self, key: &str, flag: Option<u64>, default: u64) -> Result<u64> {
        let from_config = self.table.remove(key).map(|v| as_u64(key, &v)).transpose()?;
        let v = flag.or(from_config).unwrap_or(default);
        self.resolved.push((key.to_string(), Resolved::U64(v)));
        Ok(v)
    }

    pub fn list_u64(&mut self, key: &str, flag: Option<&str>, default: &[u64]) -> Result<Vec<u64>> {
        let v = if let Some(text) = flag {
            parse_list(text, |s| s.parse::<u64>().map_err(Into::into))
                .with_context(|| format!("flag --{key}"))?
        } else if let Some(value) = self.table.remove(key) {
            match value {
                Value::Array(items) => items
                    .iter()
                    .map(|i| as_u64(key, i))
                    .collect::<Result<Vec<_>>>()?,
                other => bail!("config key `{key}` must be an array, got {other}"),
            }
        } else {
            default.to_vec()
        };
        self.resolved.push((key.to_string(), Resolved::ListU64(v.clone())));
        Ok(v)
    }

    pub fn list_f64(&mut self, key: &str, flag: Option<&str>, default: &[f64]) -> Result<Vec<f64>> {
        let v = if let Some(text) = flag {
            parse_list(text, |s| s.parse::<f64>().map_err(Into::into))
                .with_context(|| format!("flag --{key}"))?
        } else if let Some(value) = self.table.remove(key) {
            match value {
                Value::Array(items) => items
                    .iter()
                    .map(|i| as_f64(key, i))
                    .collect::<Result<Vec<_>>>()?,
                other => bail!("config key `{key}` must be an array, got {other}"),
            }
        } else {
            default.to_vec()
        };
        self.resolved.push((key.to_string(), Resolved::ListF64(v.clone())));
        Ok(v)
    }

    /// Consumes an optional string-valued key used only for bookkeeping
    /// (for example `out`); not recorded in the resolved copy.
    pub fn string_silent(&mut self, key: &str, flag: Option<String>) -> Result<Option<String>> {
        let from_config = match self.table.remove(key) {
            Some(Value::String(s)) => Some(s),
            Some(other) => bail!("config key `{key}` must be a string, got {other}"),
            None => None,
        };
        Ok(flag.or(from_config))
    }

    /// Like `u64` but not recorded; for keys that describe the run
    /// environment rather than the experiment (for example `threads`).
    pub fn u64_silent(&mut self, key: &str, flag: Option<u64>) -> Result<Option<u64>> {
        let from_config = self.table.remove(key).map(|v| as_u64(key, &v)).transpose()?;
        Ok(flag.or(from_config))
    }

    /// Rejects any key that no extractor consumed.
    pub fn finish(self) -> Result<Vec<(String, Resolved)>> {
        if let Some((key, _)) = self.table.into_iter().next() {
            bail!(
                "unknown config key `{key}` for experiment `{}`",
                self.experiment
            );
        }
        Ok(self.resolved)
    }
}

fn parse_list<T>(text: &str, one: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let items: Vec<T> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(one)
        .collect::<Result<_>>()?;
    if items.is_empty() {
        bail!("expected a comma-separated list, got `{text}`");
    }
    Ok(items)
}

/// Renders the resolved parameters as a TOML document that can be fed back
/// through `--config`. Key order follows resolution order, so identical runs
/// emit identical bytes.
pub fn resolved_toml(experiment: &str, resolved: &[(String, Resolved)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "experiment = \"{experiment}\"");
    for (key, value) in resolved {
        match value {
            Resolved::U64(v) => {
                let _ = writeln!(out, "{key} = {v}");
            }
            Resolved::F64(v) => {
                let _ = writeln!(out, "{key} = {}", toml_float(*v));
            }
            Resolved::ListU64(vs) => {
                let items: Vec<String> = vs.iter().map(|v| v.to_string()).collect();
                let _ = writeln!(out, "{key} = [{}]", items.join(", "));
            }
            Resolved::ListF64(vs) => {
                let items: Vec<String> = vs.iter().map(|v| toml_float(*v)).collect();
                let _ = writeln!(out, "{key} = [{}]", items.join(", "));
            }
        }
    }
    out
}

/// Formats a float so TOML reads it back as a float (a bare `1` would parse
/// as an integer).
fn toml_float(v: f64) -> String {
    let s = format!("{v}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("nan") {
        s
    } else {
        format!("{s}.0")
    }
}

/// Converts the resolved list into a JSON object (keys sorted by the map,
/// values exact).
pub fn resolved_json(resolved: &[(String, Resolved)]) -> serde_json::Value {
    let mut map = serde_json::Map::new();
    for (key, value) in resolved {
        let v = match value {
            Resolved::U64(v) => serde_json::json!(v),
            Resolved::F64(v) => serde_json::json!(v),
            Resolved::ListU64(vs) => serde_json::json!(vs),
            Resolved::ListF64(vs) => serde_json::json!(vs),
        };
        map.insert(key.clone(), v);
    }
    serde_json::Value::Object(map)
}
