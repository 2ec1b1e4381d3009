//! Scenario loading and `key=value` overrides.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde_json::Value;
use shared_cacc::simulator::ScenarioConfig;

/// Reads a scenario JSON file, applies overrides in order and validates it.
pub fn load(path: &Path, overrides: &[String], seed: Option<u64>) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let mut value: Value =
        serde_json::from_str(&text).with_context(|| format!("config {} is not valid JSON", path.display()))?;
    for item in overrides {
        apply_override(&mut value, item)?;
    }
    if let Some(seed) = seed {
        set_path(&mut value, "seed", Value::from(seed))?;
    }
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(value)
        .map_err(|e| anyhow!("config {}: field `{}`: {}", path.display(), e.path(), e.inner()))?;
    cfg.validate()
        .with_context(|| format!("config {} failed validation", path.display()))?;
    Ok(cfg)
}

/// `a.b.c=value`; the value is parsed as JSON and falls back to a string.
pub fn apply_override(root: &mut Value, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{item}` is not of the form key=value"))?;
    let key = key.trim();
    if key.is_empty() {
        bail!("override `{item}` has an empty key");
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    set_path(root, key, value)
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (depth, part) in parts.iter().enumerate() {
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| anyhow!("override `{key}`: `{}` is not an object", parts[..depth].join(".")))?;
        if depth + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("split always yields at least one part")
}
