//! Flat `key = value` run configuration.
//!
//! Keys are dotted paths into [`RunConfig`], e.g. `total_iters = 4000`,
//! `deform.hexplane.levels = 2`, `init.keep_fraction = 0.01`. Values use TOML
//! syntax. Unknown keys are rejected.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use dynsplat::init::InitConfig;
use dynsplat::train::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    #[serde(default)]
    pub init: InitConfig,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse()?;
        let mut pairs = Vec::new();
        flatten("", &serde_json::to_value(table)?, &mut pairs);
        let schema = serde_json::to_value(Self::default())?;
        let mut tree = schema.clone();
        for (key, value) in pairs {
            set_path(&schema, &mut tree, &key, value)?;
        }
        let config: Self = serde_json::from_value(tree)?;
        config.train.validate()?;
        config.init.validate()?;
        Ok(config)
    }

    /// The effective configuration as flat `key = value` lines.
    pub fn to_flat(&self) -> Result<String> {
        let mut pairs = Vec::new();
        flatten("", &serde_json::to_value(self)?, &mut pairs);
        let mut out = String::new();
        for (key, value) in pairs {
            // Unset optional sections have no TOML spelling; leaving them out keeps the default.
            if !value.is_null() {
                out += &format!("{key} = {}\n", serde_json::from_value::<toml::Value>(value)?);
            }
        }
        Ok(out)
    }

    /// Applies the global `--seed` and `--deterministic` flags.
    pub fn apply_flags(&mut self, seed: Option<u64>, deterministic: bool) {
        if let Some(s) = seed {
            self.train.seed = s;
            self.init.seed = s;
        }
        if deterministic {
            self.train.deterministic = true;
        }
    }
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, Value)>) {
    match value {
        Value::Object(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => out.push((prefix.to_string(), other.clone())),
    }
}

/// Writes `value` at dotted `key`. The key must exist in `schema` (the
/// default configuration) or lie below one of its unset optional sections.
fn set_path(schema: &Value, tree: &mut Value, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut known = Some(schema);
    let mut node = tree;
    for (i, part) in parts.iter().enumerate() {
        known = match known {
            Some(Value::Null) | None => None,
            Some(Value::Object(o)) => Some(o.get(*part).ok_or_else(|| anyhow!("unknown config key `{key}`"))?),
            Some(_) => bail!("`{key}`: `{}` is not a section", parts[..i].join(".")),
        };
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        let obj = node.as_object_mut().ok_or_else(|| anyhow!("`{key}`: `{}` is not a section", parts[..i].join(".")))?;
        node = obj.entry(*part).or_insert(Value::Null);
    }
    *node = value;
    Ok(())
}
