//! Plain-text `key = value` configuration.
//!
//! Keys are dotted paths into [`ExperimentConfig`], e.g. `gbdt.max_depth = 10`
//! or `labeler.method = blackbox`. Values are JSON literals; bare words are
//! read as strings. `#` starts a comment. Unknown keys are errors.

use serde_json::Value;

use crate::error::{Error, Result};
use crate::experiment::ExperimentConfig;

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn slot<'a>(root: &'a mut Value, key: &str) -> Result<&'a mut Value> {
    let mut cur = root;
    for part in key.split('.') {
        cur = cur
            .as_object_mut()
            .and_then(|m| m.get_mut(part))
            .ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))?;
    }
    Ok(cur)
}

impl ExperimentConfig {
    /// Sets one dotted key. The whole config is re-validated by type.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        self.set_all(&[(key.to_string(), raw.to_string())])
    }

    pub fn set_all(&mut self, pairs: &[(String, String)]) -> Result<()> {
        let mut v = serde_json::to_value(&*self)?;
        for (key, raw) in pairs {
            let target = slot(&mut v, key)?;
            if target.is_object() {
                return Err(Error::Config(format!("`{key}` is a section, not a value")));
            }
            *target = parse_value(raw.trim());
        }
        *self = serde_json::from_value(v).map_err(|e| Error::Config(format!("bad config value: {e}")))?;
        Ok(())
    }

    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.set_all(&parse_kv(text)?)?;
        Ok(cfg)
    }

    /// Every key with its current value, one per line.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        let v = serde_json::to_value(self).expect("config serializes");
        flatten("", &v, &mut out);
        out
    }
}

pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn flatten(prefix: &str, v: &Value, out: &mut String) {
    match v {
        Value::Object(m) => {
            for (k, child) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        Value::String(s) => out.push_str(&format!("{prefix} = {s}\n")),
        other => out.push_str(&format!("{prefix} = {other}\n")),
    }
}
