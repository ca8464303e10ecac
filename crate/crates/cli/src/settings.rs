//! Layered settings: built-in defaults, then the `--config` file, then flags.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};

/// Parsed `--config` document, or an empty object.
pub fn load_config(path: Option<&Path>) -> CliResult<Value> {
    let Some(path) = path else {
        return Ok(Value::Object(Default::default()));
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))?;
    if !value.is_object() {
        return Err(CliError::usage(format!("config {} must hold a JSON object", path.display())));
    }
    Ok(value)
}

/// Recursively overlays `patch` on `base`; `null` entries in `patch` are skipped.
pub fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                if v.is_null() {
                    continue;
                }
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) if !p.is_null() => *b = p.clone(),
        _ => {}
    }
}

/// `defaults`, overlaid by the config file and then by the flag values.
pub fn resolve<T: Serialize + DeserializeOwned>(defaults: &T, config: &Value, flags: Value) -> CliResult<T> {
    let mut value = serde_json::to_value(defaults).map_err(|e| CliError::runtime(e.to_string()))?;
    merge(&mut value, config);
    merge(&mut value, &flags);
    serde_json::from_value(value).map_err(|e| CliError::usage(format!("invalid settings: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn flags_override_file_override_defaults() {
        let mut base = json!({"a": 1, "nested": {"x": 1, "y": 2}, "list": [1, 2]});
        merge(&mut base, &json!({"nested": {"y": 3}, "list": [9]}));
        merge(&mut base, &json!({"a": null, "nested": {"x": 5}}));
        assert_eq!(base, json!({"a": 1, "nested": {"x": 5, "y": 3}, "list": [9]}));
    }
}
