//! Layered run configuration: built-in defaults, then a JSON file, then
//! command-line flags.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::fsutil;

/// Recursively overlays `patch` onto `base`. Keys absent from `base` are
/// rejected so a misspelt option never passes silently.
fn overlay(base: &mut Value, patch: Value, at: &str) -> Result<()> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let path = if at.is_empty() { k.clone() } else { format!("{at}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => overlay(slot, v, &path)?,
                    None => return Err(Error::Config(format!("unknown config key {path:?}"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

/// Defaults overlaid with the optional JSON file at `path`.
pub fn layered<T: Serialize + DeserializeOwned>(defaults: &T, path: Option<&Path>) -> Result<T> {
    let mut base = serde_json::to_value(defaults).expect("config serializes");
    if let Some(path) = path {
        let text = fsutil::read_to_string(path)?;
        let patch: Value = serde_json::from_str(&text).map_err(|e| Error::format("config file", path, e.to_string()))?;
        if !patch.is_object() {
            return Err(Error::format("config file", path, "top level must be a JSON object"));
        }
        overlay(&mut base, patch, "")?;
    }
    serde_json::from_value(base).map_err(|e| Error::Config(e.to_string()))
}

pub fn to_pretty_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("config serializes");
    s.push('\n');
    s.into_bytes()
}

/// Writes the effective configuration next to a command's outputs.
pub fn echo<T: Serialize>(dir: &Path, config: &T) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    fsutil::write_atomic(&dir.join("config.json"), &to_pretty_json(config))
}
