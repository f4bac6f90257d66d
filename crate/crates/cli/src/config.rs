use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, Result};

/// Written into every output manifest or sidecar.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
}

/// A resolved configuration together with its canonical JSON form.
pub struct Resolved<T> {
    pub value: T,
    pub json: Value,
    pub hash: String,
}

impl<T> Resolved<T> {
    pub fn header(&self, seed: u64) -> Header {
        Header { version: evdepth::VERSION.to_string(), seed, config_hash: self.hash.clone() }
    }
}

fn merge(base: &mut Value, layer: Value) {
    match (base, layer) {
        (Value::Object(b), Value::Object(l)) => {
            for (k, v) in l {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, l) => *b = l,
    }
}

/// Builds a flag-override layer, skipping unset flags.
#[derive(Default)]
pub struct Overrides(Map<String, Value>);

impl Overrides {
    pub fn set<V: Serialize>(mut self, key: &str, value: Option<V>) -> Self {
        if let Some(v) = value {
            let v = serde_json::to_value(v).expect("flag values serialize");
            match key.split_once('.') {
                Some((outer, inner)) => {
                    let slot = self.0.entry(outer.to_string()).or_insert_with(|| Value::Object(Map::new()));
                    if let Value::Object(m) = slot {
                        m.insert(inner.to_string(), v);
                    }
                }
                None => {
                    self.0.insert(key.to_string(), v);
                }
            }
        }
        self
    }
}

/// Defaults, then the JSON file, then flags. The result is echoed to stderr.
pub fn resolve<T>(command: &str, file: Option<&Path>, flags: Overrides) -> Result<Resolved<T>>
where
    T: Serialize + DeserializeOwned + Default,
{
    let mut json = serde_json::to_value(T::default()).expect("defaults serialize");
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        let layer: Value =
            serde_json::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        if !layer.is_object() {
            return Err(CliError::usage(format!("config {}: expected a JSON object", path.display())));
        }
        merge(&mut json, layer);
    }
    merge(&mut json, Value::Object(flags.0));
    let value: T = serde_json::from_value(json).map_err(|e| CliError::usage(format!("invalid configuration: {e}")))?;
    let json = serde_json::to_value(&value).expect("config serializes");
    let canonical = serde_json::to_string(&json).expect("config serializes");
    let hash = evdepth::rng::content_hash(canonical.as_bytes());
    eprintln!("{command} config: {canonical}");
    Ok(Resolved { value, json, hash })
}
