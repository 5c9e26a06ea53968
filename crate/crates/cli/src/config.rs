//! JSON configuration files that mirror the command-line flags.
//!
//! A config file is an object whose top level may hold the global keys
//! (`seed`, `quiet`) and one section per subcommand keyed by its name,
//! e.g. `{"seed": 3, "train-cgan": {"steps": 50000, "wp": 0.1}}`. Keys
//! inside a section are the flag names with `-` replaced by `_`. A flag
//! given on the command line always wins over the file.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    root: Map<String, Value>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        match serde_json::from_str(text)? {
            Value::Object(root) => Ok(Self { root }),
            _ => bail!("config must be a JSON object"),
        }
    }

    pub fn seed(&self) -> Result<Option<u64>> {
        match self.root.get("seed") {
            None => Ok(None),
            Some(v) => v.as_u64().map(Some).context("seed must be a non-negative integer"),
        }
    }

    pub fn quiet(&self) -> bool {
        self.root.get("quiet").and_then(Value::as_bool).unwrap_or(false)
    }

    /// Overlays the flags that were given on top of the command's section.
    pub fn merge<T: Serialize + DeserializeOwned>(&self, command: &str, flags: &T) -> Result<T> {
        let mut merged = match self.root.get(command) {
            None => Map::new(),
            Some(Value::Object(section)) => section.clone(),
            Some(_) => bail!("config section {command:?} must be an object"),
        };
        if let Value::Object(given) = serde_json::to_value(flags)? {
            for (k, v) in given {
                if !(v.is_null() || v == Value::Bool(false)) {
                    merged.insert(k, v);
                }
            }
        }
        serde_json::from_value(Value::Object(merged)).with_context(|| format!("invalid {command:?} settings"))
    }
}
