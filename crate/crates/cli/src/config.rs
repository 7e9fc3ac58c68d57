//! TOML config files. Precedence: command-line flags, then the file, then
//! built-in defaults.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::Format;
use crate::error::{usage, CliResult};

/// Top-level keys plus one table per subcommand, keyed like the long flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub format: Option<Format>,
    pub simulate: Option<toml::Table>,
    pub fit: Option<toml::Table>,
    pub predict: Option<toml::Table>,
    pub tune: Option<toml::Table>,
    pub diagnose: Option<toml::Table>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
    }
}

/// Overlays the flags that were given on top of the config table. Unset
/// options and unset switches leave the file's value in place. Keys that do
/// not name a flag are rejected.
pub fn layer<T: Serialize + DeserializeOwned + Default>(
    flags: &T,
    file: Option<&toml::Table>,
) -> CliResult<T> {
    let known = serde_json::to_value(T::default()).map_err(|e| usage(format!("flags: {e}")))?;
    if let (Some(table), Value::Object(known)) = (file, &known) {
        if let Some(bad) = table.keys().find(|k| !known.contains_key(k.as_str())) {
            return Err(usage(format!("config: unknown key '{bad}'")));
        }
    }
    let mut merged = match file {
        Some(t) => serde_json::to_value(t).map_err(|e| usage(format!("config: {e}")))?,
        None => Value::Object(Default::default()),
    };
    let overlay = serde_json::to_value(flags).map_err(|e| usage(format!("flags: {e}")))?;
    if let (Value::Object(base), Value::Object(top)) = (&mut merged, overlay) {
        for (k, v) in top {
            if !(v.is_null() || v == Value::Bool(false)) {
                base.insert(k, v);
            }
        }
    }
    serde_json::from_value(merged).map_err(|e| usage(format!("config: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Default, PartialEq, Serialize, Deserialize)]
    #[serde(default, rename_all = "kebab-case")]
    struct Demo {
        rho: Option<f64>,
        max_s: Option<usize>,
        flag: bool,
    }

    #[test]
    fn flags_override_file() {
        let file: toml::Table = toml::from_str("rho = 0.9\nmax-s = 12\nflag = true").unwrap();
        let flags = Demo {
            rho: Some(0.5),
            ..Default::default()
        };
        let out = layer(&flags, Some(&file)).unwrap();
        assert_eq!(
            out,
            Demo {
                rho: Some(0.5),
                max_s: Some(12),
                flag: true
            }
        );
        assert_eq!(layer(&flags, None).unwrap(), flags);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let file: toml::Table = toml::from_str("bogus = 1").unwrap();
        assert!(layer(&Demo::default(), Some(&file)).is_err());
        assert!(toml::from_str::<FileConfig>("nope = 3").is_err());
    }
}
