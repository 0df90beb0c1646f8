//! Flat `key=value` run configuration. Values come from built-in defaults, then
//! an optional config file, then command-line flags.

use std::collections::BTreeMap;
use std::path::Path;

use ccrl::ConfigError;

/// Keys accepted in a config file. Command-line flags use the same names with dashes.
pub const KEYS: &[&str] = &[
    "seed",
    "actions",
    "k",
    "beta",
    "delta_ms",
    "mode",
    "scenarios",
    "actors",
    "total_steps",
    "lr",
    "lstm",
    "hidden",
    "checkpoint_every",
    "gamma",
    "rho_bar",
    "c_bar",
    "entropy_coef",
    "value_coef",
    "reward_scale",
    "runs",
    "duration_s",
];

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            let key = k.trim().replace('-', "_");
            if !KEYS.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey(key));
            }
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(ConfigError::Duplicate(key));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// The flag value if given, else the file's, else `default`.
    pub fn pick<T: std::str::FromStr>(
        &self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.pick_opt(key, flag)?.unwrap_or(default))
    }

    /// Like [`ConfigFile::pick`] for settings without a default.
    pub fn pick_opt<T: std::str::FromStr>(
        &self,
        key: &str,
        flag: Option<T>,
    ) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        debug_assert!(KEYS.contains(&key), "{key}");
        if flag.is_some() {
            return Ok(flag);
        }
        self.values
            .get(key)
            .map(|raw| {
                raw.parse().map_err(|e: T::Err| ConfigError::Invalid {
                    key: key.to_string(),
                    reason: format!("{raw:?}: {e}"),
                })
            })
            .transpose()
    }
}
