//! Per-run `manifest.json`: resolved configuration, outputs and timings.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use ccrl::ConfigError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub code_version: String,
    pub seed: u64,
    /// Arguments as given, without the program name.
    pub argv: Vec<String>,
    pub config: BTreeMap<String, String>,
    pub outputs: Vec<PathBuf>,
    pub wall_start_unix_ms: u128,
    pub wall_end_unix_ms: u128,
    /// Simulated time covered by all episodes of the run.
    pub virtual_time_us: u64,
}

impl Manifest {
    pub fn new(command: &str, argv: Vec<String>, start_ms: u128) -> Self {
        Self {
            command: command.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: 0,
            argv,
            config: BTreeMap::new(),
            outputs: Vec::new(),
            wall_start_unix_ms: start_ms,
            wall_end_unix_ms: start_ms,
            virtual_time_us: 0,
        }
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        let v = value.to_string();
        if key == "seed" {
            self.seed = v.parse().unwrap_or(self.seed);
        }
        self.config.insert(key.to_string(), v);
    }

    pub fn output(&mut self, path: impl AsRef<Path>) {
        self.outputs.push(path.as_ref().to_path_buf());
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, text + "\n")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| ConfigError::Invalid {
            key: "manifest".into(),
            reason: e.to_string(),
        })
    }

    /// The recorded arguments with the output directory replaced by `out`.
    pub fn replay_args(&self, out: &Path) -> Vec<String> {
        let mut args = Vec::with_capacity(self.argv.len() + 2);
        let mut it = self.argv.iter();
        while let Some(a) = it.next() {
            if a == "--out" {
                it.next();
            } else if !a.starts_with("--out=") {
                args.push(a.clone());
            }
        }
        args.push("--out".into());
        args.push(out.display().to_string());
        args
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_swaps_output_directory() {
        let m = Manifest::new(
            "eval",
            [
                "--seed", "3", "--out", "a", "eval", "--out=b", "--policy", "aimd",
            ]
            .map(String::from)
            .to_vec(),
            0,
        );
        assert_eq!(
            m.replay_args(Path::new("c")),
            ["--seed", "3", "eval", "--policy", "aimd", "--out", "c"]
                .map(String::from)
                .to_vec()
        );
    }

    #[test]
    fn round_trips_through_json() {
        let mut m = Manifest::new("train", vec![], 5);
        m.set("seed", 42);
        m.output("x/curve.csv");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.json");
        m.save(&p).unwrap();
        let back = Manifest::load(&p).unwrap();
        assert_eq!(back.seed, 42);
        assert_eq!(back.outputs, vec![PathBuf::from("x/curve.csv")]);
    }
}
