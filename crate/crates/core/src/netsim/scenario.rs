use std::fmt;
use std::path::Path;

use crate::error::ConfigError;
use crate::transport::DEFAULT_MSS;

/// Token-bucket policer in front of the bottleneck.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicerConfig {
    pub rate_bps: f64,
    pub burst_bytes: f64,
}

/// Emulated link parameters for one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub bandwidth_bps: f64,
    pub one_way_delay_ms: f64,
    pub buffer_bytes: u64,
    pub loss_rate: f64,
    pub policer: Option<PolicerConfig>,
    pub duration_s: f64,
    pub seed: u64,
}

/// The keys accepted in scenario files, in canonical order.
pub const SCENARIO_KEYS: [&str; 7] = [
    "bandwidth_bps",
    "one_way_delay_ms",
    "buffer_bytes",
    "loss_rate",
    "policer",
    "duration_s",
    "seed",
];

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, why: &str| {
            Err(ConfigError::Invalid {
                key: key.to_string(),
                reason: why.to_string(),
            })
        };
        if !(self.bandwidth_bps.is_finite() && self.bandwidth_bps > 0.0) {
            return bad("bandwidth_bps", "must be > 0");
        }
        if !(self.one_way_delay_ms.is_finite() && self.one_way_delay_ms >= 0.0) {
            return bad("one_way_delay_ms", "must be >= 0");
        }
        if self.buffer_bytes < DEFAULT_MSS as u64 {
            return bad("buffer_bytes", "must hold at least one MSS");
        }
        if !(0.0..1.0).contains(&self.loss_rate) {
            return bad("loss_rate", "must be in [0, 1)");
        }
        if let Some(p) = self.policer {
            if !(p.rate_bps.is_finite() && p.rate_bps > 0.0) {
                return bad("policer", "rate must be > 0");
            }
            if !(p.burst_bytes.is_finite() && p.burst_bytes > 0.0) {
                return bad("policer", "burst must be > 0");
            }
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return bad("duration_s", "must be > 0");
        }
        Ok(())
    }

    pub fn one_way_delay_us(&self) -> u64 {
        (self.one_way_delay_ms * 1000.0).round() as u64
    }

    pub fn duration_us(&self) -> u64 {
        (self.duration_s * 1e6).round() as u64
    }

    /// Bandwidth-delay product over the round-trip propagation delay, in bytes.
    pub fn bdp_bytes(&self) -> f64 {
        self.bandwidth_bps / 8.0 * (2.0 * self.one_way_delay_ms / 1000.0)
    }

    /// Parses the flat `key=value` scenario format. Blank lines and `#` comments
    /// are skipped; unknown or repeated keys are rejected.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut bandwidth = None;
        let mut delay = None;
        let mut buffer = None;
        let mut loss = None;
        let mut policer = None;
        let mut duration = None;
        let mut seed = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: lineno + 1,
                text: raw.to_string(),
            })?;
            let key = key.trim();
            let value = value.trim();
            let dup = || ConfigError::Duplicate(key.to_string());
            match key {
                "bandwidth_bps" => set_once(&mut bandwidth, parse_num(key, value)?, dup)?,
                "one_way_delay_ms" => set_once(&mut delay, parse_num(key, value)?, dup)?,
                "buffer_bytes" => set_once(&mut buffer, parse_num::<u64>(key, value)?, dup)?,
                "loss_rate" => set_once(&mut loss, parse_num(key, value)?, dup)?,
                "policer" => set_once(&mut policer, parse_policer(value)?, dup)?,
                "duration_s" => set_once(&mut duration, parse_num(key, value)?, dup)?,
                "seed" => set_once(&mut seed, parse_num::<u64>(key, value)?, dup)?,
                other => return Err(ConfigError::UnknownKey(other.to_string())),
            }
        }
        let cfg = ScenarioConfig {
            bandwidth_bps: bandwidth.ok_or(ConfigError::Missing("bandwidth_bps"))?,
            one_way_delay_ms: delay.ok_or(ConfigError::Missing("one_way_delay_ms"))?,
            buffer_bytes: buffer.ok_or(ConfigError::Missing("buffer_bytes"))?,
            loss_rate: loss.unwrap_or(0.0),
            policer: policer.unwrap_or(None),
            duration_s: duration.unwrap_or(30.0),
            seed: seed.unwrap_or(0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn with_duration(mut self, duration_s: f64) -> Self {
        self.duration_s = duration_s;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

impl fmt::Display for ScenarioConfig {
    /// Renders the file format; `parse` reads it back unchanged.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "bandwidth_bps={}", self.bandwidth_bps)?;
        writeln!(f, "one_way_delay_ms={}", self.one_way_delay_ms)?;
        writeln!(f, "buffer_bytes={}", self.buffer_bytes)?;
        writeln!(f, "loss_rate={}", self.loss_rate)?;
        match self.policer {
            Some(p) => writeln!(f, "policer={},{}", p.rate_bps, p.burst_bytes)?,
            None => writeln!(f, "policer=none")?,
        }
        writeln!(f, "duration_s={}", self.duration_s)?;
        writeln!(f, "seed={}", self.seed)
    }
}

fn set_once<T>(
    slot: &mut Option<T>,
    v: T,
    dup: impl Fn() -> ConfigError,
) -> Result<(), ConfigError> {
    if slot.is_some() {
        return Err(dup());
    }
    *slot = Some(v);
    Ok(())
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Invalid {
        key: key.to_string(),
        reason: format!("cannot parse {value:?}"),
    })
}

fn parse_policer(value: &str) -> Result<Option<PolicerConfig>, ConfigError> {
    if value.eq_ignore_ascii_case("none") || value.is_empty() {
        return Ok(None);
    }
    let (rate, burst) = value.split_once(',').ok_or_else(|| ConfigError::Invalid {
        key: "policer".into(),
        reason: format!("expected `rate_bps,burst_bytes` or `none`, got {value:?}"),
    })?;
    Ok(Some(PolicerConfig {
        rate_bps: parse_num("policer", rate.trim())?,
        burst_bytes: parse_num("policer", burst.trim())?,
    }))
}

/// A scenario with the name it is listed under.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedScenario {
    pub name: String,
    pub config: ScenarioConfig,
}

const BUNDLED: [(&str, &str); 7] = [
    ("cellular", include_str!("../../scenarios/cellular.scn")),
    ("dsl", include_str!("../../scenarios/dsl.scn")),
    ("wan-12mbps", include_str!("../../scenarios/wan-12mbps.scn")),
    (
        "lossy-24mbps",
        include_str!("../../scenarios/lossy-24mbps.scn"),
    ),
    (
        "intercontinental",
        include_str!("../../scenarios/intercontinental.scn"),
    ),
    (
        "lan-100mbps",
        include_str!("../../scenarios/lan-100mbps.scn"),
    ),
    ("policer", include_str!("../../scenarios/policer.scn")),
];

/// The scenarios shipped with the crate.
pub fn bundled_scenarios() -> Vec<NamedScenario> {
    BUNDLED
        .iter()
        .map(|(name, text)| NamedScenario {
            name: name.to_string(),
            config: ScenarioConfig::parse(text).expect("bundled scenario parses"),
        })
        .collect()
}

pub fn bundled_scenario(name: &str) -> Option<NamedScenario> {
    bundled_scenarios().into_iter().find(|s| s.name == name)
}

/// Resolves a bundled scenario name or a path to a scenario file.
pub fn resolve_scenario(name_or_path: &str) -> Result<NamedScenario, ConfigError> {
    if let Some(s) = bundled_scenario(name_or_path) {
        return Ok(s);
    }
    let path = Path::new(name_or_path);
    let config = ScenarioConfig::load(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| name_or_path.to_string());
    Ok(NamedScenario { name, config })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_set_spans_required_ranges() {
        let all = bundled_scenarios();
        assert!(all.len() >= 7);
        let bw: Vec<f64> = all.iter().map(|s| s.config.bandwidth_bps).collect();
        let owd: Vec<f64> = all.iter().map(|s| s.config.one_way_delay_ms).collect();
        assert!(bw.iter().cloned().fold(f64::MAX, f64::min) <= 0.5e6);
        assert!(bw.iter().cloned().fold(0.0, f64::max) >= 100e6);
        assert!(owd.iter().cloned().fold(f64::MAX, f64::min) <= 5.0);
        assert!(owd.iter().cloned().fold(0.0, f64::max) >= 150.0);
        assert!(all.iter().any(|s| s.config.policer.is_some()));
    }

    #[test]
    fn render_then_parse_is_identity() {
        for s in bundled_scenarios() {
            let text = s.config.to_string();
            assert_eq!(ScenarioConfig::parse(&text).unwrap(), s.config);
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = ScenarioConfig::parse(
            "bandwidth_bps=1e6\none_way_delay_ms=10\nbuffer_bytes=5000\nmtu=1500\n",
        )
        .unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey(k) if k == "mtu"));
    }

    #[test]
    fn invariants_are_enforced() {
        let base = "bandwidth_bps=1e6\none_way_delay_ms=10\n";
        assert!(ScenarioConfig::parse(&format!("{base}buffer_bytes=100\n")).is_err());
        assert!(ScenarioConfig::parse(&format!("{base}buffer_bytes=5000\nloss_rate=1\n")).is_err());
        assert!(
            ScenarioConfig::parse("bandwidth_bps=0\none_way_delay_ms=1\nbuffer_bytes=5000")
                .is_err()
        );
        assert!(
            ScenarioConfig::parse(&format!("{base}buffer_bytes=5000\nduration_s=0\n")).is_err()
        );
        let dup = ScenarioConfig::parse(&format!("{base}buffer_bytes=5000\nseed=1\nseed=2\n"));
        assert!(matches!(dup, Err(ConfigError::Duplicate(_))));
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = resolve_scenario("/nonexistent/dir/x.scn").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/x.scn"));
    }
}
