//! Flat key-value run configuration: defaults, config file, then overrides.

use std::collections::BTreeMap;
use std::path::Path;

use walkproj::io::{parse_f64, parse_kv};
use walkproj::model::{RobotParams, PARAM_KEYS};

/// A configuration problem; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl<E: std::fmt::Display> From<E> for ConfigError {
    fn from(e: E) -> Self {
        ConfigError(e.to_string())
    }
}

/// Resolved `key = value` pairs for one command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Starts from `defaults`, applies the file and then the `key=value`
    /// overrides. Keys outside `defaults` are rejected.
    pub fn resolve(
        defaults: &[(&str, String)],
        file: Option<&Path>,
        overrides: &[String],
    ) -> Result<Self, ConfigError> {
        let mut values: BTreeMap<String, String> = defaults.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        let mut set = |key: &str, value: &str, origin: &str| -> Result<(), ConfigError> {
            match values.get_mut(key) {
                Some(slot) => {
                    *slot = value.to_string();
                    Ok(())
                }
                None => Err(ConfigError(format!("{origin}: unknown key {key:?} for this command"))),
            }
        };
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
            let origin = path.display().to_string();
            for (k, v) in parse_kv(&text).map_err(|e| ConfigError(format!("{origin}: {e}")))? {
                set(&k, &v, &origin)?;
            }
        }
        for item in overrides {
            let Some((k, v)) = item.split_once('=') else {
                return Err(ConfigError(format!("override {item:?} is not key=value")));
            };
            set(k.trim(), v.trim(), "--set")?;
        }
        Ok(Self { values })
    }

    pub fn str(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("key {key} has no default"))
    }

    pub fn f64(&self, key: &str) -> Result<f64, ConfigError> {
        Ok(parse_f64(key, self.str(key))?)
    }

    pub fn usize(&self, key: &str) -> Result<usize, ConfigError> {
        self.str(key)
            .parse()
            .map_err(|_| ConfigError(format!("{key}: {:?} is not a non-negative integer", self.str(key))))
    }

    pub fn robot(&self) -> Result<RobotParams, ConfigError> {
        let map = PARAM_KEYS
            .iter()
            .map(|k| (k.to_string(), self.str(k).to_string()))
            .collect();
        Ok(RobotParams::from_map(&map)?)
    }

    /// All resolved pairs as `key = value` lines.
    pub fn echo(&self) -> Vec<String> {
        self.values.iter().map(|(k, v)| format!("{k} = {v}")).collect()
    }
}

/// Robot parameter keys with the default robot's values.
pub fn robot_defaults() -> Vec<(&'static str, String)> {
    let p = RobotParams::atlas_like();
    let values = [
        p.total_mass_kg,
        p.leg_length_m,
        p.com_height_m,
        p.leg_mass_fraction,
        p.leg_mass_height_fraction,
        p.gravity,
        p.step_frequency_hz,
    ];
    PARAM_KEYS.iter().copied().zip(values.map(|v| v.to_string())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults() -> Vec<(&'static str, String)> {
        vec![("a", "1".into()), ("b", "x".into())]
    }

    #[test]
    fn overrides_win_over_defaults() {
        let c = RunConfig::resolve(&defaults(), None, &["a = 2.5".into()]).unwrap();
        assert_eq!(c.f64("a").unwrap(), 2.5);
        assert_eq!(c.echo(), ["a = 2.5", "b = x"]);
    }

    #[test]
    fn unknown_and_malformed_keys_rejected() {
        assert!(RunConfig::resolve(&defaults(), None, &["c=1".into()]).is_err());
        assert!(RunConfig::resolve(&defaults(), None, &["a".into()]).is_err());
        let c = RunConfig::resolve(&defaults(), None, &["a=-1".into()]).unwrap();
        assert!(c.usize("a").is_err());
    }

    #[test]
    fn robot_defaults_round_trip() {
        let c = RunConfig::resolve(&robot_defaults(), None, &[]).unwrap();
        assert_eq!(c.robot().unwrap(), RobotParams::atlas_like());
    }
}
