//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are limited to
//! [`KEYS`]; a key may appear once.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

pub const KEYS: &[&str] = &[
    "seed",
    "jobs",
    "variant",
    "model",
    "aggregation",
    "scaler",
    "test_fraction",
    "include_self_loops",
    "preset",
    "n_iter",
    "folds",
    "repeats",
    "format",
];

pub const SEED_ENV: &str = "TRIPGRAV_SEED";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io("config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::invalid("config", format!("line {}: expected key = value", i + 1)));
            };
            let key = k.trim().replace('-', "_");
            if !KEYS.contains(&key.as_str()) {
                return Err(CliError::invalid("config", format!("line {}: unknown key {key:?}", i + 1)));
            }
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::invalid("config", format!("line {}: duplicate key {key:?}", i + 1)));
            }
        }
        Ok(Config { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| CliError::invalid("config", format!("{key}: {e}"))))
            .transpose()
    }

    /// Flag, then config file, then `default`.
    pub fn resolve<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.parsed(key)?.unwrap_or(default)),
        }
    }

    /// Flag, then config file, then [`SEED_ENV`], then 0.
    pub fn seed(&self, flag: Option<u64>) -> Result<u64, CliError> {
        if let Some(s) = flag {
            return Ok(s);
        }
        if let Some(s) = self.parsed("seed")? {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|e| CliError::invalid("config", format!("{SEED_ENV}: {e}"))),
            Err(_) => Ok(0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves() {
        let c = Config::parse("# comment\n\nseed = 7\ntest-fraction=0.25\n").unwrap();
        assert_eq!(c.get("seed"), Some("7"));
        assert_eq!(c.resolve(None, "test_fraction", 0.2).unwrap(), 0.25);
        assert_eq!(c.resolve(Some(0.5), "test_fraction", 0.2).unwrap(), 0.5);
        assert_eq!(c.resolve::<usize>(None, "folds", 5).unwrap(), 5);
        assert_eq!(c.seed(Some(3)).unwrap(), 3);
        assert_eq!(c.seed(None).unwrap(), 7);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(Config::parse("seed 7").is_err());
        assert!(Config::parse("colour = red").is_err());
        assert!(Config::parse("seed = 1\nseed = 2").is_err());
        let c = Config::parse("seed = x").unwrap();
        assert!(c.seed(None).is_err());
    }
}
