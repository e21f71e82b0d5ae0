//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored; lists are
//! comma-separated. Keys use the long CLI flag names with either `-` or `_`.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{IcaError, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

fn normalize_key(key: &str) -> String {
    key.trim().replace('-', "_").to_ascii_lowercase()
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                IcaError::Parse(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
            })?;
            let key = normalize_key(key);
            if key.is_empty() {
                return Err(IcaError::Parse(format!("line {}: empty key", lineno + 1)));
            }
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(IcaError::Parse(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
        }
        Ok(Config { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(&normalize_key(key)).map(String::as_str)
    }

    /// Parses the value of `key`, if present.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| IcaError::Parse(format!("config key `{key}` = `{v}`: {e}")))
            })
            .transpose()
    }

    /// Parses a comma-separated list under `key`, if present.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<T>().map_err(|e| {
                            IcaError::Parse(format!("config key `{key}` item `{s}`: {e}"))
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Fails on keys outside `known`, catching typos in config files.
    pub fn check_keys(&self, known: &[&str]) -> Result<()> {
        let known: Vec<String> = known.iter().map(|k| normalize_key(k)).collect();
        match self.keys().find(|k| !known.iter().any(|n| n == k)) {
            Some(k) => Err(IcaError::Config(format!("unknown config key `{k}`"))),
            None => Ok(()),
        }
    }
}

/// The CLI value if given, else the config value, else `default`.
pub fn resolve<T: FromStr>(cli: Option<T>, config: &Config, key: &str, default: T) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    match cli {
        Some(v) => Ok(v),
        None => Ok(config.get(key)?.unwrap_or(default)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_values_and_lists() {
        let c = Config::parse("# comment\nn = 5000\n\nmin-iter=10\nnl = gauss, tanh ,kurtosis\n").unwrap();
        assert_eq!(c.get::<usize>("n").unwrap(), Some(5000));
        assert_eq!(c.get::<usize>("min_iter").unwrap(), Some(10));
        assert_eq!(c.get::<usize>("missing").unwrap(), None);
        let nls: Vec<String> = c.get_list("nl").unwrap().unwrap();
        assert_eq!(nls, ["gauss", "tanh", "kurtosis"]);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(Config::parse("n 5000").is_err());
        assert!(Config::parse("= 3").is_err());
        assert!(Config::parse("n = 1\nn = 2").is_err());
        let c = Config::parse("n = many").unwrap();
        assert!(c.get::<usize>("n").is_err());
    }

    #[test]
    fn cli_wins() {
        let c = Config::parse("seed = 7").unwrap();
        assert_eq!(resolve(Some(3u64), &c, "seed", 0).unwrap(), 3);
        assert_eq!(resolve(None, &c, "seed", 0u64).unwrap(), 7);
        assert_eq!(resolve(None, &Config::default(), "seed", 0u64).unwrap(), 0);
    }

    #[test]
    fn unknown_keys() {
        let c = Config::parse("sede = 7").unwrap();
        assert!(c.check_keys(&["seed"]).is_err());
        assert!(Config::parse("min-iter = 1").unwrap().check_keys(&["min_iter"]).is_ok());
    }
}
