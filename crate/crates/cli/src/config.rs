//! `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are the long
//! flag names without the leading `--` (`l-value`, `retrain-interval`, ...);
//! underscores are accepted in place of hyphens. Command-line flags take
//! precedence over file values.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str, allowed: &[&str]) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("config line {}: expected `key = value`", n + 1))
            })?;
            let key = key.trim().replace('_', "-");
            if !allowed.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "config line {}: unknown key {key:?}",
                    n + 1
                )));
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(CliError::Usage(format!(
                    "config line {}: duplicate key {key:?}",
                    n + 1
                )));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path, allowed: &[&str]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, allowed).map_err(|e| match e {
            CliError::Usage(msg) => CliError::Usage(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|e| CliError::Usage(format!("config key {key}: {e}")))
            })
            .transpose()
    }

    /// Comma-separated list value.
    pub fn get_list<T>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.split(',')
                    .map(|item| {
                        item.trim()
                            .parse()
                            .map_err(|e| CliError::Usage(format!("config key {key}: {e}")))
                    })
                    .collect()
            })
            .transpose()
    }

    /// Flag value if given, else file value, else `default`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(match flag {
            Some(v) => v,
            None => self.get(key)?.unwrap_or(default),
        })
    }

    pub fn pick_list<T>(&self, flag: Vec<T>, key: &str, default: Vec<T>) -> Result<Vec<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if !flag.is_empty() {
            return Ok(flag);
        }
        Ok(self.get_list(key)?.unwrap_or(default))
    }
}
