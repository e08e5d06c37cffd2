//! Flat key-value configuration: a TOML file of top-level keys overridden by flags.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

/// Every key a config file or flag may set.
pub const KEYS: &[&str] = &[
    "subcommand", "d", "depth", "n", "norm", "r", "q", "p", "tau0", "lambda", "t", "rho", "mode",
    "operator", "measure", "function", "instances", "samples", "refine", "seed", "out",
];

/// A configuration problem, tied to the key that caused it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: &str, message: impl Into<String>) -> Self {
        ConfigError { key: key.to_string(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config key `{}`: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Resolved settings, stored as strings and parsed on access.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    /// Parses the top level of a TOML document. Nested tables and arrays are rejected.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::new("config", e.message().to_string()))?;
        let mut cfg = Config::default();
        for (key, value) in table {
            let s = match value {
                toml::Value::String(s) => s,
                toml::Value::Integer(i) => i.to_string(),
                toml::Value::Float(x) => x.to_string(),
                toml::Value::Boolean(b) => b.to_string(),
                _ => return Err(ConfigError::new(&key, "expected a string, number or boolean")),
            };
            cfg.set(&key, s)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: String) -> Result<(), ConfigError> {
        if !KEYS.contains(&key) {
            return Err(ConfigError::new(key, "unknown key"));
        }
        self.values.insert(key.to_string(), value);
        Ok(())
    }

    /// Overlays `other` on top of `self`.
    pub fn merge(&mut self, other: Config) {
        self.values.extend(other.values);
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<V: FromStr>(&self, key: &str, default: V) -> Result<V, ConfigError>
    where
        V::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some(s) => s.trim().parse().map_err(|e| ConfigError::new(key, format!("`{s}`: {e}"))),
        }
    }

    pub fn require<V: FromStr>(&self, key: &str) -> Result<V, ConfigError>
    where
        V::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Err(ConfigError::new(key, "required for this subcommand")),
            Some(s) => s.trim().parse().map_err(|e| ConfigError::new(key, format!("`{s}`: {e}"))),
        }
    }

    /// A list of values; see [`parse_range`].
    pub fn range<V: FromStr>(&self, key: &str, default: &str) -> Result<Vec<V>, ConfigError>
    where
        V::Err: fmt::Display,
    {
        parse_range(self.raw(key).unwrap_or(default)).map_err(|m| ConfigError::new(key, m))
    }

    /// First 16 hex digits of the SHA-256 of the sorted `key=value` lines, excluding `out`.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.values.iter().filter(|(k, _)| k.as_str() != "out") {
            h.update(format!("{k}={v}\n"));
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// `a..b` is the inclusive integer range, `a,b,c` an explicit list, a lone value a singleton.
pub fn parse_range<V: FromStr>(s: &str) -> Result<Vec<V>, String>
where
    V::Err: fmt::Display,
{
    let s = s.trim();
    let parse = |x: &str| x.trim().parse::<V>().map_err(|e| format!("`{x}`: {e}"));
    if let Some((a, b)) = s.split_once("..") {
        let a: i64 = a.trim().parse().map_err(|e| format!("range start `{a}`: {e}"))?;
        let b: i64 = b.trim().parse().map_err(|e| format!("range end `{b}`: {e}"))?;
        if a > b {
            return Err(format!("empty range `{s}`"));
        }
        return (a..=b).map(|i| parse(&i.to_string())).collect();
    }
    let out: Vec<V> = s.split(',').map(parse).collect::<Result<_, _>>()?;
    Ok(out)
}
