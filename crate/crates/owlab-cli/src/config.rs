//! Keyed-text configuration: one `section.key = value` per line, arrays as
//! comma lists, `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `section.key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("key `{key}`: cannot parse `{value}`: {reason}")]
    Value { key: String, value: String, reason: String },
    #[error("key `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = || ConfigError::Syntax { line: i + 1, text: raw.trim().to_string() };
            let (key, value) = line.split_once('=').ok_or_else(syntax)?;
            let key = key.trim();
            let (section, name) = key.split_once('.').ok_or_else(syntax)?;
            let ident = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !ident(section) || !ident(name) {
                return Err(syntax());
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(ConfigError::Duplicate { line: i + 1, key: key.to_string() });
            }
        }
        Ok(Config { entries })
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: Display,
    {
        let v = self.raw(key).ok_or_else(|| ConfigError::Missing(key.to_string()))?;
        parse_value(key, v)
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: Display,
    {
        match self.raw(key) {
            Some(v) => parse_value(key, v),
            None => Ok(default),
        }
    }

    pub fn require_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, ConfigError>
    where
        T::Err: Display,
    {
        let v = self.raw(key).ok_or_else(|| ConfigError::Missing(key.to_string()))?;
        parse_list(key, v)
    }

    pub fn get_list<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>, ConfigError>
    where
        T::Err: Display,
    {
        match self.raw(key) {
            Some(v) => parse_list(key, v),
            None => Ok(default),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: Display,
{
    v.parse().map_err(|e: T::Err| ConfigError::Value { key: key.into(), value: v.into(), reason: e.to_string() })
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: Display,
{
    let out: Vec<T> = v.split(',').map(|s| parse_value(key, s.trim())).collect::<Result<_, _>>()?;
    Ok(out)
}

/// Decimal or `0x`-prefixed hexadecimal.
pub fn parse_seed(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let r = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(h) => u64::from_str_radix(h, 16),
        None => s.parse(),
    };
    r.map_err(|e| format!("invalid seed `{s}`: {e}"))
}
