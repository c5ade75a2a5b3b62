//! `key = value` configuration files mirroring the CLI flags.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Parsed config file. Keys use the flag spelling; `_` and `-` are
/// interchangeable. Lines starting with `#` are comments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('_', "-").to_ascii_lowercase()
}

impl Config {
    pub fn parse(text: &str, allowed: &[&str]) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Validation(format!("config line {}: expected `key = value`", i + 1)))?;
            let key = normalize(k);
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Validation(format!("config line {}: unknown key `{key}`", i + 1)));
            }
            let v = v.trim().trim_matches('"').to_string();
            if values.insert(key.clone(), v).is_some() {
                return Err(Error::Validation(format!("config line {}: `{key}` set twice", i + 1)));
            }
        }
        Ok(Config { values })
    }

    pub fn load(path: &Path, allowed: &[&str]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::parse(&text, allowed).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// The flag value if given, else the parsed config value.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.get_str(key)
            .map(|v| v.parse::<T>().map_err(|e| Error::Validation(format!("config `{key}` = `{v}`: {e}"))))
            .transpose()
    }
}

/// Parse `a..b` (inclusive) or a comma-separated list of seeds.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Validation(format!("seeds must look like `0..9` or `1,2,3`, got `{s}`"));
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    let seeds: Vec<u64> = s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?;
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

/// Comma-separated list of values.
pub fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| Error::Validation(format!("invalid {what} `{}`", x.trim())))
        })
        .collect()
}
