//! `key = value` run configuration with `#` comments.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected key = value, got {raw:?}", no + 1)));
            };
            if k.trim().is_empty() {
                return Err(Error::Config(format!("line {}: empty key", no + 1)));
            }
            cfg.set(k, v.trim());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(normalize(key), value.trim().to_string());
    }

    /// Entries of `other` override ours.
    pub fn merge(&mut self, other: &Config) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Rejects keys outside `known`, which catches typos.
    pub fn check_known(&self, known: &[&str]) -> Result<()> {
        for k in self.entries.keys() {
            if !known.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown key {k:?}; expected one of {}", known.join(", "))));
            }
        }
        Ok(())
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| Error::Config(format!("{key} = {v:?}: {e}"))),
        }
    }

    pub fn positive_f64(&self, key: &str, default: f64) -> Result<f64> {
        let v: f64 = self.parse_or(key, default)?;
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Config(format!("{key} must be positive and finite, got {v}")));
        }
        Ok(v)
    }

    pub fn finite_f64(&self, key: &str, default: f64) -> Result<f64> {
        let v: f64 = self.parse_or(key, default)?;
        if !v.is_finite() {
            return Err(Error::Config(format!("{key} must be finite, got {v}")));
        }
        Ok(v)
    }

    pub fn positive_usize(&self, key: &str, default: usize) -> Result<usize> {
        let v: usize = self.parse_or(key, default)?;
        if v == 0 {
            return Err(Error::Config(format!("{key} must be positive")));
        }
        Ok(v)
    }
}
