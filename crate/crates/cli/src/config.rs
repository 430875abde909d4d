//! Flat `key = value` experiment configs.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

/// Parameters from a config file plus command-line overrides. Every lookup
/// is recorded, defaults included, so a report can carry the full effective
/// parameter set.
#[derive(Debug, Default)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
    used: RefCell<BTreeMap<String, String>>,
}

fn normalize_key(k: &str) -> String {
    k.trim().to_ascii_lowercase().replace('_', "-")
}

impl ExperimentConfig {
    /// Blank lines and `#` comments are skipped; a key may appear once.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", n + 1))?;
            let key = normalize_key(k);
            if key.is_empty() {
                bail!("line {}: empty key", n + 1);
            }
            if cfg.values.insert(key.clone(), v.trim().to_string()).is_some() {
                bail!("line {}: duplicate key `{key}`", n + 1);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    /// Later overrides win.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(normalize_key(key), value.into());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn record(&self, key: &str, value: &str) {
        self.used.borrow_mut().insert(key.to_string(), value.to_string());
    }

    pub fn str_opt(&self, key: &str) -> Option<String> {
        let v = self.values.get(key)?.clone();
        self.record(key, &v);
        Some(v)
    }

    pub fn str_or(&self, key: &str, default: &str) -> String {
        let v = self.values.get(key).cloned().unwrap_or_else(|| default.to_string());
        self.record(key, &v);
        v
    }

    fn parsed<V: std::str::FromStr>(&self, key: &str) -> Result<Option<V>>
    where
        V::Err: std::fmt::Display,
    {
        match self.str_opt(key) {
            None => Ok(None),
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("bad value `{s}` for `{key}`: {e}")),
        }
    }

    pub fn f64_opt(&self, key: &str) -> Result<Option<f64>> {
        let v: Option<f64> = self.parsed(key)?;
        match v {
            Some(x) if !x.is_finite() => bail!("`{key}` must be finite"),
            _ => Ok(v),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.f64_opt(key)?.unwrap_or(default);
        self.record(key, &v.to_string());
        Ok(v)
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        let v = self.parsed(key)?.unwrap_or(default);
        self.record(key, &v.to_string());
        Ok(v)
    }

    /// Randomized families have no default seed.
    pub fn seed(&self, what: &str) -> Result<u64> {
        self.parsed("seed")?
            .ok_or_else(|| anyhow!("{what} is randomized and needs `seed` (config key or --seed)"))
    }

    /// Comma-separated numbers.
    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        let v = match self.str_opt(key) {
            None => default.to_vec(),
            Some(s) => s
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|e| anyhow!("bad entry `{t}` in `{key}`: {e}"))
                })
                .collect::<Result<_>>()?,
        };
        let text = v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        self.record(key, &text);
        Ok(v)
    }

    /// Everything that was looked up, with the value actually used.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        self.used.borrow().clone()
    }

    /// Keys that were given but never read; usually typos.
    pub fn unused(&self) -> Vec<String> {
        let used = self.used.borrow();
        self.values.keys().filter(|k| !used.contains_key(*k)).cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let mut c = ExperimentConfig::parse("# header\ntheta = 0.5  # trailing\n\nfield_a = x\n").unwrap();
        assert_eq!(c.f64_or("theta", 1.0).unwrap(), 0.5);
        c.set("theta", "2");
        assert_eq!(c.f64_or("theta", 1.0).unwrap(), 2.0);
        assert_eq!(c.unused(), vec!["field-a".to_string()]);
        assert_eq!(c.resolved()["theta"], "2");
    }

    #[test]
    fn rejects_duplicates_and_garbage() {
        assert!(ExperimentConfig::parse("a = 1\na = 2").is_err());
        assert!(ExperimentConfig::parse("no equals sign").is_err());
        let c = ExperimentConfig::parse("p = two").unwrap();
        assert!(c.f64_or("p", 1.0).is_err());
    }

    #[test]
    fn defaults_are_recorded() {
        let c = ExperimentConfig::default();
        assert_eq!(c.usize_or("grid", 16).unwrap(), 16);
        assert_eq!(c.f64_list_or("thetas", &[0.0, 1.5]).unwrap(), vec![0.0, 1.5]);
        assert_eq!(c.resolved()["thetas"], "0,1.5");
        assert!(c.seed("ball sampling").is_err());
    }
}
