//! Flat `key = value` text used for configs, missions and dataset metadata.
//!
//! Blank lines and lines starting with `#` are ignored. A key may repeat
//! (missions list one `wp` line per waypoint); [`KvFile::get`] returns the
//! last occurrence, [`KvFile::all`] every occurrence in order.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvFile {
    entries: Vec<(String, String)>,
    origin: String,
}

impl KvFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::parse(
                    format!("{origin}:{}", i + 1),
                    format!("expected `key = value`, got `{line}`"),
                ));
            };
            entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(KvFile {
            entries,
            origin: origin.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().rev().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.entries
            .iter()
            .filter(move |(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Parses the value under `key`, if present.
    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>().map_err(|e| {
                    Error::parse(format!("{} key `{key}`", self.origin), format!("`{v}`: {e}"))
                })
            })
            .transpose()
    }

    pub fn parsed_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.parsed(key)?.ok_or_else(|| {
            Error::parse(self.origin.clone(), format!("missing required key `{key}`"))
        })
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }
}

/// Parses a comma-separated list of reals.
pub fn parse_reals(s: &str, location: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| Error::parse(location, format!("`{p}`: {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_render() {
        let kv = KvFile::parse("# c\na = 1\n\nwp = 0,1,2\nwp=3,4,5\nname = x = y\n", "t").unwrap();
        assert_eq!(kv.get("a"), Some("1"));
        assert_eq!(kv.all("wp").collect::<Vec<_>>(), vec!["0,1,2", "3,4,5"]);
        assert_eq!(kv.get("name"), Some("x = y"));
        assert_eq!(kv.parsed::<i32>("a").unwrap(), Some(1));
        assert!(kv.parsed::<i32>("name").is_err());
        assert!(kv.require::<f64>("missing").is_err());
        let again = KvFile::parse(&kv.render(), "t").unwrap();
        assert_eq!(again.entries(), kv.entries());
    }

    #[test]
    fn rejects_lines_without_equals() {
        assert!(KvFile::parse("novalue\n", "t").is_err());
    }

    #[test]
    fn set_overwrites_last() {
        let mut kv = KvFile::new();
        kv.set("k", 1);
        kv.set("k", 2);
        assert_eq!(kv.entries().len(), 1);
        assert_eq!(kv.get("k"), Some("2"));
        assert_eq!(parse_reals("1, -2.5,3e2", "x").unwrap(), vec![1.0, -2.5, 300.0]);
    }
}
