//! Flat `key = value` text files with `#` comments.
//!
//! Used for scenario configs, metrics, run manifests and serialized GP
//! models. Keys keep their insertion order so written files are stable.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{PlatoonError, Result};
use crate::numfmt;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvFile {
    entries: Vec<(String, String)>,
    source: String,
}

impl KvFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut kv = KvFile {
            entries: Vec::new(),
            source: source.to_string(),
        };
        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| PlatoonError::Parse {
                path: source.to_string(),
                line: idx + 1,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(PlatoonError::Parse {
                    path: source.to_string(),
                    line: idx + 1,
                    message: "empty key".into(),
                });
            }
            if kv.get(key).is_some() {
                return Err(PlatoonError::Parse {
                    path: source.to_string(),
                    line: idx + 1,
                    message: format!("duplicate key `{key}`"),
                });
            }
            kv.entries.push((key.to_string(), value.trim().to_string()));
        }
        Ok(kv)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Inserts or replaces `key`, keeping the original position on replace.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn set_f64(&mut self, key: &str, x: f64) {
        self.set(key, numfmt::out(x));
    }

    pub fn set_f64_digits(&mut self, key: &str, x: f64, digits: usize) {
        self.set(key, numfmt::sig(x, digits));
    }

    pub fn set_f64_list(&mut self, key: &str, xs: &[f64], digits: usize) {
        let joined = xs
            .iter()
            .map(|&x| numfmt::sig(x, digits))
            .collect::<Vec<_>>()
            .join(",");
        self.set(key, joined);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| PlatoonError::Format(format!("{}: missing key `{key}`", self.source)))
    }

    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse::<T>().map_err(|_| {
            PlatoonError::Format(format!("{}: cannot parse `{key}` from `{raw}`", self.source))
        })
    }

    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(_) => self.parse_value(key).map(Some),
        }
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        let raw = self.require(key)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| {
                    PlatoonError::Format(format!("{}: bad number `{s}` in `{key}`", self.source))
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_lists() {
        let kv = KvFile::parse("# header\na = 1.5 # trailing\n\nlist = 1,2, 3\nname=emergency\n", "t").unwrap();
        assert_eq!(kv.parse_value::<f64>("a").unwrap(), 1.5);
        assert_eq!(kv.f64_list("list").unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(kv.get("name"), Some("emergency"));
        assert!(kv.get("missing").is_none());
    }

    #[test]
    fn rejects_bad_lines_with_line_number() {
        let err = KvFile::parse("a = 1\nnot a pair\n", "cfg.txt").unwrap_err();
        match err {
            PlatoonError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(KvFile::parse("a = 1\na = 2\n", "dup").is_err());
    }

    #[test]
    fn set_preserves_order() {
        let mut kv = KvFile::new();
        kv.set("b", "1");
        kv.set("a", "2");
        kv.set("b", "3");
        assert_eq!(kv.to_text(), "b = 3\na = 2\n");
    }
}
