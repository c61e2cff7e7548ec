//! Flat `key = value` configuration text.
//!
//! One key per line, `#` starts a comment, blank lines are ignored. Each
//! consumer takes the keys it understands; whatever is left over is an error.

use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Default)]
pub struct KeyValues {
    entries: Vec<(String, String, bool)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(String, String, bool)> = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected key = value, got {raw:?}", no + 1))
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::config(format!("line {}: empty key", no + 1)));
            }
            if entries.iter().any(|(e, ..)| e == k) {
                return Err(Error::config(format!("line {}: duplicate key {k:?}", no + 1)));
            }
            entries.push((k.to_string(), v.to_string(), false));
        }
        Ok(Self { entries })
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.iter().any(|(k, ..)| k == key)
    }

    /// Adds `key = value` unless the key is already present.
    pub fn set_default(&mut self, key: &str, value: impl Display) {
        if !self.contains(key) {
            self.entries.push((key.to_string(), value.to_string(), false));
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        self.entries.iter_mut().find(|(k, ..)| k == key).map(|e| {
            e.2 = true;
            e.1.clone()
        })
    }

    pub fn get<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse()
                    .map_err(|e| Error::config(format!("key {key:?}: cannot parse {v:?}: {e}")))
            })
            .transpose()
    }

    pub fn require<T: FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        self.get(key)?
            .ok_or_else(|| Error::config(format!("missing required key {key:?}")))
    }

    pub fn get_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        let s = s.trim();
                        s.parse().map_err(|e| {
                            Error::config(format!("key {key:?}: cannot parse item {s:?}: {e}"))
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn require_list<T: FromStr>(&mut self, key: &str) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        self.get_list(key)?
            .ok_or_else(|| Error::config(format!("missing required key {key:?}")))
    }

    /// Error on any key nobody consumed.
    pub fn finish(self) -> Result<()> {
        let unknown: Vec<&str> = self
            .entries
            .iter()
            .filter(|e| !e.2)
            .map(|e| e.0.as_str())
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::config(format!("unknown configuration keys: {}", unknown.join(", "))))
        }
    }
}

pub(crate) fn join<T: Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_scalars_lists_and_comments() {
        let mut kv = KeyValues::parse("# hdr\na = 3\n\nb=1, 2 ,3 # trailing\n").unwrap();
        assert_eq!(kv.require::<u32>("a").unwrap(), 3);
        assert_eq!(kv.require_list::<usize>("b").unwrap(), vec![1, 2, 3]);
        assert_eq!(kv.get::<f64>("c").unwrap(), None);
        kv.finish().unwrap();
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        let kv = KeyValues::parse("a = 1\nzzz = 2").unwrap();
        let err = kv.finish().unwrap_err().to_string();
        assert!(err.contains("a") && err.contains("zzz"));
        assert!(KeyValues::parse("a=1\na=2").is_err());
        assert!(KeyValues::parse("novalue").is_err());
        let mut kv = KeyValues::parse("a = x").unwrap();
        assert!(kv.get::<u32>("a").is_err());
    }
}
