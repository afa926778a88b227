//! Flat `key = value` configuration files. Blank lines and lines starting
//! with `#` are ignored; keys use the long flag names (`alpha`, `tail`,
//! `pca-retention`, ...). Command-line flags take precedence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigFile {
    path: PathBuf,
    entries: BTreeMap<String, (u64, String)>,
}

impl ConfigFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &text)
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i as u64 + 1;
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') {
                continue;
            }
            let Some((k, v)) = s.split_once('=') else {
                return Err(parse_err(path, line, format!("expected `key = value`, found {s:?}")));
            };
            let key = k.trim().replace('_', "-");
            if key.is_empty() {
                return Err(parse_err(path, line, "empty key"));
            }
            if entries.insert(key.clone(), (line, v.trim().to_string())).is_some() {
                return Err(parse_err(path, line, format!("duplicate key `{key}`")));
            }
        }
        Ok(ConfigFile {
            path: path.into(),
            entries,
        })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|e| parse_err(&self.path, *line, format!("`{key}`: {e}"))),
        }
    }

    /// Comma-separated list value.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(|item| {
                    item.trim()
                        .parse()
                        .map_err(|e| parse_err(&self.path, *line, format!("`{key}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Fails on the first key not in `known`.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        for (key, (line, _)) in &self.entries {
            if !known.contains(&key.as_str()) {
                return Err(parse_err(&self.path, *line, format!("unknown key `{key}`")));
            }
        }
        Ok(())
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.into(),
        line,
        message: message.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_values_and_lists() {
        let c = ConfigFile::parse(Path::new("c"), "# grid\nalpha = 0.5\n\nfar_targets=0.01, 0.1\n").unwrap();
        assert_eq!(c.get::<f64>("alpha").unwrap(), Some(0.5));
        assert_eq!(c.list::<f64>("far-targets").unwrap(), Some(vec![0.01, 0.1]));
        assert_eq!(c.get::<usize>("tail").unwrap(), None);
    }

    #[test]
    fn errors_cite_lines() {
        let e = ConfigFile::parse(Path::new("c"), "alpha=1\nnonsense\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let c = ConfigFile::parse(Path::new("c"), "\ntail = many\n").unwrap();
        assert!(matches!(
            c.get::<usize>("tail").unwrap_err(),
            Error::Parse { line: 2, .. }
        ));
        assert!(ConfigFile::parse(Path::new("c"), "a=1\na=2").is_err());
        assert!(c.reject_unknown(&["alpha"]).is_err());
    }
}
