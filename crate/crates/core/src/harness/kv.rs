//! Flat `key = value` files. `#` starts a comment; blank lines are ignored.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct KvFile {
    entries: BTreeMap<String, (usize, String)>,
    taken: std::collections::BTreeSet<String>,
    errors: Vec<String>,
    pub path: PathBuf,
}

impl KvFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut kv = KvFile {
            path: path.to_path_buf(),
            ..Default::default()
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("expected `key = value`, got `{raw}`"),
                });
            };
            let key = k.trim().to_string();
            if kv.entries.contains_key(&key) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("duplicate key `{key}`"),
                });
            }
            kv.entries.insert(key, (i + 1, v.trim().to_string()));
        }
        Ok(kv)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    /// Raw string value, marking the key as used.
    pub fn raw(&mut self, key: &str) -> Option<String> {
        self.taken.insert(key.to_string());
        self.entries.get(key).map(|(_, v)| v.clone())
    }

    pub fn error(&mut self, msg: String) {
        self.errors.push(msg);
    }

    /// Parsed value or `None` if absent; parse failures are collected.
    pub fn get<T: FromStr>(&mut self, key: &str) -> Option<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(key)?;
        match v.parse() {
            Ok(t) => Some(t),
            Err(e) => {
                let line = self.entries[key].0;
                self.errors.push(format!("line {line}: {key} = `{v}`: {e}"));
                None
            }
        }
    }

    pub fn get_or<T: FromStr>(&mut self, key: &str, default: T) -> T
    where
        T::Err: std::fmt::Display,
    {
        self.get(key).unwrap_or(default)
    }

    /// Comma-separated list of exactly `N` values.
    pub fn get_array<const N: usize, T: FromStr + Copy + Default>(&mut self, key: &str) -> Option<[T; N]>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(key)?;
        let parts: Vec<&str> = v.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<T>, _> = parts.iter().map(|p| p.parse::<T>()).collect();
        match parsed {
            Ok(vals) if vals.len() == N => {
                let mut out = [T::default(); N];
                out.copy_from_slice(&vals);
                Some(out)
            }
            Ok(vals) => {
                self.errors.push(format!("{key}: expected {N} comma-separated values, got {}", vals.len()));
                None
            }
            Err(e) => {
                self.errors.push(format!("{key} = `{v}`: {e}"));
                None
            }
        }
    }

    /// Path value, resolved against the file's directory when relative.
    pub fn get_path(&mut self, key: &str) -> Option<PathBuf> {
        let v = PathBuf::from(self.raw(key)?);
        Some(if v.is_relative() {
            self.path.parent().map(|d| d.join(&v)).unwrap_or(v)
        } else {
            v
        })
    }

    /// Reports unknown keys and all collected errors.
    pub fn finish(mut self) -> Result<()> {
        for (k, (line, _)) in &self.entries {
            if !self.taken.contains(k) {
                self.errors.push(format!("line {line}: unknown key `{k}`"));
            }
        }
        if self.errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(
                self.errors
                    .into_iter()
                    .map(|e| format!("{}: {e}", self.path.display()))
                    .collect(),
            ))
        }
    }

    pub fn into_errors(self) -> Vec<String> {
        match self.finish() {
            Ok(()) => Vec::new(),
            Err(Error::Config(v)) => v,
            Err(e) => vec![e.to_string()],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_reports() {
        let mut kv = KvFile::parse("a = 1\n# comment\nb=x,y # trailing\n\nc = 2,3\nd = zz\n", Path::new("/t/x.conf")).unwrap();
        assert_eq!(kv.get::<usize>("a"), Some(1));
        assert_eq!(kv.raw("b").as_deref(), Some("x,y"));
        assert_eq!(kv.get_array::<2, usize>("c"), Some([2, 3]));
        assert_eq!(kv.get::<usize>("missing"), None);
        let errs = kv.into_errors();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].contains("unknown key `d`"));
    }

    #[test]
    fn collects_every_error() {
        let mut kv = KvFile::parse("a = x\nb = 1,2,3\n", Path::new("c")).unwrap();
        assert_eq!(kv.get::<usize>("a"), None);
        assert_eq!(kv.get_array::<2, usize>("b"), None);
        assert_eq!(kv.into_errors().len(), 2);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(KvFile::parse("novalue\n", Path::new("c")).is_err());
        assert!(KvFile::parse("a=1\na=2\n", Path::new("c")).is_err());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let mut kv = KvFile::parse("p = data/x.tsv\nq = /abs\n", Path::new("/root/cfg/run.conf")).unwrap();
        assert_eq!(kv.get_path("p").unwrap(), PathBuf::from("/root/cfg/data/x.tsv"));
        assert_eq!(kv.get_path("q").unwrap(), PathBuf::from("/abs"));
    }
}
