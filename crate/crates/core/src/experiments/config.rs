use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use super::{io_err, ExperimentError};

/// Flat `key = value` configuration. Blank lines and `#` comments are
/// ignored; later keys override earlier ones.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let mut entries = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                ExperimentError::Config(format!("line {}: expected key = value", no + 1))
            })?;
            entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(KeyValues { entries })
    }

    pub fn read(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ExperimentError> {
        self.entries
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| ExperimentError::Config(format!("bad value for `{key}`: `{v}`")))
            })
            .transpose()
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ExperimentError> {
        self.entries
            .get(key)
            .map(|v| {
                v.split(',')
                    .map(|p| {
                        p.trim().parse::<T>().map_err(|_| {
                            ExperimentError::Config(format!("bad list entry for `{key}`: `{p}`"))
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    /// Fails on any key outside `known`.
    pub fn check_keys(&self, known: &[&str]) -> Result<(), ExperimentError> {
        match self.entries.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(ExperimentError::Config(format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }
}
