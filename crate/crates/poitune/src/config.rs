//! Line-oriented config files: `#` comments, `key = value` pairs, and
//! `[section]` headers. Errors always cite the offending key and line.
//!
//! The same grammar serves both hand-written run configs and the manifests
//! the tool writes next to its outputs, so a manifest can be fed straight
//! back in to reproduce a run.

use std::collections::HashSet;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    MissingEquals { line: usize, text: String },
    #[error("line {line}: missing key before `=`")]
    EmptyKey { line: usize },
    #[error("line {line}: malformed section header {text:?}")]
    BadSection { line: usize, text: String },
    #[error("line {line}: duplicate key {key:?} in section {section:?}")]
    DuplicateKey {
        section: String,
        key: String,
        line: usize,
    },
    #[error("line {line}: unknown key {key:?} in section {section:?}")]
    UnknownKey {
        section: String,
        key: String,
        line: usize,
    },
    #[error("line {line}: key {key:?}: {message}")]
    BadValue {
        key: String,
        line: usize,
        message: String,
    },
    #[error("missing required key {key:?} in section {section:?}")]
    MissingKey { section: String, key: String },
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    section: String,
    key: String,
    value: String,
    line: usize,
}

/// A parsed config file. Keys keep their source order and line numbers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigFile {
    entries: Vec<Entry>,
}

fn valid_section_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '-')
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: Vec<Entry> = Vec::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if trimmed.starts_with('[') {
                let inner = trimmed
                    .strip_suffix(']')
                    .map(|s| &s[1..])
                    .filter(|s| valid_section_name(s));
                match inner {
                    Some(name) => section = name.to_string(),
                    None => {
                        return Err(ConfigError::BadSection {
                            line,
                            text: trimmed.to_string(),
                        })
                    }
                }
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(ConfigError::MissingEquals {
                    line,
                    text: trimmed.to_string(),
                });
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::EmptyKey { line });
            }
            if entries
                .iter()
                .any(|e| e.section == section && e.key == key)
            {
                return Err(ConfigError::DuplicateKey {
                    section: section.clone(),
                    key: key.to_string(),
                    line,
                });
            }
            entries.push(Entry {
                section: section.clone(),
                key: key.to_string(),
                value: value.trim().to_string(),
                line,
            });
        }
        Ok(ConfigFile { entries })
    }

    pub fn section<'a>(&'a self, name: &'a str) -> SectionView<'a> {
        SectionView { file: self, name }
    }

    /// Rejects any key outside the allowed `(section, keys)` table. The
    /// `manifest` section is always accepted: it carries bookkeeping written
    /// by the tool itself.
    pub fn ensure_known(&self, allowed: &[(&str, &[&str])]) -> Result<(), ConfigError> {
        for e in &self.entries {
            if e.section == "manifest" {
                continue;
            }
            let known = allowed
                .iter()
                .any(|(s, keys)| *s == e.section && keys.contains(&e.key.as_str()));
            if !known {
                return Err(ConfigError::UnknownKey {
                    section: e.section.clone(),
                    key: e.key.clone(),
                    line: e.line,
                });
            }
        }
        Ok(())
    }
}

/// Read access to one section's keys with typed parsing.
#[derive(Debug, Clone, Copy)]
pub struct SectionView<'a> {
    file: &'a ConfigFile,
    name: &'a str,
}

impl<'a> SectionView<'a> {
    fn entry(&self, key: &str) -> Option<&'a Entry> {
        self.file
            .entries
            .iter()
            .find(|e| e.section == self.name && e.key == key)
    }

    pub fn get(&self, key: &str) -> Option<&'a str> {
        self.entry(key).map(|e| e.value.as_str())
    }

    pub fn required(&self, key: &str) -> Result<&'a str, ConfigError> {
        self.get(key).ok_or_else(|| ConfigError::MissingKey {
            section: self.name.to_string(),
            key: key.to_string(),
        })
    }

    fn parse_with<T>(
        &self,
        key: &str,
        what: &str,
        f: impl Fn(&str) -> Option<T>,
    ) -> Result<Option<T>, ConfigError> {
        let Some(e) = self.entry(key) else {
            return Ok(None);
        };
        match f(&e.value) {
            Some(v) => Ok(Some(v)),
            None => Err(ConfigError::BadValue {
                key: key.to_string(),
                line: e.line,
                message: format!("expected {what}, got {:?}", e.value),
            }),
        }
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.parse_with(key, "a number", |v| v.parse().ok())
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        self.parse_with(key, "a non-negative integer", |v| v.parse().ok())
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.parse_with(key, "a non-negative integer", |v| v.parse().ok())
    }

    pub fn get_u8(&self, key: &str) -> Result<Option<u8>, ConfigError> {
        self.parse_with(key, "an integer in 0..=255", |v| v.parse().ok())
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        self.parse_with(key, "true or false", |v| match v {
            "true" => Some(true),
            "false" => Some(false),
            _ => None,
        })
    }

    /// Comma-separated values, trimmed; `a, b, c` -> ["a", "b", "c"].
    pub fn get_list(&self, key: &str) -> Option<Vec<String>> {
        self.get(key).map(|v| {
            v.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        })
    }

    pub fn get_usize_list(&self, key: &str) -> Result<Option<Vec<usize>>, ConfigError> {
        self.parse_with(key, "a comma-separated list of indices", |v| {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().ok())
                .collect()
        })
    }

    /// `position:coefficient` pairs: `100:1.0, 230:0.8`. Duplicate positions
    /// are rejected here so the mistake is reported with its config line.
    pub fn get_leak_points(&self, key: &str) -> Result<Option<(Vec<usize>, Vec<f64>)>, ConfigError> {
        let Some(e) = self.entry(key) else {
            return Ok(None);
        };
        let bad = |message: String| ConfigError::BadValue {
            key: key.to_string(),
            line: e.line,
            message,
        };
        let mut positions = Vec::new();
        let mut coeffs = Vec::new();
        let mut seen = HashSet::new();
        for part in e.value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let Some((pos, coeff)) = part.split_once(':') else {
                return Err(bad(format!("expected position:coefficient, got {part:?}")));
            };
            let pos: usize = pos
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad position in {part:?}")))?;
            let coeff: f64 = coeff
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad coefficient in {part:?}")))?;
            if !seen.insert(pos) {
                return Err(bad(format!("position {pos} listed twice")));
            }
            positions.push(pos);
            coeffs.push(coeff);
        }
        Ok(Some((positions, coeffs)))
    }

    /// A 16-byte key as 32 hex digits.
    pub fn get_key16(&self, key: &str) -> Result<Option<[u8; 16]>, ConfigError> {
        self.parse_with(key, "32 hex digits", parse_hex_key)
    }
}

/// 32 hex digits -> 16 bytes.
pub fn parse_hex_key(v: &str) -> Option<[u8; 16]> {
    if v.len() != 32 || !v.is_ascii() {
        return None;
    }
    let mut out = [0u8; 16];
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = u8::from_str_radix(&v[2 * i..2 * i + 2], 16).ok()?;
    }
    Some(out)
}
