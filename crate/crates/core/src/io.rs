//! File helpers: atomic writes and a line cursor for the text formats.
//!
//! All float serialization in this crate goes through Rust's shortest
//! round-trip formatting, so writing with `{}` and parsing with
//! `str::parse::<f64>` is lossless.

use std::path::Path;

use crate::error::{Error, Result};

/// Writes via a temp file in the same directory followed by a rename, so a
/// crash never leaves a partially written output at the destination.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp{}",
        path.extension().and_then(|e| e.to_str()).unwrap_or(""),
        std::process::id()
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn parse_f64(tok: &str) -> std::result::Result<f64, String> {
    let v: f64 = tok.parse().map_err(|_| format!("bad float {tok:?}"))?;
    if !v.is_finite() {
        return Err(format!("non-finite float {tok:?}"));
    }
    Ok(v)
}

/// Line-by-line cursor that tracks position for parse errors.
pub struct ParseCursor<'a> {
    lines: std::str::Lines<'a>,
    pub line_no: usize,
}

impl<'a> ParseCursor<'a> {
    pub fn new(text: &'a str) -> Self {
        Self { lines: text.lines(), line_no: 0 }
    }

    pub fn next_line(&mut self) -> Result<&'a str> {
        loop {
            match self.lines.next() {
                Some(l) => {
                    self.line_no += 1;
                    let trimmed = l.trim_end();
                    if trimmed.is_empty() {
                        continue;
                    }
                    return Ok(trimmed);
                }
                None => {
                    return Err(Error::Parse {
                        line: self.line_no + 1,
                        msg: "unexpected end of file".into(),
                    })
                }
            }
        }
    }

    pub fn try_next_line(&mut self) -> Option<&'a str> {
        loop {
            match self.lines.next() {
                Some(l) => {
                    self.line_no += 1;
                    let trimmed = l.trim_end();
                    if trimmed.is_empty() {
                        continue;
                    }
                    return Some(trimmed);
                }
                None => return None,
            }
        }
    }

    pub fn expect_line(&mut self, expected: &str) -> Result<()> {
        let line = self.next_line()?;
        if line != expected {
            return Err(self.error(format!("expected {expected:?}, got {line:?}")));
        }
        Ok(())
    }

    /// Parses a line of the form "<key> <value>".
    pub fn field_after<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let line = self.next_line()?;
        let rest = line
            .strip_prefix(key)
            .ok_or_else(|| self.error(format!("expected {key:?} line, got {line:?}")))?;
        self.parse_field(rest.trim())
    }

    pub fn parse_field<T: std::str::FromStr>(&self, tok: &str) -> Result<T> {
        tok.parse()
            .map_err(|_| self.error(format!("could not parse {tok:?}")))
    }

    pub fn error(&self, msg: String) -> Error {
        Error::Parse { line: self.line_no, msg }
    }
}

/// Deterministic per-purpose seed derivation from a single run seed.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    let mut h = 0x9e3779b97f4a7c15u64 ^ seed;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0xbf58476d1ce4e5b9);
        h ^= h >> 27;
    }
    h ^= index.wrapping_mul(0x94d049bb133111eb);
    h ^= h >> 31;
    h.wrapping_mul(0xd6e8feb86659fd93)
}
