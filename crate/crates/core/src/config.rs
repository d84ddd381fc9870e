//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` and `;` start comments and `[section]`
//! headers are accepted but ignored, so a file may be grouped visually.
//! Numeric values understand `pi`, `a/b`, `a*b` and `b^e`, which keeps
//! resolution ladders readable (`1/80, 1/160`, `pi/40`, `2^-11`).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Parsed key-value pairs, later entries overriding earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Configuration(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
            })?;
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().to_ascii_lowercase();
        if key.is_empty() {
            return Err(Error::Configuration("empty configuration key".into()));
        }
        self.entries.insert(key, value.trim().to_string());
        Ok(())
    }

    /// Apply a `key=value` override from the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Configuration(format!("override `{assignment}` is not `key=value`")))?;
        self.set(k, v)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Configuration(format!("missing required key `{key}`")))
    }

    pub fn number(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| parse_number(v).map_err(|e| annotate(key, e)))
            .transpose()
    }

    pub fn number_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.number(key)?.unwrap_or(default))
    }

    /// Comma- or whitespace-separated numbers; a missing key is an empty list.
    pub fn numbers(&self, key: &str) -> Result<Vec<f64>> {
        match self.get(key) {
            None => Ok(Vec::new()),
            Some(v) => split_list(v)
                .map(|item| parse_number(item).map_err(|e| annotate(key, e)))
                .collect(),
        }
    }

    pub fn parsed<T: FromStr<Err = Error>>(&self, key: &str) -> Result<Option<T>> {
        self.get(key).map(str::parse).transpose()
    }

    pub fn parsed_list<T: FromStr<Err = Error>>(&self, key: &str) -> Result<Vec<T>> {
        match self.get(key) {
            None => Ok(Vec::new()),
            Some(v) => split_list(v).map(str::parse).collect(),
        }
    }

    pub fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key).map(|v| v.to_ascii_lowercase()) {
            None => Ok(default),
            Some(v) => match v.as_str() {
                "1" | "true" | "yes" | "on" => Ok(true),
                "0" | "false" | "no" | "off" => Ok(false),
                _ => Err(Error::Configuration(format!("`{key}` expects a boolean, got `{v}`"))),
            },
        }
    }

    pub fn integer_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Configuration(format!("`{key}` expects a non-negative integer, got `{v}`"))),
        }
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find(['#', ';']) {
        Some(i) => &line[..i],
        None => line,
    }
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
}

fn annotate(key: &str, e: Error) -> Error {
    match e {
        Error::Configuration(msg) => Error::Configuration(format!("`{key}`: {msg}")),
        other => other,
    }
}

fn parse_atom(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::Configuration(format!("cannot parse number `{s}`"));
    if let Some((base, exp)) = s.split_once('^') {
        return Ok(parse_atom(base)?.powf(exp.trim().parse::<f64>().map_err(|_| bad())?));
    }
    if s.eq_ignore_ascii_case("pi") {
        return Ok(PI);
    }
    s.parse::<f64>().map_err(|_| bad())
}

/// Evaluate a number written as atoms joined by `*` and `/`, left to right.
pub fn parse_number(s: &str) -> Result<f64> {
    let s = s.trim();
    if s.is_empty() {
        return Err(Error::Configuration("empty number".into()));
    }
    let mut value = 1.0;
    let mut op = '*';
    let mut start = 0;
    for (i, c) in s.char_indices().chain(std::iter::once((s.len(), '*'))) {
        if c == '*' || c == '/' {
            let atom = parse_atom(&s[start..i])?;
            value = if op == '*' { value * atom } else { value / atom };
            op = c;
            start = i + 1;
        }
    }
    if !value.is_finite() {
        return Err(Error::Configuration(format!("`{s}` is not finite")));
    }
    Ok(value)
}
