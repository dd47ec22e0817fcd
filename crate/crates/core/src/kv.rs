//! Flat `key = value` config files.
//!
//! One assignment per line, `#` starts a comment, list values are
//! comma-separated. Keys are unique.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

pub fn parse(source: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (idx, raw) in source.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "line {}: expected `key = value`, got {raw:?}",
                idx + 1
            ))
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", idx + 1)));
        }
        if out
            .insert(key.to_string(), value.trim().to_string())
            .is_some()
        {
            return Err(Error::Config(format!(
                "line {}: duplicate key {key:?}",
                idx + 1
            )));
        }
    }
    Ok(out)
}

pub fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

pub fn parse_list<T: FromStr + Copy + Default, const N: usize>(
    key: &str,
    value: &str,
) -> Result<[T; N]> {
    let parts: Vec<&str> = value.split(',').collect();
    if parts.len() != N {
        return Err(Error::Config(format!(
            "{key}: expected {N} comma-separated values, got {value:?}"
        )));
    }
    let mut out = [T::default(); N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = parse_value(key, p)?;
    }
    Ok(out)
}
