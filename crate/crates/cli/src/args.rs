//! Small parsers shared by the subcommands.

use std::path::Path;

use anyhow::{Context, Result};
use corrkit_core::model::{Config, PatternKey};

use crate::usage;

/// `NAME=VALUE` pairs such as `S-D1=0.05` or `V=0.02`.
pub fn parse_assign(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got '{s}'"))?;
    let v = v.trim().parse::<f64>().map_err(|_| format!("invalid number in '{s}'"))?;
    Ok((k.trim().to_string(), v))
}

pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| usage(format!("invalid number '{x}' in list '{s}'"))))
        .collect()
}

pub fn parse_names(s: &str) -> Vec<String> {
    s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn load_config(path: Option<&Path>) -> Result<Option<Config>> {
    path.map(|p| Config::from_path(p).with_context(|| format!("config {}", p.display()))).transpose()
}

/// Label names from `--names`, else the config, else the BB84 default.
pub fn label_names(names: Option<&str>, config: Option<&Config>) -> Vec<String> {
    match (names, config) {
        (Some(n), _) => parse_names(n),
        (None, Some(c)) => c.source.label_names(),
        (None, None) => corrkit_core::fixtures::bb84_names(),
    }
}

pub fn label_index(name: &str, names: &[String]) -> Result<usize> {
    names.iter().position(|n| n == name).ok_or_else(|| usage(format!("unknown label '{name}' (labels: {})", names.join(","))))
}

/// Splits a `k`-label pattern into its predecessors and current label.
pub fn pattern_parts(pattern: &str, names: &[String], k: usize) -> Result<(Vec<usize>, usize)> {
    let key = PatternKey::parse(pattern, names, k).map_err(|e| usage(format!("pattern '{pattern}': {e}")))?;
    let labels = key.labels();
    let (cur, prev) = labels.split_last().expect("k >= 1");
    Ok((prev.to_vec(), *cur))
}
