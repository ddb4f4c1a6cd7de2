//! Shared domain types: intensity labels, source description, pattern keys and
//! the line-oriented experiment configuration file.
//!
//! A pattern key is the tuple of the `k` most recent intensity labels, ordered
//! oldest to current, so the last entry is always the pulse being detected.
//! Keys are stored as their radix-`p` integer index so that counters are flat
//! arrays of length `p^k`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest correlation length accepted unless the configuration raises it.
pub const DEFAULT_MAX_K: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityLabel {
    pub id: usize,
    pub name: String,
    /// Mean photon number per pulse.
    pub nominal_mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub num_sources: usize,
    pub labels: Vec<IntensityLabel>,
    pub correlation_length: usize,
    /// Emission probability per label, same order as `labels`.
    pub ratios: Vec<f64>,
    pub target_source: usize,
}

impl SourceSpec {
    /// Builds a single-source spec from `(name, nominal_mu, ratio)` triples.
    /// Ratios are normalized, so `3:7:35:55` style weights are accepted.
    pub fn new(labels: &[(&str, f64, f64)], k: usize) -> Result<Self> {
        let total: f64 = labels.iter().map(|l| l.2).sum();
        let spec = SourceSpec {
            num_sources: 1,
            labels: labels
                .iter()
                .enumerate()
                .map(|(id, (name, mu, _))| IntensityLabel { id, name: name.to_string(), nominal_mu: *mu })
                .collect(),
            correlation_length: k,
            ratios: labels.iter().map(|l| l.2 / total).collect(),
            target_source: 0,
        };
        spec.validate(DEFAULT_MAX_K)?;
        Ok(spec)
    }

    pub fn p(&self) -> usize {
        self.labels.len()
    }

    pub fn k(&self) -> usize {
        self.correlation_length
    }

    pub fn num_groups(&self) -> usize {
        num_groups(self.p(), self.k()).expect("validated spec")
    }

    pub fn label_names(&self) -> Vec<String> {
        self.labels.iter().map(|l| l.name.clone()).collect()
    }

    pub fn nominal_mus(&self) -> Vec<f64> {
        self.labels.iter().map(|l| l.nominal_mu).collect()
    }

    pub fn label_id(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l.name == name)
    }

    pub fn validate(&self, max_k: usize) -> Result<()> {
        let p = self.labels.len();
        if p < 2 {
            return Err(Error::config(format!("need at least 2 intensity labels, got {p}")));
        }
        if self.num_sources < 1 {
            return Err(Error::config("number of sources must be >= 1"));
        }
        if self.target_source >= self.num_sources {
            return Err(Error::config(format!(
                "target source {} out of range for {} sources",
                self.target_source, self.num_sources
            )));
        }
        if self.correlation_length < 1 || self.correlation_length > max_k {
            return Err(Error::config(format!(
                "correlation length k = {} outside [1, {max_k}]",
                self.correlation_length
            )));
        }
        num_groups(p, self.correlation_length)?;
        for (i, l) in self.labels.iter().enumerate() {
            if l.id != i {
                return Err(Error::config(format!("label '{}' has id {} but position {i}", l.name, l.id)));
            }
            if !(l.nominal_mu >= 0.0) || !l.nominal_mu.is_finite() {
                return Err(Error::config(format!("label '{}' has invalid nominal mu {}", l.name, l.nominal_mu)));
            }
            if self.labels[..i].iter().any(|o| o.name == l.name) {
                return Err(Error::config(format!("duplicate label name '{}'", l.name)));
            }
        }
        if self.ratios.len() != p {
            return Err(Error::config("one ratio per label required"));
        }
        if self.ratios.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::config("ratios must all be > 0"));
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::config(format!("ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Overall single-photon detection efficiency, in (0, 1].
    pub eta: f64,
    pub repetitions: u64,
    pub sequence_length: usize,
    pub rng_seed: u64,
    pub shards: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::config(format!("eta = {} outside (0, 1]", self.eta)));
        }
        if self.repetitions < 1 || self.sequence_length < 1 || self.shards < 1 {
            return Err(Error::config("repetitions, sequence_length and shards must be >= 1"));
        }
        Ok(())
    }
}

/// Number of pattern groups `p^k`, failing on overflow.
pub fn num_groups(p: usize, k: usize) -> Result<usize> {
    let k32 = u32::try_from(k).map_err(|_| Error::domain("k too large"))?;
    p.checked_pow(k32)
        .ok_or_else(|| Error::domain(format!("p^k = {p}^{k} overflows")))
}

/// Radix-`p` index of a pattern ordered oldest to current.
pub fn encode_pattern(labels: &[usize], p: usize) -> Result<usize> {
    if labels.is_empty() {
        return Err(Error::domain("pattern must have length k >= 1"));
    }
    num_groups(p, labels.len())?;
    let mut index = 0usize;
    for (pos, &id) in labels.iter().enumerate() {
        if id >= p {
            return Err(Error::domain(format!("label id {id} at position {pos} is outside [0, {p})")));
        }
        index = index * p + id;
    }
    Ok(index)
}

pub fn decode_pattern(index: usize, p: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::domain("k must be >= 1"));
    }
    let n = num_groups(p, k)?;
    if index >= n {
        return Err(Error::domain(format!("pattern index {index} outside [0, {n})")));
    }
    let mut out = vec![0usize; k];
    let mut rest = index;
    for slot in out.iter_mut().rev() {
        *slot = rest % p;
        rest /= p;
    }
    Ok(out)
}

/// A pattern group, kept as its index together with the alphabet shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatternKey {
    pub index: usize,
    pub p: usize,
    pub k: usize,
}

impl PatternKey {
    pub fn new(labels: &[usize], p: usize) -> Result<Self> {
        Ok(PatternKey { index: encode_pattern(labels, p)?, p, k: labels.len() })
    }

    pub fn from_index(index: usize, p: usize, k: usize) -> Result<Self> {
        decode_pattern(index, p, k)?;
        Ok(PatternKey { index, p, k })
    }

    pub fn labels(&self) -> Vec<usize> {
        decode_pattern(self.index, self.p, self.k).expect("key constructed valid")
    }

    /// The label of the k-th (current) pulse.
    pub fn current(&self) -> usize {
        self.index % self.p
    }

    /// Index of the length-(k-1) predecessor prefix.
    pub fn predecessor_index(&self) -> usize {
        self.index / self.p
    }

    /// Joins label names with `-`, e.g. `V-S`.
    pub fn name(&self, names: &[String]) -> String {
        self.labels()
            .iter()
            .map(|&id| names.get(id).cloned().unwrap_or_else(|| id.to_string()))
            .collect::<Vec<_>>()
            .join("-")
    }

    /// Inverse of [`PatternKey::name`].
    pub fn parse(s: &str, names: &[String], k: usize) -> Result<Self> {
        let ids = s
            .split('-')
            .map(|part| {
                names
                    .iter()
                    .position(|n| n == part.trim())
                    .ok_or_else(|| Error::domain(format!("unknown label '{part}' in pattern '{s}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        if ids.len() != k {
            return Err(Error::domain(format!("pattern '{s}' has length {}, expected {k}", ids.len())));
        }
        PatternKey::new(&ids, names.len())
    }
}

impl fmt::Display for PatternKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.labels().iter().map(|l| l.to_string()).collect();
        write!(f, "{}", parts.join("-"))
    }
}

/// Everything read from a `key = value` configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub source: SourceSpec,
    pub experiment: ExperimentConfig,
    pub max_k: usize,
}

impl Config {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Parses the line-oriented format:
    ///
    /// ```text
    /// # BB84 source
    /// p = 4
    /// k = 2
    /// eta = 0.1
    /// label V 0.001 3
    /// ```
    ///
    /// Label ids follow declaration order.
    pub fn parse(text: &str) -> Result<Self> {
        let mut p: Option<usize> = None;
        let mut k = 2usize;
        let mut l = 1usize;
        let mut target = 0usize;
        let mut eta = 1.0f64;
        let mut reps = 1u64;
        let mut seed = 0u64;
        let mut shards = 1usize;
        let mut seq_len: Option<usize> = None;
        let mut max_k = DEFAULT_MAX_K;
        let mut labels: Vec<(String, f64, f64)> = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("label") {
                if rest.starts_with(char::is_whitespace) {
                    let fields: Vec<&str> = rest.split_whitespace().collect();
                    if fields.len() != 3 {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: "expected `label <name> <nominal_mu> <ratio>`".into(),
                        });
                    }
                    let mu = parse_num::<f64>(fields[1], line_no)?;
                    let ratio = parse_num::<f64>(fields[2], line_no)?;
                    labels.push((fields[0].to_string(), mu, ratio));
                    continue;
                }
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected `key = value`, got '{line}'"),
            })?;
            let value = value.trim();
            match key.trim() {
                "p" => p = Some(parse_num(value, line_no)?),
                "k" => k = parse_num(value, line_no)?,
                "l" => l = parse_num(value, line_no)?,
                "target" => target = parse_num(value, line_no)?,
                "eta" => eta = parse_num(value, line_no)?,
                "repetitions" => reps = parse_num::<f64>(value, line_no)? as u64,
                "seed" => seed = parse_num(value, line_no)?,
                "shards" => shards = parse_num(value, line_no)?,
                "sequence_length" => seq_len = Some(parse_num(value, line_no)?),
                "max_k" => max_k = parse_num(value, line_no)?,
                other => {
                    return Err(Error::Parse { line: line_no, msg: format!("unknown key '{other}'") });
                }
            }
        }

        if let Some(p) = p {
            if p != labels.len() {
                return Err(Error::config(format!("p = {p} but {} labels declared", labels.len())));
            }
        }
        let total: f64 = labels.iter().map(|x| x.2).sum();
        if !(total > 0.0) {
            return Err(Error::config("label ratios must be positive"));
        }
        let source = SourceSpec {
            num_sources: l,
            labels: labels
                .iter()
                .enumerate()
                .map(|(id, (name, mu, _))| IntensityLabel { id, name: name.clone(), nominal_mu: *mu })
                .collect(),
            correlation_length: k,
            ratios: labels.iter().map(|x| x.2 / total).collect(),
            target_source: target,
        };
        source.validate(max_k)?;
        let experiment = ExperimentConfig {
            eta,
            repetitions: reps,
            sequence_length: seq_len.unwrap_or(10_000),
            rng_seed: seed,
            shards,
        };
        experiment.validate()?;
        Ok(Config { source, experiment, max_k })
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.trim()
        .parse::<T>()
        .map_err(|_| Error::Parse { line, msg: format!("invalid number '{s}'") })
}
