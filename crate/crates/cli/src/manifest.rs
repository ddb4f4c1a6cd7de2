//! Run manifests: what produced an output file.
//!
//! The manifest hash covers everything except the timestamp, so reruns on
//! the same inputs give byte-identical outputs.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Option<String>,
    pub inputs: Vec<InputDigest>,
    pub seed: Option<u64>,
    pub version: String,
    pub parameters: serde_json::Value,
    #[serde(skip)]
    pub created_unix: u64,
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(subcommand: &str, parameters: impl Serialize) -> Result<Self> {
        Ok(RunManifest {
            subcommand: subcommand.to_string(),
            config: None,
            inputs: Vec::new(),
            seed: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
            parameters: serde_json::to_value(parameters)?,
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        })
    }

    pub fn config(mut self, path: Option<&Path>) -> Result<Self> {
        if let Some(p) = path {
            self.config = Some(p.display().to_string());
            self = self.input(p)?;
        }
        Ok(self)
    }

    pub fn input(mut self, path: &Path) -> Result<Self> {
        self.inputs.push(InputDigest { path: path.display().to_string(), sha256: file_digest(path)? });
        Ok(self)
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("manifest serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    /// Full record including the timestamp and the hash.
    pub fn sidecar_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("manifest serializes");
        let obj = v.as_object_mut().expect("object");
        obj.insert("created_unix".into(), self.created_unix.into());
        obj.insert("hash".into(), self.hash().into());
        serde_json::to_string_pretty(&v).expect("json") + "\n"
    }
}

fn write_to(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

/// CSV with a leading `# manifest: <hash>` line.
pub fn write_csv(path: Option<&Path>, manifest: &RunManifest, body: &str) -> Result<()> {
    write_to(path, &format!("# manifest: {}\n{body}", manifest.hash()))
}

/// JSON object with a `manifest` field added.
pub fn write_json(path: Option<&Path>, manifest: &RunManifest, value: impl Serialize) -> Result<()> {
    let mut v = serde_json::to_value(value)?;
    match v.as_object_mut() {
        Some(obj) => {
            obj.insert("manifest".into(), manifest.hash().into());
        }
        None => {
            let mut obj = BTreeMap::new();
            obj.insert("manifest".to_string(), serde_json::Value::from(manifest.hash()));
            obj.insert("data".to_string(), v);
            v = serde_json::to_value(obj)?;
        }
    }
    write_to(path, &(serde_json::to_string_pretty(&v)? + "\n"))
}

/// Formats that must stay line-exact get `<file>.manifest.json` next to them.
pub fn write_sidecar(path: &Path, manifest: &RunManifest) -> Result<()> {
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest.json");
    write_to(Some(Path::new(&name)), &manifest.sidecar_json())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_timestamp_and_tracks_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("in.txt");
        std::fs::write(&f, "1\n2\n").unwrap();
        let mut a = RunManifest::new("x", serde_json::json!({"k": 2})).unwrap().input(&f).unwrap();
        let mut b = a.clone();
        a.created_unix = 1;
        b.created_unix = 2;
        assert_eq!(a.hash(), b.hash());
        std::fs::write(&f, "1\n3\n").unwrap();
        let c = RunManifest::new("x", serde_json::json!({"k": 2})).unwrap().input(&f).unwrap();
        assert_ne!(a.hash(), c.hash());
        assert!(a.sidecar_json().contains("\"created_unix\": 1"));
    }
}
