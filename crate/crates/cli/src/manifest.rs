//! Run manifests: resolved configuration, seeds, versions and file digests.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use platoon_core::kv::KvFile;
use sha2::{Digest, Sha256};

pub const FORMAT: &str = "platoon-manifest-1";
pub const FILE_NAME: &str = "manifest.txt";
const SCENARIO_PREFIX: &str = "scenario.";
const OUTPUT_PREFIX: &str = "output.";

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Ordered key-value manifest for one output set.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub kv: KvFile,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        let mut kv = KvFile::new();
        kv.set("format", FORMAT);
        kv.set("command", command);
        kv.set("tool_version", env!("CARGO_PKG_VERSION"));
        Self { kv }
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.kv.set(key, value);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.kv.get(key)
    }

    /// Records an input file by absolute path and digest.
    pub fn add_input(&mut self, key: &str, path: &Path) -> Result<()> {
        let abs = std::path::absolute(path).with_context(|| format!("resolving {}", path.display()))?;
        self.kv.set(key, abs.display().to_string());
        self.kv.set(&format!("{key}_sha256"), sha256_file(path)?);
        Ok(())
    }

    /// Checks that a recorded input still has its recorded digest.
    pub fn verify_input(&self, key: &str) -> Result<Option<PathBuf>> {
        let Some(path) = self.kv.get(key) else {
            return Ok(None);
        };
        let path = PathBuf::from(path);
        let want = self.kv.require(&format!("{key}_sha256"))?;
        let got = sha256_file(&path)?;
        if got != want {
            bail!("{} changed since the manifest was written (sha256 {got}, expected {want})", path.display());
        }
        Ok(Some(path))
    }

    pub fn set_scenario(&mut self, scenario: &KvFile) {
        for key in scenario.keys() {
            let value = scenario.get(key).unwrap_or_default().to_string();
            self.kv.set(&format!("{SCENARIO_PREFIX}{key}"), value);
        }
    }

    pub fn scenario(&self) -> KvFile {
        let mut kv = KvFile::new();
        for key in self.kv.keys() {
            if let Some(short) = key.strip_prefix(SCENARIO_PREFIX) {
                kv.set(short, self.kv.get(key).unwrap_or_default());
            }
        }
        kv
    }

    pub fn add_output(&mut self, dir: &Path, name: &str) -> Result<()> {
        let digest = sha256_file(&dir.join(name))?;
        self.kv.set(&format!("{OUTPUT_PREFIX}{name}"), digest);
        Ok(())
    }

    pub fn outputs(&self) -> Vec<(String, String)> {
        self.kv
            .keys()
            .filter_map(|k| k.strip_prefix(OUTPUT_PREFIX).map(|n| (n.to_string(), self.kv.get(k).unwrap_or_default().to_string())))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.kv.save(path).with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let kv = KvFile::load(path).with_context(|| format!("reading manifest {}", path.display()))?;
        if kv.get("format") != Some(FORMAT) {
            bail!("{} is not a run manifest", path.display());
        }
        Ok(Self { kv })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_keys_round_trip() {
        let mut sc = KvFile::new();
        sc.set("profile", "rest");
        sc.set("seed", "4");
        let mut m = RunManifest::new("simulate");
        m.set_scenario(&sc);
        assert_eq!(m.scenario(), sc);
        assert_eq!(m.get("scenario.seed"), Some("4"));
    }

    #[test]
    fn digest_detects_changes() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("model.txt");
        std::fs::write(&f, "a").unwrap();
        let mut m = RunManifest::new("simulate");
        m.add_input("model", &f).unwrap();
        assert!(m.verify_input("model").unwrap().is_some());
        std::fs::write(&f, "b").unwrap();
        assert!(m.verify_input("model").is_err());
        assert!(m.verify_input("absent").unwrap().is_none());
    }

    #[test]
    fn known_digest() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("x");
        std::fs::write(&f, "abc").unwrap();
        assert_eq!(sha256_file(&f).unwrap(), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
