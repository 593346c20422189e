//! Run directories, key-value text files and input digests.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{JanusError, Result};

/// Environment variable naming the parent of auto-named run directories.
pub const RUN_ROOT_ENV: &str = "JANUS_RUN_ROOT";
const DEFAULT_RUN_ROOT: &str = "runs";

/// Ordered `key = value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvFile {
    entries: Vec<(String, String)>,
}

impl KvFile {
    pub fn push(&mut self, key: impl Into<String>, value: impl Display) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn extend(&mut self, other: KvFile) {
        self.entries.extend(other.entries);
    }

    /// First value stored under `key`.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self
            .get(key)
            .ok_or_else(|| JanusError::InvalidInput(format!("manifest lacks `{key}`")))?;
        v.parse()
            .map_err(|_| JanusError::InvalidInput(format!("manifest `{key}` has bad value `{v}`")))
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn from_text(text: &str) -> Self {
        let entries = text
            .lines()
            .filter(|l| !l.trim_start().starts_with('#'))
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect();
        KvFile { entries }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| JanusError::io(path, e))?;
        Ok(Self::from_text(&text))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| JanusError::io(path, e))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| JanusError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Creates the output directory. An explicit path must not exist yet or be
/// an empty directory; without one, the first free `<root>/<command>-NNN`
/// is used.
pub fn fresh_run_dir(explicit: Option<&Path>, command: &str) -> Result<PathBuf> {
    let dir = match explicit {
        Some(p) => {
            if p.exists() {
                let empty = fs::read_dir(p)
                    .map_err(|e| JanusError::io(p, e))?
                    .next()
                    .is_none();
                if !empty {
                    return Err(JanusError::InvalidInput(format!(
                        "output directory {} already exists and is not empty",
                        p.display()
                    )));
                }
            }
            p.to_path_buf()
        }
        None => {
            let root = std::env::var_os(RUN_ROOT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_RUN_ROOT));
            (0..)
                .map(|i| root.join(format!("{command}-{i:03}")))
                .find(|p| !p.exists())
                .expect("unbounded search")
        }
    };
    fs::create_dir_all(&dir).map_err(|e| JanusError::io(&dir, e))?;
    Ok(dir)
}

/// Provenance written as `manifest.txt` into every output directory.
#[derive(Debug, Clone, Default)]
pub struct RunManifest {
    pub command_line: String,
    pub config: Vec<(String, String)>,
    /// `(label, sha256)` per input file.
    pub digests: Vec<(String, String)>,
    pub seeds: Vec<u64>,
    pub wall_seconds: f64,
    /// Command-specific lines such as output shapes.
    pub extra: KvFile,
}

impl RunManifest {
    pub fn new(command_line: String) -> Self {
        RunManifest {
            command_line,
            ..RunManifest::default()
        }
    }

    pub fn digest_input(&mut self, label: &str, path: &Path) -> Result<()> {
        self.digests.push((label.to_string(), sha256_file(path)?));
        Ok(())
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::default();
        kv.push("command", &self.command_line);
        kv.push("version", env!("CARGO_PKG_VERSION"));
        kv.push("wall_seconds", format!("{:.3}", self.wall_seconds));
        if !self.seeds.is_empty() {
            let s: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
            kv.push("seeds", s.join(","));
        }
        for (k, v) in &self.config {
            kv.push(format!("config.{k}"), v);
        }
        for (k, v) in &self.digests {
            kv.push(format!("input.{k}.sha256"), v);
        }
        kv.extend(self.extra.clone());
        kv
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        self.to_kv().write(&dir.join("manifest.txt"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn kv_round_trip_keeps_order() {
        let mut kv = KvFile::default();
        kv.push("b", 2);
        kv.push("a", "x y");
        let back = KvFile::from_text(&kv.to_text());
        assert_eq!(back, kv);
        assert_eq!(back.get("a"), Some("x y"));
        assert_eq!(back.parse::<u32>("b").unwrap(), 2);
    }

    #[test]
    fn explicit_dir_must_be_fresh() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("out");
        assert_eq!(fresh_run_dir(Some(&p), "x").unwrap(), p);
        fs::write(p.join("f"), "1").unwrap();
        assert!(fresh_run_dir(Some(&p), "x").is_err());
    }
}
