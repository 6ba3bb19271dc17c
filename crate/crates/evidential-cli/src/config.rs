//! Flat `key = value` config files, flag overrides, and run manifests.

use evidential::{Error, Result};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

/// Ordered key/value map parsed from a config file. Keys are validated by
/// the consuming command against its known set.
#[derive(Debug, Clone, Default)]
pub struct KvConfig {
    values: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<KvConfig> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(KvConfig { values })
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<KvConfig> {
        KvConfig::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.values.insert(key.to_string(), value);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.values
            .get(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| Error::Config(format!("key `{key}`: bad float `{v}`: {e}")))
            })
            .transpose()
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.values
            .get(key)
            .map(|v| {
                v.parse::<usize>()
                    .map_err(|e| Error::Config(format!("key `{key}`: bad integer `{v}`: {e}")))
            })
            .transpose()
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        self.values
            .get(key)
            .map(|v| {
                v.parse::<u64>()
                    .map_err(|e| Error::Config(format!("key `{key}`: bad integer `{v}`: {e}")))
            })
            .transpose()
    }

    /// Reject keys outside the command's vocabulary, naming the offender.
    pub fn ensure_known_keys(&self, known: &[&str]) -> Result<()> {
        for key in self.values.keys() {
            if !known.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown config key `{key}`")));
            }
        }
        Ok(())
    }

    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

/// Write `manifest.txt`: the resolved configuration plus a fingerprint of
/// it and the crate version. Content is deterministic.
pub fn write_manifest(out_dir: &Path, command: &str, cfg: &KvConfig) -> Result<()> {
    let body = format!(
        "command = {command}\nversion = {}\n{}",
        env!("CARGO_PKG_VERSION"),
        cfg.canonical_text()
    );
    let digest = Sha256::digest(body.as_bytes());
    let fingerprint = digest.iter().map(|b| format!("{b:02x}")).collect::<String>();
    std::fs::write(
        out_dir.join("manifest.txt"),
        format!("{body}fingerprint = {fingerprint}\n"),
    )?;
    Ok(())
}

/// Output directory resolution: explicit flag, then the environment
/// variable, then `./evidential-out`.
pub const OUT_DIR_ENV: &str = "EVIDENTIAL_OUT_DIR";

pub fn resolve_out_dir(flag: Option<&str>) -> std::path::PathBuf {
    if let Some(dir) = flag {
        return dir.into();
    }
    if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
        if !dir.is_empty() {
            return dir.into();
        }
    }
    "evidential-out".into()
}

pub fn parse_seed_list(s: &str) -> Result<Vec<u64>> {
    let seeds: Result<Vec<u64>> = s
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<u64>()
                .map_err(|e| Error::Config(format!("bad seed `{}`: {e}", tok.trim())))
        })
        .collect();
    let seeds = seeds?;
    if seeds.is_empty() {
        return Err(Error::Config("seed list is empty".into()));
    }
    Ok(seeds)
}

pub fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    if s.trim().is_empty() {
        return Ok(vec![]);
    }
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<usize>()
                .map_err(|e| Error::Config(format!("bad integer `{}`: {e}", tok.trim())))
        })
        .collect()
}
