use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliResult;
use crate::table::write_json;

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// SHA-256 over the canonical config JSON, the command line and the seed.
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// Not part of `config_hash`. `SOURCE_DATE_EPOCH` overrides the clock.
    pub timestamp_unix: u64,
}

pub fn config_hash(canonical_config: &str, command: &str, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(canonical_config.as_bytes());
    h.update([0u8]);
    h.update(command.as_bytes());
    h.update([0u8]);
    h.update(seed.to_le_bytes());
    hex::encode(h.finalize())
}

fn now() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse().ok()) {
        return t;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl Provenance {
    pub fn new(command: String, canonical_config: &str, seed: u64) -> Self {
        Self {
            tool: TOOL,
            version: VERSION,
            config_hash: config_hash(canonical_config, &command, seed),
            command,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timestamp_unix: now(),
        }
    }

    pub fn write(&self, dir: &Path, stem: &str) -> CliResult<()> {
        write_json(&dir.join(format!("{stem}.provenance.json")), self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_timestamp_but_not_seed() {
        let a = Provenance::new("spectrum".into(), "{}", 1);
        let mut b = Provenance::new("spectrum".into(), "{}", 1);
        b.timestamp_unix += 1000;
        assert_eq!(a.config_hash, b.config_hash);
        assert_ne!(a.config_hash, Provenance::new("spectrum".into(), "{}", 2).config_hash);
        assert_ne!(
            a.config_hash,
            Provenance::new("spectrum".into(), r#"{"seed":1}"#, 1).config_hash
        );
        assert_eq!(a.config_hash.len(), 64);
    }
}
