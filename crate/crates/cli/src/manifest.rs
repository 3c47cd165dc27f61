//! Run manifest: one JSON document per command invocation listing every
//! artifact with its SHA-256 checksum. Written after all other outputs so
//! the checksums are final; the manifest never lists itself.

use crate::CliResult;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Serialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl OutputRecord {
    pub fn for_bytes(name: &str, bytes: &[u8]) -> OutputRecord {
        OutputRecord {
            path: name.to_string(),
            sha256: hex_digest(bytes),
            bytes: bytes.len() as u64,
        }
    }

    pub fn for_file(name: &str, path: &Path) -> CliResult<OutputRecord> {
        let bytes = fs::read(path)?;
        Ok(OutputRecord::for_bytes(name, &bytes))
    }
}

#[derive(Serialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    pub outputs: Vec<OutputRecord>,
}

impl Manifest {
    pub fn new(
        command: &str,
        started_unix: f64,
        scenario: Option<String>,
        outputs: Vec<OutputRecord>,
    ) -> Manifest {
        Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            started_unix,
            finished_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0),
            status: "ok".to_string(),
            scenario,
            outputs,
        }
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| crate::CliError::validation(format!("manifest encoding: {e}")))?;
        fs::write(dir.join(MANIFEST_NAME), json)?;
        Ok(())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
