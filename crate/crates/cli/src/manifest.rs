use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct Versions {
    pub carlate: &'static str,
    pub cli: &'static str,
}

/// Provenance record written next to a result file.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    /// SHA-256 over every input that can change the result bytes.
    pub config_digest: String,
    pub seed: Option<u64>,
    pub versions: Versions,
    pub started_at: String,
    pub finished_at: String,
    pub output: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str, digest: String, seed: Option<u64>, started: DateTime<Utc>, output: Option<&Path>) -> Self {
        Self {
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            config_digest: digest,
            seed,
            versions: Versions {
                carlate: carlate::VERSION,
                cli: env!("CARGO_PKG_VERSION"),
            },
            started_at: stamp(started),
            finished_at: stamp(Utc::now()),
            output: output.map(|p| p.display().to_string()),
        }
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

fn stamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Hex SHA-256 of length-prefixed parts, so adjacent parts cannot alias.
pub fn digest(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Where the manifest goes: an explicit path, else `<out>.manifest.json`.
pub fn sidecar(out: Option<&Path>, explicit: Option<&Path>) -> Option<PathBuf> {
    explicit.map(Path::to_path_buf).or_else(|| {
        out.map(|o| {
            let mut s = o.as_os_str().to_owned();
            s.push(".manifest.json");
            PathBuf::from(s)
        })
    })
}
