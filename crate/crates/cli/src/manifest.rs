//! `run.json`: what was run, with which settings, and what it produced.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Path relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub status: String,
    /// Unix time in seconds.
    pub started: f64,
    pub finished: f64,
    pub wall_seconds: f64,
    pub threads: usize,
    pub steps_per_sec: Option<f64>,
    pub config: BTreeMap<String, String>,
    pub outputs: Vec<OutputFile>,
    pub summary: BTreeMap<String, serde_json::Value>,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut hasher = Sha256::new();
    io::copy(&mut fs::File::open(path)?, &mut hasher)?;
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Size and checksum of each of `files`, recorded relative to `dir`.
pub fn inventory(dir: &Path, files: &[PathBuf]) -> io::Result<Vec<OutputFile>> {
    files
        .iter()
        .map(|f| {
            let full = dir.join(f);
            Ok(OutputFile {
                path: f.to_string_lossy().replace('\\', "/"),
                bytes: fs::metadata(&full)?.len(),
                sha256: sha256_file(&full)?,
            })
        })
        .collect()
}

impl RunManifest {
    /// Writes `run.json` under `dir` via a temporary file and a rename.
    pub fn write(&self, dir: &Path) -> io::Result<PathBuf> {
        let path = dir.join(MANIFEST_NAME);
        let tmp = dir.join(format!(".{MANIFEST_NAME}.tmp"));
        {
            let mut f = fs::File::create(&tmp)?;
            serde_json::to_writer_pretty(&mut f, self)?;
            f.write_all(b"\n")?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_NAME))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Files whose size or checksum no longer matches the inventory.
    pub fn verify(&self, dir: &Path) -> Vec<String> {
        self.outputs
            .iter()
            .filter(|o| {
                let full = dir.join(&o.path);
                let size_ok = fs::metadata(&full).map(|m| m.len() == o.bytes).unwrap_or(false);
                !(size_ok && sha256_file(&full).map(|h| h == o.sha256).unwrap_or(false))
            })
            .map(|o| o.path.clone())
            .collect()
    }
}
