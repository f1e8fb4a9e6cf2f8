//! Run manifest: configuration hash, timings, warnings, and a checksummed
//! inventory of every file the run wrote.

use std::fs;
use std::path::Path;

use antilimit::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::output::OutputBundle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_hash: String,
    pub wall_time_s: f64,
    pub timings: Vec<(String, f64)>,
    pub warnings: Vec<String>,
    pub outputs: Vec<FileRecord>,
}

pub fn sha256_hex(data: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(data);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Canonical hash of a parsed configuration.
pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    let canon = serde_json::to_string(cfg)
        .map_err(|e| Error::Config(format!("config hashing failed: {e}")))?;
    Ok(sha256_hex(canon.as_bytes()))
}

pub enum WriteOutcome {
    Written(RunManifest),
    /// Same config already ran here and overwrite = false.
    NoOp,
}

/// Write the bundle plus manifest.json into `dir`, honoring the overwrite
/// policy: an unchanged config with overwrite = false is a no-op; a changed
/// config with overwrite = false is refused.
pub fn write_outputs(
    dir: &Path,
    bundle: OutputBundle,
    cfg_hash: &str,
    overwrite: bool,
    wall_time_s: f64,
    timings: Vec<(String, f64)>,
) -> Result<WriteOutcome> {
    let manifest_path = dir.join("manifest.json");
    if manifest_path.exists() {
        let prev: Option<RunManifest> = fs::read(&manifest_path)
            .ok()
            .and_then(|data| serde_json::from_slice(&data).ok());
        if let Some(prev) = prev {
            if !overwrite {
                if prev.config_hash == cfg_hash {
                    return Ok(WriteOutcome::NoOp);
                }
                return Err(Error::Config(format!(
                    "output directory {} holds results of a different config (hash {}); pass \
                     overwrite or a fresh directory",
                    dir.display(),
                    prev.config_hash
                )));
            }
        }
    }
    fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", dir.display())))?;

    let mut outputs = Vec::with_capacity(bundle.files.len());
    for (name, data) in &bundle.files {
        let path = dir.join(name);
        fs::write(&path, data)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
        outputs.push(FileRecord { path: name.clone(), bytes: data.len(), sha256: sha256_hex(data) });
    }
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg_hash.to_string(),
        wall_time_s,
        timings,
        warnings: bundle.warnings,
        outputs,
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(format!("manifest serialization failed: {e}")))?;
    fs::write(&manifest_path, text.as_bytes())
        .map_err(|e| Error::Config(format!("cannot write manifest: {e}")))?;
    Ok(WriteOutcome::Written(manifest))
}
