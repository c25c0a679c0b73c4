//! Run manifests: a reproducibility record for every command invocation.
//!
//! A manifest stores the command line (minus `--out-dir`), the master seed,
//! the full effective config, and the SHA-256 of every output file.
//! `underlab reproduce <manifest>` re-executes the recorded command into a
//! temporary directory and verifies the hashes.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputRecord {
    /// File name relative to the run's output directory.
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    /// Argument vector after the binary name, `--out-dir` stripped.
    pub command: Vec<String>,
    pub master_seed: Option<u64>,
    /// Effective configuration after flag/file/default precedence.
    pub config: serde_json::Value,
    pub outputs: Vec<OutputRecord>,
    pub duration_secs: f64,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Hash `outputs` (paths inside `out_dir`) and write the manifest next to them.
pub fn write_manifest(
    out_dir: &Path,
    manifest_name: &str,
    command: Vec<String>,
    master_seed: Option<u64>,
    config: serde_json::Value,
    outputs: &[PathBuf],
    duration_secs: f64,
) -> Result<PathBuf, CliError> {
    let mut records = Vec::with_capacity(outputs.len());
    for path in outputs {
        let file = path
            .strip_prefix(out_dir)
            .unwrap_or(path)
            .to_string_lossy()
            .into_owned();
        records.push(OutputRecord { file, sha256: sha256_file(path)? });
    }
    let manifest = RunManifest {
        artifact_version: ARTIFACT_VERSION.to_string(),
        command,
        master_seed,
        config,
        outputs: records,
        duration_secs,
    };
    let path = out_dir.join(manifest_name);
    crate::output::write_json(&path, &manifest)?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("manifest {} does not validate: {e}", path.display())))
}

/// Strip `--out-dir <value>` / `--out-dir=<value>` from an argv.
pub fn strip_out_dir(args: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(args.len());
    let mut skip_next = false;
    for arg in args {
        if skip_next {
            skip_next = false;
            continue;
        }
        if arg == "--out-dir" {
            skip_next = true;
            continue;
        }
        if arg.starts_with("--out-dir=") {
            continue;
        }
        out.push(arg.clone());
    }
    out
}
