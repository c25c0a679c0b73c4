//! `underlab reproduce <manifest>`: replay a recorded run into a temporary
//! directory and verify that every output hash matches.

use std::path::Path;

use crate::manifest::{read_manifest, sha256_file, ARTIFACT_VERSION};
use crate::CliError;

pub fn run(manifest_path: &Path) -> Result<(), CliError> {
    let manifest = read_manifest(manifest_path)?;
    if manifest.artifact_version != ARTIFACT_VERSION {
        return Err(CliError::Usage(format!(
            "manifest was written by artifact version {} but this binary is {ARTIFACT_VERSION}; \
             refusing to compare outputs across versions",
            manifest.artifact_version
        )));
    }
    if manifest.outputs.is_empty() {
        return Err(CliError::Usage("manifest lists no outputs to verify".into()));
    }

    let tmp = std::env::temp_dir().join(format!(
        "underlab-reproduce-{}-{}",
        std::process::id(),
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .expect("clock after epoch")
            .as_nanos()
    ));
    std::fs::create_dir_all(&tmp).map_err(|e| CliError::Io(tmp.display().to_string(), e))?;

    let mut args = manifest.command.clone();
    args.push("--out-dir".to_string());
    args.push(tmp.display().to_string());
    crate::run_command(&args)?;

    let mut mismatches = Vec::new();
    for record in &manifest.outputs {
        let produced = tmp.join(&record.file);
        if !produced.exists() {
            let _ = std::fs::remove_dir_all(&tmp);
            return Err(CliError::Usage(format!(
                "manifest references output '{}' which the re-run did not produce",
                record.file
            )));
        }
        let hash = sha256_file(&produced)?;
        if hash != record.sha256 {
            mismatches.push(format!("{}: {} != recorded {}", record.file, hash, record.sha256));
        }
    }
    let _ = std::fs::remove_dir_all(&tmp);

    if mismatches.is_empty() {
        println!("reproduced {} output(s) bit-identically", manifest.outputs.len());
        Ok(())
    } else {
        Err(CliError::ReproduceMismatch(mismatches.join("; ")))
    }
}
