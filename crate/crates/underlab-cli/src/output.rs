//! Output-directory resolution and CSV/JSON writers.
//!
//! All numeric CSV cells go through [`fmt_f64`], which uses Rust's shortest
//! round-trip float formatting, so parsing and re-serializing a written file
//! is the identity.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

/// Resolve the output directory: flag > `UNDERLAB_OUT_DIR` > current dir.
pub fn resolve_out_dir(flag: Option<&Path>) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    if let Ok(dir) = std::env::var("UNDERLAB_OUT_DIR") {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    PathBuf::from(".")
}

/// Shortest representation that round-trips through `f64::from_str`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Write a CSV file from a header and row-stringifier.
pub fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| CliError::Io(path.display().to_string(), e))?;
        }
    }
    let mut file = fs::File::create(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    file.write_all(out.as_bytes())
        .map_err(|e| CliError::Io(path.display().to_string(), e))?;
    Ok(())
}

/// Write pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| CliError::Io(path.display().to_string(), e))?;
        }
    }
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io(path.display().to_string(), e))
}
