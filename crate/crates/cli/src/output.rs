//! Atomic output files.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::config::RunConfig;
use crate::error::CliError;

/// Full output record: tool version, effective configuration and result.
#[derive(Debug, Serialize)]
pub struct Record<'a, T: Serialize> {
    pub version: &'static str,
    pub command: String,
    pub config: &'a RunConfig,
    pub result: T,
}

impl<'a, T: Serialize> Record<'a, T> {
    pub fn new(config: &'a RunConfig, result: T) -> Self {
        Record {
            version: driftlab_core::VERSION,
            command: config.command.to_string(),
            config,
            result,
        }
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so the target is never left half written.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    fill(tmp.as_file_mut()).map_err(|e| CliError::io(path, e))?;
    tmp.as_file_mut().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    })
}

/// `out.csv` -> `out.csv.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = OsString::from(path.as_os_str());
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn csv_error(e: csv::Error) -> std::io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => std::io::Error::other(format!("{other:?}")),
    }
}
