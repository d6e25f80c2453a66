//! Writing results: stdout, or a file replaced atomically.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, Result};

/// Writes `contents` to a temporary file next to `path` and renames it
/// into place, so a failed run never leaves a partial file behind.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let shown = path.display().to_string();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| CliError::io(&shown, e))?;
    tmp.write_all(contents).map_err(|e| CliError::io(&shown, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(&shown, e))?;
    tmp.persist(path).map_err(|e| CliError::io(&shown, e.error))?;
    Ok(())
}

/// `results.csv` -> `results.csv.meta.json`
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    path.with_file_name(name)
}

/// Run metadata kept out of the data file so the data stays byte-stable.
#[derive(Debug, Serialize)]
pub struct Metadata<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub args: Vec<String>,
    pub threads: usize,
    pub created_unix: u64,
    pub spec: &'a T,
}

impl<'a, T: Serialize> Metadata<'a, T> {
    pub fn new(command: &'a str, spec: &'a T) -> Self {
        Self {
            tool: "bdt",
            version: env!("CARGO_PKG_VERSION"),
            command,
            args: std::env::args().collect(),
            threads: rayon::current_num_threads(),
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            spec,
        }
    }
}

/// Sends `contents` to `out` (with a metadata sidecar) or to stdout.
pub fn emit<T: Serialize>(out: Option<&Path>, contents: &str, meta: &Metadata<'_, T>) -> Result<()> {
    match out {
        Some(path) => {
            write_atomic(path, contents.as_bytes())?;
            let json = serde_json::to_string_pretty(meta).expect("metadata serializes") + "\n";
            write_atomic(&sidecar_path(path), json.as_bytes())
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(contents.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::io("stdout", e))
        }
    }
}
