use std::io::Read;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct InputHash {
    pub path: PathBuf,
    pub sha256: String,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut f = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

pub fn hash_inputs(paths: &[PathBuf]) -> Result<Vec<InputHash>, CliError> {
    let mut sorted = paths.to_vec();
    sorted.sort();
    sorted
        .into_iter()
        .map(|p| {
            Ok(InputHash {
                sha256: sha256_file(&p)?,
                path: p,
            })
        })
        .collect()
}

/// Everything needed to reproduce a command's outputs. Worker count and
/// verbosity are left out since they do not affect results.
#[derive(Debug, Serialize)]
pub struct RunRecord<'a, A: Serialize, C: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub args: &'a A,
    pub config: C,
    pub inputs: Vec<InputHash>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_run<A: Serialize, C: Serialize>(
    path: &Path,
    command: &str,
    args: &A,
    config: C,
    inputs: &[PathBuf],
) -> Result<(), CliError> {
    let record = RunRecord {
        command,
        version: env!("CARGO_PKG_VERSION"),
        args,
        config,
        inputs: hash_inputs(inputs)?,
    };
    write_json(path, &record)
}

/// `<file>.run.json` beside a single output file.
pub fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".run.json");
    out.with_file_name(name)
}
