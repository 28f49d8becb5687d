//! Per-command record of the configuration and the files produced.

use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub rng_seed: u64,
    /// SHA-256 of the effective configuration in canonical TOML.
    pub config_sha256: String,
    pub inputs: Vec<Artifact>,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> io::Result<(String, u64)> {
    let mut file = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        bytes += n as u64;
    }
    Ok((hex::encode(hasher.finalize()), bytes))
}

fn artifact(path: &Path, relative_to: &Path) -> io::Result<Artifact> {
    let (sha256, bytes) = file_sha256(path)?;
    let shown = path.strip_prefix(relative_to).unwrap_or(path);
    Ok(Artifact {
        path: shown.display().to_string(),
        sha256,
        bytes,
    })
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            rng_seed: config.simulation.rng_seed,
            config_sha256: sha256_hex(config.to_toml().as_bytes()),
            inputs: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<(), CliError> {
        let a = artifact(path, Path::new(""))
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        self.inputs.push(a);
        Ok(())
    }

    /// Writes `<dir>/<command>.manifest.toml` listing `files`, which must
    /// already exist.
    pub fn write(mut self, dir: &Path, files: &[PathBuf]) -> Result<PathBuf, CliError> {
        for f in files {
            self.artifacts
                .push(artifact(f, dir).map_err(|e| CliError::output(f, e))?);
        }
        let path = dir.join(format!("{}.manifest.toml", self.command));
        let text = toml::to_string(&self).expect("manifest serializes");
        fs::write(&path, text).map_err(|e| CliError::output(&path, e))?;
        Ok(path)
    }
}
