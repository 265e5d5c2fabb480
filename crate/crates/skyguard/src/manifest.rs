use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{self, Error, Result};

#[derive(Debug, Serialize)]
struct FileHash {
    path: String,
    sha256: String,
}

/// What is needed to re-run a command: the subcommand, the effective
/// configuration (which includes the seed) and hashes of every input.
/// The output directory is deliberately left out so that reruns into
/// different directories stay byte-identical.
#[derive(Debug, Serialize)]
pub struct Manifest {
    command: String,
    seed: u64,
    config: serde_json::Map<String, serde_json::Value>,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            seed: cfg.seed,
            config: cfg
                .entries()
                .into_iter()
                .map(|(k, v)| (k, serde_json::Value::String(v)))
                .collect(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.inputs.push(FileHash {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn render(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialize") + "\n"
    }
}

/// Collects output files under one directory and finishes with
/// `manifest.json`.
pub struct OutputDir {
    dir: PathBuf,
    manifest: Manifest,
}

impl OutputDir {
    pub fn new(dir: &Path, manifest: Manifest) -> Self {
        Self {
            dir: dir.to_path_buf(),
            manifest,
        }
    }

    pub fn manifest_mut(&mut self) -> &mut Manifest {
        &mut self.manifest
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        error::write(&path, contents)?;
        self.manifest.outputs.push(FileHash {
            path: name.to_string(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(path)
    }

    pub fn finish(self) -> Result<PathBuf> {
        let path = self.dir.join("manifest.json");
        error::write(&path, self.manifest.render())?;
        Ok(path)
    }
}
