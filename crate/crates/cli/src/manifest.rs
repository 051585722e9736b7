//! `manifest.json` written next to every command's outputs. It holds no
//! timestamps, so identical runs produce identical manifests.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::{CliError, Result};

#[derive(Debug, Serialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// Resolved settings of the run.
    pub config: Value,
    /// SHA-256 of `config` serialized as compact JSON.
    pub config_hash: String,
    pub seeds: BTreeMap<&'static str, u64>,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

impl Manifest {
    pub fn new(command: &'static str, config: Value) -> Self {
        let config_hash = sha256_hex(config.to_string().as_bytes());
        Self {
            tool: "socialgame",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            config_hash,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn seed(mut self, name: &'static str, seed: u64) -> Self {
        self.seeds.insert(name, seed);
        self
    }

    pub fn input(mut self, path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        self.inputs.push(InputFile {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(self)
    }
}

/// Output directory of one command; records every file written into it.
pub struct OutDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::File::create(&path)
            .and_then(|mut f| f.write_all(bytes))
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut body = serde_json::to_vec_pretty(value).expect("output serializes");
        body.push(b'\n');
        self.write(name, &body)
    }

    pub fn finish(mut self, mut manifest: Manifest) -> Result<()> {
        manifest.outputs = std::mem::take(&mut self.written);
        self.write_json("manifest.json", &manifest)
    }
}
