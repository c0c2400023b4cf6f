use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use etchforge::config::PipelineConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance record written next to every stage's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub version: String,
    pub config: PipelineConfig,
    pub config_sha256: String,
    /// `"<role>/<file>"` → sha256 of every file read.
    pub inputs: BTreeMap<String, String>,
    /// File name (relative to the output dir) → sha256.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn hash_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Collects written files and their hashes, then emits the manifest.
pub struct StageWriter {
    pub dir: PathBuf,
    outputs: BTreeMap<String, String>,
}

impl StageWriter {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.outputs.insert(name.to_string(), sha256_hex(contents));
        Ok(())
    }

    /// Registers a file that some other writer already put in `dir`.
    pub fn record(&mut self, name: &str) -> Result<(), CliError> {
        let h = hash_file(&self.dir.join(name))?;
        self.outputs.insert(name.to_string(), h);
        Ok(())
    }

    pub fn finish(
        self,
        stage: &str,
        config: &PipelineConfig,
        inputs: BTreeMap<String, String>,
    ) -> Result<Manifest, CliError> {
        let config_json = serde_json::to_string(config).expect("config serializes");
        let m = Manifest {
            stage: stage.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            config_sha256: sha256_hex(config_json.as_bytes()),
            inputs,
            outputs: self.outputs,
        };
        let path = self.dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(m)
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, CliError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: invalid manifest: {e}", path.display())))
}

/// Checks that every output listed in the manifest of `dir` still has its
/// recorded hash.
pub fn verify_outputs(dir: &Path, m: &Manifest) -> Result<(), CliError> {
    for (name, want) in &m.outputs {
        let got = hash_file(&dir.join(name))?;
        if &got != want {
            return Err(CliError::Mismatch(format!(
                "{} changed since the {} stage wrote it",
                dir.join(name).display(),
                m.stage
            )));
        }
    }
    Ok(())
}
