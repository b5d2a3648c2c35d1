//! Output files, checksums and the run manifest.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(file: impl Into<String>, bytes: &[u8]) -> Self {
        Self {
            file: file.into(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        }
    }

    pub fn of_path(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        Ok((Self::of(path.display().to_string(), &bytes), bytes))
    }
}

/// Files produced by one command, in the order they are written.
#[derive(Debug, Default, Clone)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
    pub warnings: Vec<String>,
}

impl Outputs {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.add(name, text.into_bytes());
        Ok(())
    }

    pub fn extend(&mut self, other: Outputs) {
        self.files.extend(other.files);
        self.warnings.extend(other.warnings);
    }

    pub fn digest(&self, name: &str) -> Option<FileDigest> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(n, b)| FileDigest::of(n.clone(), b))
    }

    pub fn names(&self) -> Vec<&str> {
        self.files.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Writes every file into `dir`, then the manifest listing their checksums.
    pub fn write(&self, dir: &Path, mut manifest: Manifest) -> Result<Manifest> {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        manifest.outputs.clear();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
            manifest.outputs.push(FileDigest::of(name.clone(), bytes));
        }
        manifest.warnings = self.warnings.clone();
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(manifest)
    }
}

/// Everything needed to reproduce a command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// `simulate`, `analyze`, `cavity` or `run`.
    pub command: String,
    /// Simulation mode or measurement name.
    pub mode: String,
    pub seed: u64,
    /// Canonical configuration text; `rerun` parses it back.
    pub config_text: String,
    pub config: serde_json::Value,
    /// Files read by `analyze`, with their checksums at run time.
    pub inputs: Vec<FileDigest>,
    /// Laser stream used as instrument response by `analyze g2`.
    #[serde(default)]
    pub irf: Option<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, mode: &str, seed: u64, config_text: String, config: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            mode: mode.to_string(),
            seed,
            config_text,
            config,
            inputs: Vec::new(),
            irf: None,
            outputs: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("{} is not a run manifest", path.display()))
    }

    /// Checks that the files listed as outputs in `self` match `other`.
    pub fn compare_outputs(&self, other: &Manifest) -> Result<()> {
        if self.outputs.len() != other.outputs.len() {
            bail!(
                "rerun produced {} files, the manifest lists {}",
                other.outputs.len(),
                self.outputs.len()
            );
        }
        for (a, b) in self.outputs.iter().zip(&other.outputs) {
            if a != b {
                bail!("{} differs from the manifest (sha256 {} vs {})", a.file, b.sha256, a.sha256);
            }
        }
        Ok(())
    }
}
