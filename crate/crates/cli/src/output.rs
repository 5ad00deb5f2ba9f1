use crate::config::ExperimentConfig;
use crate::error::CliResult;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Output directory that remembers the hash of every file written through it.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config: serde_json::Value,
    config_sha256: String,
    seeds: BTreeMap<&'a str, u64>,
    files: &'a BTreeMap<String, String>,
}

impl OutputDir {
    pub fn create(root: impl AsRef<Path>) -> CliResult<Self> {
        let root = root.as_ref().to_path_buf();
        std::fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            files: BTreeMap::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    /// `name` is relative and may contain subdirectories.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes)?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_with(
        &mut self,
        name: &str,
        fill: impl FnOnce(&mut Vec<u8>) -> mfgda::Result<()>,
    ) -> CliResult<()> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(mfgda::Error::from)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes `manifest.json`; call last.
    pub fn finish(self, command: &str, cfg: &ExperimentConfig) -> CliResult<()> {
        let mut seeds = BTreeMap::new();
        seeds.insert("seed", cfg.seed);
        seeds.insert("particles", cfg.particle_seed());
        seeds.insert("kernel", cfg.game.params.seed);
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config: serde_json::to_value(cfg).map_err(mfgda::Error::from)?,
            config_sha256: config_hash(cfg),
            seeds,
            files: &self.files,
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(mfgda::Error::from)?;
        text.push('\n');
        std::fs::write(self.root.join("manifest.json"), text)?;
        Ok(())
    }
}

/// Hash of the experiment definition; the output location is not part of it.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.output.directory.clear();
    sha256_hex(c.to_toml().as_bytes())
}
