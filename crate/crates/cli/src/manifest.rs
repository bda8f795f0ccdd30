use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::failure::{Failure, Outcome};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Outcome<String> {
    let bytes = std::fs::read(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// What a command read and wrote, enough to rerun it. Carries no
/// timestamps or worker counts so reruns produce identical manifests.
#[derive(Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub details: BTreeMap<String, serde_json::Value>,
}

/// Collects the outputs of one command in its output directory.
pub struct Run {
    dir: PathBuf,
    manifest: Manifest,
}

impl Run {
    pub fn start(command: &str, cfg: &ExperimentConfig, seed: Option<u64>) -> Outcome<Self> {
        let dir = cfg.out_dir();
        std::fs::create_dir_all(&dir).map_err(|e| Failure::runtime(format!("cannot create {}: {e}", dir.display())))?;
        let mut config = serde_json::to_value(cfg).map_err(|e| Failure::runtime(e.to_string()))?;
        if let Some(obj) = config.as_object_mut() {
            obj.insert("seed".into(), serde_json::json!(seed));
            obj.remove("workers");
        }
        let canonical = serde_json::to_vec(&config).map_err(|e| Failure::runtime(e.to_string()))?;
        Ok(Run {
            dir,
            manifest: Manifest {
                command: command.into(),
                version: env!("CARGO_PKG_VERSION").into(),
                seed,
                config_sha256: sha256_hex(&canonical),
                config,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                details: BTreeMap::new(),
            },
        })
    }

    pub fn input(&mut self, name: &str, path: &Path) -> Outcome<()> {
        let hash = hash_file(path)?;
        self.manifest.inputs.insert(name.into(), hash);
        Ok(())
    }

    pub fn detail(&mut self, key: &str, value: impl Serialize) {
        let value = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.manifest.details.insert(key.into(), value);
    }

    /// Writes `bytes` to `name` under the output directory.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Outcome<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)
                .map_err(|e| Failure::runtime(format!("cannot create {}: {e}", parent.display())))?;
        }
        std::fs::write(&path, bytes).map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))?;
        self.manifest.outputs.insert(name.into(), sha256_hex(bytes));
        Ok(path)
    }

    /// Builds the file content with `fill`, then writes it.
    pub fn write_with(
        &mut self,
        name: &str,
        fill: impl FnOnce(&mut Vec<u8>) -> kep_core::Result<()>,
    ) -> Outcome<PathBuf> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        self.write(name, &buf)
    }

    /// Writes `<command>.manifest.json` and returns its path.
    pub fn finish(self) -> Outcome<PathBuf> {
        let path = self.dir.join(format!("{}.manifest.json", self.manifest.command));
        let mut text = serde_json::to_vec_pretty(&self.manifest).map_err(|e| Failure::runtime(e.to_string()))?;
        text.push(b'\n');
        std::fs::write(&path, text).map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}
