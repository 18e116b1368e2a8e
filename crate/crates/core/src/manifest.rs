//! Run directories, artifact bookkeeping and manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hashes a file, or every file below a directory keyed by relative path.
pub fn hash_input(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    if path.is_dir() {
        let mut stack = vec![path.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
                let p = entry.map_err(|e| Error::io(&dir, e))?.path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
                    out.insert(p.display().to_string(), sha256_hex(&bytes));
                }
            }
        }
    } else {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        out.insert(path.display().to_string(), sha256_hex(&bytes));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub run_id: String,
    pub config_sha256: String,
    /// Input path to content hash.
    pub inputs: BTreeMap<String, String>,
    /// Artifact path (relative to the run directory) to content hash.
    pub outputs: BTreeMap<String, String>,
    /// Wall-clock milliseconds per stage, in execution order.
    pub timings_ms: Vec<(String, u128)>,
}

/// Owns one run directory. Artifacts are written once; rewriting a path
/// is an error.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    outputs: BTreeMap<String, String>,
    inputs: BTreeMap<String, String>,
    timings: Vec<(String, u128)>,
}

impl RunDir {
    /// Creates `parent/run_id`, which must not exist or be empty.
    pub fn create(parent: &Path, run_id: &str) -> Result<Self> {
        if run_id.is_empty() || run_id.contains(['/', '\\']) || run_id.starts_with('.') {
            return Err(Error::Argument(format!("invalid run id {run_id:?}")));
        }
        let root = parent.join(run_id);
        if root.exists() {
            let empty = std::fs::read_dir(&root).map_err(|e| Error::io(&root, e))?.next().is_none();
            if !empty {
                return Err(Error::Config(format!(
                    "run directory {} already exists; pick another run id",
                    root.display()
                )));
            }
        }
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(RunDir {
            root,
            outputs: BTreeMap::new(),
            inputs: BTreeMap::new(),
            timings: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
        let bytes = bytes.as_ref();
        if self.outputs.contains_key(rel) {
            return Err(Error::Argument(format!("artifact {rel} written twice")));
        }
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.outputs.insert(rel.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    pub fn write_json(&mut self, rel: &str, value: &impl Serialize) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
        self.write(rel, text)
    }

    /// Records files written by other code below `rel`.
    pub fn adopt(&mut self, rel: &str) -> Result<()> {
        let base = self.root.join(rel);
        for (path, hash) in hash_input(&base)? {
            let rel_path = Path::new(&path)
                .strip_prefix(&self.root)
                .map(|p| p.to_string_lossy().replace('\\', "/"))
                .unwrap_or(path);
            self.outputs.insert(rel_path, hash);
        }
        Ok(())
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.extend(hash_input(path)?);
        Ok(())
    }

    /// Runs `f`, recording its wall time under `stage`.
    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let out = f(self)?;
        self.timings.push((stage.to_string(), t0.elapsed().as_millis()));
        Ok(out)
    }

    pub fn finish(mut self, command: &str, run_id: &str, config_sha256: &str) -> Result<Manifest> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            run_id: run_id.to_string(),
            config_sha256: config_sha256.to_string(),
            inputs: std::mem::take(&mut self.inputs),
            outputs: std::mem::take(&mut self.outputs),
            timings_ms: std::mem::take(&mut self.timings),
        };
        let path = self.root.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("serializable") + "\n";
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}
