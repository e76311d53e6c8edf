//! Run manifests: enough to repeat a run and check that it reproduced.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CliError, Command};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub tool: String,
    pub tool_version: String,
    /// Arguments with every path made absolute.
    pub command: Command,
    pub config_path: Option<PathBuf>,
    /// Config text as read at run time; reruns use this, not the file.
    pub config_text: Option<String>,
    /// sha256 of every input file, keyed by absolute path.
    pub inputs: BTreeMap<PathBuf, String>,
    /// sha256 of every output file, keyed by path relative to the output dir.
    #[serde(default)]
    pub outputs: BTreeMap<String, String>,
    pub status: RunStatus,
    #[serde(default)]
    pub error: Option<String>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read manifest {}: {e}", path.display())))?;
        let m: RunManifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("manifest {}: {e}", path.display())))?;
        if m.manifest_version != MANIFEST_VERSION {
            return Err(CliError::Config(format!("unsupported manifest_version {}", m.manifest_version)));
        }
        Ok(m)
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_file(&dir.join(MANIFEST_FILE), &(text + "\n"))
    }

    /// Re-hashes the recorded inputs; any change is a config error.
    pub fn check_inputs(&self) -> Result<(), CliError> {
        for (path, want) in &self.inputs {
            let got = sha256_file(path)?;
            if &got != want {
                return Err(CliError::Config(format!("input {} changed since the recorded run", path.display())));
            }
        }
        Ok(())
    }
}

pub fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn absolute(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    std::env::current_dir().map(|d| d.join(path)).unwrap_or_else(|_| path.to_path_buf())
}

/// The files of `dir` (recursively, sorted) except the manifest.
pub fn output_hashes(dir: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = std::fs::read_dir(&d).map_err(|e| CliError::Io(format!("{}: {e}", d.display())))?;
        for entry in entries {
            let p = entry.map_err(|e| CliError::Io(e.to_string()))?.path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let rel = p.strip_prefix(dir).expect("inside dir").to_string_lossy().replace('\\', "/");
            if rel != MANIFEST_FILE {
                out.insert(rel, sha256_file(&p)?);
            }
        }
    }
    Ok(out)
}

/// Model files that a `--models` directory contributes as inputs.
pub fn model_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".json") && name != MANIFEST_FILE && name != "diagnostics.json"
        })
        .collect();
    files.sort();
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_hashes_skip_manifest_and_recurse() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), "x\n").unwrap();
        std::fs::create_dir(dir.path().join("sub")).unwrap();
        std::fs::write(dir.path().join("sub/b.json"), "{}").unwrap();
        std::fs::write(dir.path().join(MANIFEST_FILE), "{}").unwrap();
        let h = output_hashes(dir.path()).unwrap();
        assert_eq!(h.keys().cloned().collect::<Vec<_>>(), vec!["a.csv".to_string(), "sub/b.json".to_string()]);
        assert_eq!(h["a.csv"], "73cb3858a687a8494ca3323053016282f3dad39d42cf62ca4e79dda2aac7d9ac");
    }
}
