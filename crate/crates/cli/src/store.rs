//! Experiment directory: hashing, atomic writes, the directory lock and stage stamps.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Hash of a serializable value through its JSON form.
pub fn hash_json<T: Serialize>(value: &T) -> String {
    sha256_hex(serde_json::to_string(value).expect("value serializes").as_bytes())
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::io(path, e)
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Exclusive hold on an experiment directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(".lock");
        match fs::create_dir(&path) {
            Ok(()) => {
                let _ = fs::write(path.join("pid"), std::process::id().to_string());
                Ok(Self { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(CliError::Locked(path)),
            Err(e) => Err(CliError::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.path);
    }
}

/// Sidecar recording what a stage consumed and produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stamp {
    pub stage: String,
    /// Hash of the configuration sections this stage depends on.
    pub key: String,
    pub config_hash: String,
    pub master_seed: u64,
    /// Relative path to content hash.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

/// An experiment output directory.
#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn stamp_path(&self, stage: &str) -> PathBuf {
        self.root.join("stamps").join(format!("{stage}.json"))
    }

    pub fn stamp(&self, stage: &str) -> Result<Option<Stamp>> {
        let path = self.stamp_path(stage);
        if !path.exists() {
            return Ok(None);
        }
        read_json(&path).map(Some)
    }

    pub fn hash(&self, rel: &str) -> Result<String> {
        sha256_file(&self.path(rel))
    }

    /// Hashes `files` and records them as the outputs of `stage`.
    pub fn write_stamp(
        &self,
        stage: &str,
        key: &str,
        config_hash: &str,
        master_seed: u64,
        inputs: BTreeMap<String, String>,
        files: &[String],
    ) -> Result<Stamp> {
        let outputs = files
            .iter()
            .map(|f| Ok((f.clone(), self.hash(f)?)))
            .collect::<Result<_>>()?;
        let stamp = Stamp {
            stage: stage.to_string(),
            key: key.to_string(),
            config_hash: config_hash.to_string(),
            master_seed,
            inputs,
            outputs,
        };
        write_json(&self.stamp_path(stage), &stamp)?;
        Ok(stamp)
    }

    /// Whether `stage` already ran with `key` on these inputs and its outputs are intact.
    pub fn is_fresh(&self, stage: &str, key: &str, inputs: &BTreeMap<String, String>) -> Result<bool> {
        let Some(stamp) = self.stamp(stage)? else {
            return Ok(false);
        };
        if stamp.key != key || &stamp.inputs != inputs {
            return Ok(false);
        }
        for (file, hash) in &stamp.outputs {
            let path = self.path(file);
            if !path.exists() || &sha256_file(&path)? != hash {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Checks that `upstream` ran with `key` and that the files it wrote are unchanged;
    /// returns their hashes.
    pub fn upstream(&self, upstream: &str, key: &str, files: &[&str]) -> Result<BTreeMap<String, String>> {
        let stamp = self.stamp(upstream)?.ok_or_else(|| CliError::Missing {
            path: self.stamp_path(upstream),
            hint: format!("run `{upstream}` first"),
        })?;
        if stamp.key != key {
            return Err(CliError::HashMismatch {
                path: self.stamp_path(upstream),
                message: format!("`{upstream}` ran with a different configuration; rerun it"),
            });
        }
        let mut out = BTreeMap::new();
        for &file in files {
            let path = self.path(file);
            if !path.exists() {
                return Err(CliError::Missing {
                    path,
                    hint: format!("rerun `{upstream}`"),
                });
            }
            let expected = stamp.outputs.get(file).ok_or_else(|| CliError::HashMismatch {
                path: path.clone(),
                message: format!("not recorded by `{upstream}`"),
            })?;
            let actual = sha256_file(&path)?;
            if &actual != expected {
                return Err(CliError::HashMismatch {
                    path,
                    message: format!("modified since `{upstream}` wrote it; rerun `{upstream}`"),
                });
            }
            out.insert(file.to_string(), actual);
        }
        Ok(out)
    }
}
