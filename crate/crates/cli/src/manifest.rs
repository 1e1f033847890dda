//! Run manifests: what was run, with which configuration, on which inputs,
//! producing which outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use stepdown::kv::KvMap;
use stepdown::Error;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, as given.
    pub args: Vec<String>,
    /// Working directory the arguments are relative to.
    pub cwd: PathBuf,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub version: String,
    /// SHA-256 of every input file, keyed by path.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of every output file, keyed by path relative to the output.
    pub outputs: BTreeMap<String, String>,
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(command: &str, args: &[String], config: &KvMap, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            args: args.to_vec(),
            cwd: std::env::current_dir().unwrap_or_default(),
            config: config.0.clone(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            timings: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<(), Error> {
        self.inputs.extend(digest_tree(path)?);
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line() as u64,
            msg: e.to_string(),
        })
    }

    /// Digests `out` (a directory or a single file) and writes the manifest
    /// to `dest` through a temporary file and a rename.
    pub fn finish(mut self, out: &Path, dest: &Path) -> Result<(), Error> {
        let base = if out.is_dir() {
            out
        } else {
            out.parent().unwrap_or(Path::new("."))
        };
        self.outputs = digest_tree(out)?
            .into_iter()
            .filter(|(k, _)| Path::new(k) != dest)
            .map(|(k, v)| {
                let rel = Path::new(&k)
                    .strip_prefix(base)
                    .map_or(k.clone(), |p| p.display().to_string());
                (rel, v)
            })
            .filter(|(k, _)| !k.ends_with(MANIFEST))
            .collect();
        let text = serde_json::to_string_pretty(&self).map_err(|e| Error::Config(e.to_string()))?;
        let tmp = dest.with_extension("json.tmp");
        fs::write(&tmp, text + "\n").map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, dest).map_err(|e| Error::io(dest, e))
    }

    /// Input files whose digest no longer matches.
    pub fn changed_inputs(&self) -> Vec<String> {
        self.inputs
            .iter()
            .filter(|(path, want)| {
                let p = if Path::new(path).is_absolute() {
                    PathBuf::from(path)
                } else {
                    self.cwd.join(path)
                };
                sha256_file(&p).map_or(true, |got| &got != *want)
            })
            .map(|(p, _)| p.clone())
            .collect()
    }
}

pub fn sha256_file(path: &Path) -> Result<String, Error> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Digests of every regular file under `path`, in sorted order.
pub fn digest_tree(path: &Path) -> Result<BTreeMap<String, String>, Error> {
    let mut out = BTreeMap::new();
    let mut stack = vec![path.to_path_buf()];
    while let Some(p) = stack.pop() {
        let meta = fs::metadata(&p).map_err(|e| Error::io(&p, e))?;
        if meta.is_dir() {
            for entry in fs::read_dir(&p).map_err(|e| Error::io(&p, e))? {
                stack.push(entry.map_err(|e| Error::io(&p, e))?.path());
            }
        } else {
            out.insert(p.display().to_string(), sha256_file(&p)?);
        }
    }
    Ok(out)
}
