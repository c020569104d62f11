use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_VERSION: &str = "1";

/// Written next to every stage output as `manifest.<tag>.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub manifest_version: &'static str,
    pub tool_version: &'static str,
    pub subcommand: String,
    /// Resolved flags, minus the output location and worker count.
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    /// Input path → sha256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads inputs and remembers their digests.
#[derive(Debug, Default)]
pub struct Inputs {
    base: Option<PathBuf>,
    digests: BTreeMap<String, String>,
}

impl Inputs {
    /// Paths under `base` are recorded relative to it.
    pub fn relative_to(base: &Path) -> Self {
        Inputs { base: Some(base.to_path_buf()), digests: BTreeMap::new() }
    }

    pub fn read(&mut self, path: &Path) -> Result<String> {
        if !path.is_file() {
            bail!("missing input `{}`", path.display());
        }
        let text = fs::read_to_string(path).with_context(|| format!("reading `{}`", path.display()))?;
        let key = self
            .base
            .as_ref()
            .and_then(|b| path.strip_prefix(b).ok())
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/");
        self.digests.insert(key, sha256_hex(text.as_bytes()));
        Ok(text)
    }

    pub fn digests(&self) -> BTreeMap<String, String> {
        self.digests.clone()
    }
}

/// Collects the files a stage writes into one directory.
#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating `{}`", dir.display()))?;
        Ok(Outputs { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents).with_context(|| format!("writing `{}`", path.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Lists a file some other writer put in this directory.
    pub fn record(&mut self, name: &str) {
        self.files.push(name.to_string());
    }

    pub fn write_json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, &s)
    }

    /// Writes `manifest.<tag>.json`; returns every file written, manifest included.
    pub fn finish(
        mut self,
        tag: &str,
        subcommand: &str,
        config: &impl Serialize,
        seeds: BTreeMap<String, u64>,
        inputs: &Inputs,
    ) -> Result<Vec<String>> {
        self.files.sort();
        self.files.dedup();
        let manifest = RunManifest {
            manifest_version: MANIFEST_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            config: serde_json::to_value(config)?,
            seeds,
            inputs: inputs.digests(),
            outputs: self.files.clone(),
        };
        let name = format!("manifest.{tag}.json");
        let mut s = serde_json::to_string_pretty(&manifest)?;
        s.push('\n');
        fs::write(self.dir.join(&name), s)?;
        self.files.push(name);
        Ok(self.files)
    }
}
