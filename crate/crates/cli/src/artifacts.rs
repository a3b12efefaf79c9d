//! Output directory handling: every artifact is hashed as it is written
//! and recorded in a manifest placed next to the outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::DynError;

#[derive(Clone, Debug, Serialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    subcommand: &'a str,
    config: &'a C,
    outputs: &'a [OutputEntry],
}

/// Collects the artifacts of one run and finishes with `manifest.json`:
/// the resolved configuration echo plus content hashes of every output.
pub struct OutputDir {
    dir: PathBuf,
    entries: Vec<OutputEntry>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> std::io::Result<()> {
        let bytes = contents.as_ref();
        fs::write(self.dir.join(name), bytes)?;
        let digest = Sha256::digest(bytes);
        let sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.entries.push(OutputEntry {
            path: name.to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), DynError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        Ok(self.write(name, text)?)
    }

    /// Writes `manifest.json`; the manifest itself is not listed.
    pub fn finish<C: Serialize>(self, subcommand: &str, config: &C) -> Result<(), DynError> {
        let manifest = Manifest {
            subcommand,
            config,
            outputs: &self.entries,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.dir.join("manifest.json"), text)?;
        Ok(())
    }
}

/// Output directory precedence: the `--out` flag, the config field, the
/// `KA_OUTPUT_DIR` environment variable, then the working directory.
pub fn resolve_out(flag: Option<PathBuf>, config: &Option<String>) -> PathBuf {
    flag.or_else(|| config.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var_os("KA_OUTPUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}
