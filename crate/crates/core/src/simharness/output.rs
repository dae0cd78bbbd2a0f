//! CSV and JSONL artefacts. Every file opens with `#` comment lines naming
//! the config hash, seed and crate version.

use super::config::{ScenarioConfig, ARTIFACT_VERSION};
use crate::error::{Error, Result};
use serde::Serialize;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArtifactHeader {
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl ArtifactHeader {
    pub fn for_config(cfg: &ScenarioConfig) -> Self {
        Self { version: ARTIFACT_VERSION.to_string(), config_sha256: cfg.hash(), seed: cfg.seed }
    }

    pub fn comment_lines(&self) -> String {
        format!("# leosched {}\n# config_sha256 {}\n# seed {}\n", self.version, self.config_sha256, self.seed)
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("header serializes")
    }
}

/// Serialize rows as CSV preceded by the header comment lines.
pub fn csv_bytes<T: Serialize>(header: &ArtifactHeader, rows: &[T]) -> Result<Vec<u8>> {
    let mut out = header.comment_lines().into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io("csv buffer", e))?;
    }
    Ok(out)
}

pub fn write_csv<T: Serialize>(path: &Path, header: &ArtifactHeader, rows: &[T]) -> Result<()> {
    let bytes = csv_bytes(header, rows)?;
    write_file(path, &bytes)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Strip `#` comment lines before handing CSV text to a reader.
pub fn strip_comments(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect()
}
