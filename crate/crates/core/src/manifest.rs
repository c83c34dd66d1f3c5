//! Track manifests: UTF-8 lines of `track_id<TAB>path`. Relative paths
//! are resolved against the manifest's directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dsp::{resample, wav, AudioBuffer, DspError};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("manifest {0} lists no tracks")]
    Empty(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub track_id: String,
    pub path: PathBuf,
}

impl ManifestEntry {
    /// Reads the track as mono audio at `sample_rate`.
    pub fn load(&self, sample_rate: u32) -> Result<AudioBuffer, DspError> {
        resample(&wav::read(&self.path)?, sample_rate)
    }
}

pub fn parse_manifest(text: &str, base: &Path, name: &str) -> Result<Vec<ManifestEntry>, ManifestError> {
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let err = |message: String| ManifestError::Parse {
            path: name.to_string(),
            line: i + 1,
            message,
        };
        if line.trim().is_empty() {
            continue;
        }
        let (id, path) = line
            .split_once('\t')
            .ok_or_else(|| err("expected track_id<TAB>path".into()))?;
        if id.is_empty() || path.is_empty() {
            return Err(err("empty track id or path".into()));
        }
        if !seen.insert(id.to_string()) {
            return Err(err(format!("duplicate track id {id:?}")));
        }
        entries.push(ManifestEntry {
            track_id: id.to_string(),
            path: base.join(path),
        });
    }
    if entries.is_empty() {
        return Err(ManifestError::Empty(name.to_string()));
    }
    Ok(entries)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>, ManifestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse_manifest(&text, base, &path.display().to_string())
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<(), ManifestError> {
    let path = path.as_ref();
    let text: String = entries
        .iter()
        .map(|e| format!("{}\t{}\n", e.track_id, e.path.display()))
        .collect();
    std::fs::write(path, text).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })
}
