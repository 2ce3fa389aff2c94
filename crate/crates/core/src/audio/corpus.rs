use std::fs;
use std::path::{Path, PathBuf};

use super::{AudioError, Result};

/// One `<relative-wav-path>\t<transcript>` line of a corpus manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub wav: PathBuf,
    pub transcript: String,
}

impl ManifestEntry {
    /// Utterance id: the wav file stem.
    pub fn id(&self) -> String {
        self.wav
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&e.wav.to_string_lossy());
        out.push('\t');
        out.push_str(&e.transcript);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a manifest; wav paths are returned relative to the manifest's directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let text = fs::read_to_string(path).map_err(crate::with_path(path))?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (wav, transcript) = line.split_once('\t').ok_or_else(|| AudioError::Manifest {
            line: i + 1,
            detail: "expected `<wav>\\t<transcript>`".into(),
        })?;
        entries.push(ManifestEntry {
            wav: base.join(wav),
            transcript: transcript.to_string(),
        });
    }
    Ok(entries)
}
