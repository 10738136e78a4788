//! EDF ingestion, sidecar annotations and the synthetic corpus generator.

pub mod edf;
pub mod sidecar;
pub mod synth;

use std::path::{Path, PathBuf};

pub use edf::{parse_edf, parse_edf_header, read_edf_signals, write_edf, EdfError, EdfHeader, SignalHeader};
pub use sidecar::{parse_sidecar, write_sidecar, SidecarError};
pub use synth::{generate_synthetic_corpus, CorpusSpec, SynthError};

use crate::recording::{EegRecording, RecordingError};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Edf { path: PathBuf, source: EdfError },
    #[error("{path}: {source}")]
    Sidecar { path: PathBuf, source: SidecarError },
    #[error("{path}: {source}")]
    Recording { path: PathBuf, source: RecordingError },
}

/// Path of the annotation file that accompanies `edf_path`.
pub fn sidecar_path(edf_path: &Path) -> PathBuf {
    edf_path.with_extension("json")
}

/// Loads an EDF file and, when present, its sidecar annotations.
pub fn load_recording(edf_path: &Path) -> Result<EegRecording, IngestError> {
    let bytes = std::fs::read(edf_path).map_err(|source| IngestError::Io { path: edf_path.to_path_buf(), source })?;
    let mut rec = parse_edf(&bytes).map_err(|source| IngestError::Edf { path: edf_path.to_path_buf(), source })?;
    let side = sidecar_path(edf_path);
    if side.exists() {
        let text = std::fs::read_to_string(&side).map_err(|source| IngestError::Io { path: side.clone(), source })?;
        rec.annotations = parse_sidecar(&text).map_err(|source| IngestError::Sidecar { path: side.clone(), source })?;
    }
    rec.validate().map_err(|source| IngestError::Recording { path: edf_path.to_path_buf(), source })?;
    Ok(rec)
}

/// All `*.edf` files directly inside `dir`, sorted by name.
pub fn list_edf_files(dir: &Path) -> Result<Vec<PathBuf>, IngestError> {
    let io = |source| IngestError::Io { path: dir.to_path_buf(), source };
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("edf")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}
