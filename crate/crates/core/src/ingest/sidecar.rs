//! Seizure annotations stored next to each EDF file as a JSON array of
//! `{"start_s": .., "end_s": .., "label": "cpz|spz|abz|tnz|tcz"}` objects.

use serde::{Deserialize, Serialize};

use crate::recording::{Annotation, LabelError, SeizureType};

#[derive(Debug, thiserror::Error)]
pub enum SidecarError {
    #[error("malformed annotation JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("annotation {index}: {source}")]
    Label { index: usize, source: LabelError },
    #[error("annotation {index}: start {start} must be non-negative and before end {end}")]
    Interval { index: usize, start: f64, end: f64 },
}

#[derive(Debug, Serialize, Deserialize)]
struct RawAnnotation {
    start_s: f64,
    end_s: f64,
    label: String,
}

pub fn parse_sidecar(text: &str) -> Result<Vec<Annotation>, SidecarError> {
    let raw: Vec<RawAnnotation> = serde_json::from_str(text)?;
    raw.into_iter()
        .enumerate()
        .map(|(index, r)| {
            let label: SeizureType = r.label.parse().map_err(|source| SidecarError::Label { index, source })?;
            if !(r.start_s >= 0.0 && r.start_s < r.end_s) {
                return Err(SidecarError::Interval { index, start: r.start_s, end: r.end_s });
            }
            Ok(Annotation { start_s: r.start_s, end_s: r.end_s, label })
        })
        .collect()
}

pub fn write_sidecar(annotations: &[Annotation]) -> String {
    let raw: Vec<RawAnnotation> = annotations
        .iter()
        .map(|a| RawAnnotation { start_s: a.start_s, end_s: a.end_s, label: a.label.code().to_string() })
        .collect();
    serde_json::to_string_pretty(&raw).expect("annotations serialize")
}
