//! Recording-level domain types shared by ingestion and preprocessing.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The five specific seizure types handled by the classifier.
///
/// The discriminant is the class index used by the network and the metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeizureType {
    /// Complex partial (CPZ / CSZ).
    Cpz = 0,
    /// Simple partial (SPZ).
    Spz = 1,
    /// Absence (ABZ / ASZ).
    Abz = 2,
    /// Tonic (TNZ).
    Tnz = 3,
    /// Tonic-clonic (TCZ).
    Tcz = 4,
}

pub const NUM_CLASSES: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LabelError {
    #[error("seizure label {0:?} is excluded from the five-class problem")]
    Excluded(String),
    #[error("unknown seizure label {0:?}")]
    Unknown(String),
}

impl SeizureType {
    pub const ALL: [SeizureType; NUM_CLASSES] =
        [SeizureType::Cpz, SeizureType::Spz, SeizureType::Abz, SeizureType::Tnz, SeizureType::Tcz];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn code(self) -> &'static str {
        match self {
            SeizureType::Cpz => "cpz",
            SeizureType::Spz => "spz",
            SeizureType::Abz => "abz",
            SeizureType::Tnz => "tnz",
            SeizureType::Tcz => "tcz",
        }
    }
}

impl fmt::Display for SeizureType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code().to_ascii_uppercase())
    }
}

impl FromStr for SeizureType {
    type Err = LabelError;

    /// Accepts both the TUSZ v1.5 codes and their later aliases
    /// (CSZ, ASZ). Non-specific (FNZ, GNZ) and myoclonic (MYZ) labels are
    /// rejected.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cpz" | "csz" => Ok(SeizureType::Cpz),
            "spz" => Ok(SeizureType::Spz),
            "abz" | "asz" => Ok(SeizureType::Abz),
            "tnz" => Ok(SeizureType::Tnz),
            "tcz" => Ok(SeizureType::Tcz),
            "fnz" | "gnz" | "myz" => Err(LabelError::Excluded(s.to_string())),
            _ => Err(LabelError::Unknown(s.to_string())),
        }
    }
}

/// One annotated seizure interval, in seconds from recording start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub start_s: f64,
    pub end_s: f64,
    pub label: SeizureType,
}

impl Annotation {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RecordingError {
    #[error("channel {label:?} has {got} samples, expected {expected}")]
    RaggedChannels { label: String, got: usize, expected: usize },
    #[error("sample rate must be positive, got {0}")]
    BadSampleRate(f64),
    #[error("annotation [{start}, {end}) lies outside [0, {duration}]")]
    BadAnnotation { start: f64, end: f64, duration: f64 },
    #[error("{labels} channel labels for {channels} channels")]
    LabelCount { labels: usize, channels: usize },
}

/// A multichannel EEG recording in physical units (microvolts).
#[derive(Debug, Clone, PartialEq)]
pub struct EegRecording {
    pub channel_labels: Vec<String>,
    pub samples: Vec<Vec<f64>>,
    pub sample_rate_hz: f64,
    pub patient_id: String,
    pub session_id: String,
    pub annotations: Vec<Annotation>,
}

impl EegRecording {
    pub fn n_channels(&self) -> usize {
        self.samples.len()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate_hz
    }

    /// Checks the structural invariants: equal channel lengths, a positive
    /// rate and annotations inside the recording.
    pub fn validate(&self) -> Result<(), RecordingError> {
        if !(self.sample_rate_hz > 0.0) || !self.sample_rate_hz.is_finite() {
            return Err(RecordingError::BadSampleRate(self.sample_rate_hz));
        }
        if self.channel_labels.len() != self.samples.len() {
            return Err(RecordingError::LabelCount { labels: self.channel_labels.len(), channels: self.samples.len() });
        }
        let expected = self.n_samples();
        for (label, ch) in self.channel_labels.iter().zip(&self.samples) {
            if ch.len() != expected {
                return Err(RecordingError::RaggedChannels { label: label.clone(), got: ch.len(), expected });
            }
        }
        let duration = self.duration_s();
        for a in &self.annotations {
            if !(a.start_s >= 0.0 && a.start_s < a.end_s && a.end_s <= duration + 1e-9) {
                return Err(RecordingError::BadAnnotation { start: a.start_s, end: a.end_s, duration });
            }
        }
        Ok(())
    }

    /// Returns a copy with the same identity and annotations but new signal data.
    pub fn with_samples(&self, labels: Vec<String>, samples: Vec<Vec<f64>>, rate: f64) -> Self {
        EegRecording {
            channel_labels: labels,
            samples,
            sample_rate_hz: rate,
            patient_id: self.patient_id.clone(),
            session_id: self.session_id.clone(),
            annotations: self.annotations.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_parsing_accepts_aliases_and_rejects_excluded() {
        assert_eq!("CSZ".parse::<SeizureType>().unwrap(), SeizureType::Cpz);
        assert_eq!("asz".parse::<SeizureType>().unwrap(), SeizureType::Abz);
        assert_eq!(" tcz ".parse::<SeizureType>().unwrap(), SeizureType::Tcz);
        for bad in ["fnz", "GNZ", "myz"] {
            assert!(matches!(bad.parse::<SeizureType>(), Err(LabelError::Excluded(_))));
        }
        assert!(matches!("xyz".parse::<SeizureType>(), Err(LabelError::Unknown(_))));
    }

    #[test]
    fn exactly_five_classes_with_stable_indices() {
        assert_eq!(SeizureType::ALL.len(), 5);
        for (i, t) in SeizureType::ALL.iter().enumerate() {
            assert_eq!(t.index(), i);
            assert_eq!(SeizureType::from_index(i), Some(*t));
        }
        assert_eq!(SeizureType::from_index(5), None);
    }

    #[test]
    fn validate_catches_ragged_channels_and_bad_annotations() {
        let mut rec = EegRecording {
            channel_labels: vec!["A".into(), "B".into()],
            samples: vec![vec![0.0; 10], vec![0.0; 10]],
            sample_rate_hz: 5.0,
            patient_id: "p".into(),
            session_id: "s".into(),
            annotations: vec![Annotation { start_s: 0.0, end_s: 2.0, label: SeizureType::Abz }],
        };
        assert!(rec.validate().is_ok());
        rec.annotations[0].end_s = 2.5;
        assert!(matches!(rec.validate(), Err(RecordingError::BadAnnotation { .. })));
        rec.annotations.clear();
        rec.samples[1].pop();
        assert!(matches!(rec.validate(), Err(RecordingError::RaggedChannels { .. })));
    }
}
