//! Recording preprocessing: bipolar montage, resampling to 250 Hz, zero-phase
//! band-pass and two-second segmentation, applied in that order.

pub mod filter;
pub mod montage;
pub mod resample;
pub mod segment;

pub use filter::bandpass_filter;
pub use montage::{apply_tcp_montage, MontageSpec};
pub use resample::resample_to_250;
pub use segment::{segment_all_windows, segment_recording, Segment, SegmentMeta, SEGMENT_LEN};

use crate::recording::EegRecording;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PreprocessError {
    #[error("electrode {0:?} required by the montage is missing")]
    MissingElectrode(String),
    #[error("invalid montage: {0}")]
    InvalidMontage(String),
    #[error("unsupported sample rate {0} Hz (need an integer rate in [100, 1024])")]
    UnsupportedRate(f64),
    #[error("expected {expected} Hz input, got {got} Hz")]
    WrongRate { expected: f64, got: f64 },
    #[error("signal of {got} samples is too short; need at least {needed}")]
    SignalTooShort { got: usize, needed: usize },
    #[error("invalid segment: {0}")]
    BadSegment(String),
}

/// Montage, resampling and band-pass; the output is ready for segmentation.
pub fn condition_recording(rec: &EegRecording, montage: &MontageSpec) -> Result<EegRecording, PreprocessError> {
    let bipolar = apply_tcp_montage(rec, montage)?;
    let resampled = resample_to_250(&bipolar)?;
    bandpass_filter(&resampled)
}

/// Full chain from a raw recording to labeled segments.
pub fn preprocess_recording(rec: &EegRecording, montage: &MontageSpec) -> Result<Vec<Segment>, PreprocessError> {
    segment_recording(&condition_recording(rec, montage)?)
}
