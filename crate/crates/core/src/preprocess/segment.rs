use serde::{Deserialize, Serialize};

use crate::recording::{EegRecording, SeizureType};

use super::montage::MONTAGE_CHANNELS;
use super::resample::TARGET_RATE_HZ;
use super::PreprocessError;

/// Samples per two-second window at 250 Hz.
pub const SEGMENT_LEN: usize = 500;

/// Identity and label of one segment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SegmentMeta {
    pub label: SeizureType,
    pub patient_id: String,
    pub session_id: String,
    /// Index of the annotated event inside its recording.
    pub event_index: usize,
    pub index_in_event: usize,
}

impl SegmentMeta {
    pub fn event_id(&self) -> String {
        format!("{}_{}_e{:02}", self.patient_id, self.session_id, self.event_index)
    }

    /// Stable identifier used as a cache key.
    pub fn id(&self) -> String {
        format!("{}_s{:03}", self.event_id(), self.index_in_event)
    }
}

/// A 20 × 500 window, channel-major, in microvolts.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub data: Vec<f64>,
    pub meta: SegmentMeta,
}

impl Segment {
    pub fn new(data: Vec<f64>, meta: SegmentMeta) -> Result<Self, PreprocessError> {
        if data.len() != MONTAGE_CHANNELS * SEGMENT_LEN {
            return Err(PreprocessError::BadSegment(format!(
                "expected {} values, got {}",
                MONTAGE_CHANNELS * SEGMENT_LEN,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(PreprocessError::BadSegment(format!("{} contains non-finite values", meta.id())));
        }
        Ok(Segment { data, meta })
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * SEGMENT_LEN..(c + 1) * SEGMENT_LEN]
    }

    pub fn id(&self) -> String {
        self.meta.id()
    }
}

fn check_shape(rec: &EegRecording) -> Result<(), PreprocessError> {
    if rec.sample_rate_hz != TARGET_RATE_HZ {
        return Err(PreprocessError::WrongRate { expected: TARGET_RATE_HZ, got: rec.sample_rate_hz });
    }
    if rec.n_channels() != MONTAGE_CHANNELS {
        return Err(PreprocessError::BadSegment(format!(
            "segmentation needs {MONTAGE_CHANNELS} channels, got {}",
            rec.n_channels()
        )));
    }
    Ok(())
}

fn window(rec: &EegRecording, start: usize) -> Vec<f64> {
    let mut data = Vec::with_capacity(MONTAGE_CHANNELS * SEGMENT_LEN);
    for ch in &rec.samples {
        data.extend_from_slice(&ch[start..start + SEGMENT_LEN]);
    }
    data
}

/// Cuts every annotated event into consecutive non-overlapping two-second
/// windows lying entirely inside the event. Trailing remainders are dropped.
pub fn segment_recording(rec: &EegRecording) -> Result<Vec<Segment>, PreprocessError> {
    check_shape(rec)?;
    let rate = rec.sample_rate_hz;
    let n = rec.n_samples();
    let mut out = Vec::new();
    for (event_index, ann) in rec.annotations.iter().enumerate() {
        // Tolerate float noise in second-to-sample conversion.
        let first = (ann.start_s * rate - 1e-6).ceil().max(0.0) as usize;
        let end = ((ann.end_s * rate + 1e-6).floor() as usize).min(n);
        let mut start = first;
        let mut index_in_event = 0;
        while start + SEGMENT_LEN <= end {
            let meta = SegmentMeta {
                label: ann.label,
                patient_id: rec.patient_id.clone(),
                session_id: rec.session_id.clone(),
                event_index,
                index_in_event,
            };
            out.push(Segment::new(window(rec, start), meta)?);
            start += SEGMENT_LEN;
            index_in_event += 1;
        }
    }
    Ok(out)
}

/// Cuts the whole recording into consecutive windows regardless of
/// annotations; returns each window's start time in seconds.
pub fn segment_all_windows(rec: &EegRecording) -> Result<Vec<(f64, Vec<f64>)>, PreprocessError> {
    check_shape(rec)?;
    let n = rec.n_samples();
    Ok((0..n / SEGMENT_LEN)
        .map(|k| (k as f64 * SEGMENT_LEN as f64 / rec.sample_rate_hz, window(rec, k * SEGMENT_LEN)))
        .collect())
}
