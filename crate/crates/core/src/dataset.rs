//! Labelled samples ready for the network: a 252×20 feature map and the
//! raw 500×20 window of each segment, plus training-split normalization.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::neural::Tensor;
use crate::preprocess::montage::MONTAGE_CHANNELS;
use crate::preprocess::{Segment, SegmentMeta, SEGMENT_LEN};
use crate::recording::{SeizureType, NUM_CLASSES};
use crate::tensorfile::{TensorFile, TensorFileError};
use crate::wavelet::{extract_feature_tensor, WaveletError, N_FEATURES};

pub const FEATURE_LEN: usize = N_FEATURES * MONTAGE_CHANNELS;
pub const RAW_LEN: usize = SEGMENT_LEN * MONTAGE_CHANNELS;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error(transparent)]
    Wavelet(#[from] WaveletError),
    #[error(transparent)]
    File(#[from] TensorFileError),
    #[error("{0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub meta: SegmentMeta,
    /// Feature-major `[252, 20]`.
    pub features: Vec<f64>,
    /// Time-major `[500, 20]`.
    pub raw: Vec<f64>,
}

impl Sample {
    pub fn label(&self) -> SeizureType {
        self.meta.label
    }
}

/// Channel-major segment data to time-major order.
pub fn time_major(seg: &Segment) -> Vec<f64> {
    let mut out = vec![0.0; RAW_LEN];
    for c in 0..MONTAGE_CHANNELS {
        for (t, &v) in seg.channel(c).iter().enumerate() {
            out[t * MONTAGE_CHANNELS + c] = v;
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn from_segments(segments: &[Segment]) -> Result<Self, DatasetError> {
        let features: Vec<Vec<f64>> =
            segments.par_iter().map(|s| extract_feature_tensor(s).map(|f| f.data)).collect::<Result<_, _>>()?;
        Ok(Self::from_parts(segments, features))
    }

    /// Pairs segments with already computed feature maps.
    pub fn from_parts(segments: &[Segment], features: Vec<Vec<f64>>) -> Self {
        let samples = segments
            .iter()
            .zip(features)
            .map(|(s, f)| Sample { meta: s.meta.clone(), features: f, raw: time_major(s) })
            .collect();
        Dataset { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label().index()).collect()
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut c = [0; NUM_CLASSES];
        for s in &self.samples {
            c[s.label().index()] += 1;
        }
        c
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset { samples: idx.iter().map(|&i| self.samples[i].clone()).collect() }
    }

    /// Segment count per patient, in patient-id order.
    pub fn patients(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for s in &self.samples {
            *m.entry(s.meta.patient_id.clone()).or_insert(0) += 1;
        }
        m
    }
}

/// Per-cell feature z-scores and per-channel raw z-scores, fitted on a
/// training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub raw_mean: Vec<f64>,
    pub raw_std: Vec<f64>,
}

/// Standard deviations below this are treated as 1 (constant inputs).
const STD_FLOOR: f64 = 1e-12;

fn finish_std(sum_sq: Vec<f64>, n: f64) -> Vec<f64> {
    sum_sq.into_iter().map(|s| (s / n).sqrt()).map(|s| if s > STD_FLOOR { s } else { 1.0 }).collect()
}

impl Normalizer {
    pub fn identity() -> Self {
        Normalizer {
            feature_mean: vec![0.0; FEATURE_LEN],
            feature_std: vec![1.0; FEATURE_LEN],
            raw_mean: vec![0.0; MONTAGE_CHANNELS],
            raw_std: vec![1.0; MONTAGE_CHANNELS],
        }
    }

    pub fn fit(train: &Dataset, standardize_features: bool, zscore_raw: bool) -> Self {
        let mut norm = Self::identity();
        let n = train.len();
        if n == 0 {
            return norm;
        }
        if standardize_features {
            let mut mean = vec![0.0; FEATURE_LEN];
            for s in &train.samples {
                mean.iter_mut().zip(&s.features).for_each(|(m, v)| *m += v);
            }
            mean.iter_mut().for_each(|m| *m /= n as f64);
            let mut sq = vec![0.0; FEATURE_LEN];
            for s in &train.samples {
                for ((q, v), m) in sq.iter_mut().zip(&s.features).zip(&mean) {
                    *q += (v - m) * (v - m);
                }
            }
            norm.feature_std = finish_std(sq, n as f64);
            norm.feature_mean = mean;
        }
        if zscore_raw {
            let count = (n * SEGMENT_LEN) as f64;
            let mut mean = vec![0.0; MONTAGE_CHANNELS];
            for s in &train.samples {
                for row in s.raw.chunks_exact(MONTAGE_CHANNELS) {
                    mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
                }
            }
            mean.iter_mut().for_each(|m| *m /= count);
            let mut sq = vec![0.0; MONTAGE_CHANNELS];
            for s in &train.samples {
                for row in s.raw.chunks_exact(MONTAGE_CHANNELS) {
                    for ((q, v), m) in sq.iter_mut().zip(row).zip(&mean) {
                        *q += (v - m) * (v - m);
                    }
                }
            }
            norm.raw_std = finish_std(sq, count);
            norm.raw_mean = mean;
        }
        norm
    }

    /// Normalized network inputs `[n, 252, 20, 1]` and `[n, 500, 20]` for
    /// the samples at `idx`, with their class indices.
    pub fn batch(&self, ds: &Dataset, idx: &[usize]) -> (Tensor, Tensor, Vec<usize>) {
        let n = idx.len();
        let mut f = Vec::with_capacity(n * FEATURE_LEN);
        let mut r = Vec::with_capacity(n * RAW_LEN);
        let mut labels = Vec::with_capacity(n);
        for &i in idx {
            let s = &ds.samples[i];
            f.extend(s.features.iter().zip(&self.feature_mean).zip(&self.feature_std).map(|((v, m), sd)| (v - m) / sd));
            for row in s.raw.chunks_exact(MONTAGE_CHANNELS) {
                r.extend(row.iter().zip(&self.raw_mean).zip(&self.raw_std).map(|((v, m), sd)| (v - m) / sd));
            }
            labels.push(s.label().index());
        }
        (
            Tensor { shape: vec![n, N_FEATURES, MONTAGE_CHANNELS, 1], data: f },
            Tensor { shape: vec![n, SEGMENT_LEN, MONTAGE_CHANNELS], data: r },
            labels,
        )
    }

    pub fn to_tensors(&self) -> Vec<(String, Tensor)> {
        let t = |v: &Vec<f64>| Tensor { shape: vec![v.len()], data: v.clone() };
        vec![
            ("norm.feature_mean".into(), t(&self.feature_mean)),
            ("norm.feature_std".into(), t(&self.feature_std)),
            ("norm.raw_mean".into(), t(&self.raw_mean)),
            ("norm.raw_std".into(), t(&self.raw_std)),
        ]
    }

    pub fn from_file(f: &TensorFile) -> Result<Self, TensorFileError> {
        let get = |n: &str, len: usize| f.get_shaped(n, &[len]).map(|t| t.data.clone());
        Ok(Normalizer {
            feature_mean: get("norm.feature_mean", FEATURE_LEN)?,
            feature_std: get("norm.feature_std", FEATURE_LEN)?,
            raw_mean: get("norm.raw_mean", MONTAGE_CHANNELS)?,
            raw_std: get("norm.raw_std", MONTAGE_CHANNELS)?,
        })
    }
}

fn metas_to_json(metas: impl Iterator<Item = SegmentMeta>) -> Value {
    Value::Array(metas.map(|m| serde_json::to_value(m).expect("meta serializes")).collect())
}

fn metas_from_file(f: &TensorFile) -> Result<Vec<SegmentMeta>, DatasetError> {
    let v =
        f.meta.get("segments").cloned().ok_or_else(|| DatasetError::Inconsistent("cache lacks segment list".into()))?;
    serde_json::from_value(v).map_err(|e| DatasetError::Inconsistent(format!("segment list: {e}")))
}

/// Segment cache: tensor `segments` `[N, 20, 500]` (channel-major).
pub fn save_segments(path: &Path, segments: &[Segment], mut meta: Map<String, Value>) -> Result<(), DatasetError> {
    meta.insert("kind".into(), Value::from("segments"));
    meta.insert("segments".into(), metas_to_json(segments.iter().map(|s| s.meta.clone())));
    let mut f = TensorFile::new(meta);
    let data = segments.iter().flat_map(|s| s.data.iter().copied()).collect();
    f.push("segments", Tensor { shape: vec![segments.len(), MONTAGE_CHANNELS, SEGMENT_LEN], data });
    Ok(f.write(path)?)
}

pub fn load_segments(path: &Path) -> Result<Vec<Segment>, DatasetError> {
    let f = TensorFile::read(path)?;
    let metas = metas_from_file(&f)?;
    let t = f.get_shaped("segments", &[metas.len(), MONTAGE_CHANNELS, SEGMENT_LEN])?;
    metas
        .into_iter()
        .zip(t.data.chunks_exact(RAW_LEN))
        .map(|(m, d)| Segment::new(d.to_vec(), m).map_err(|e| DatasetError::Inconsistent(e.to_string())))
        .collect()
}

/// Feature cache: tensor `features` `[N, 252, 20]`, same order as the
/// segment cache it was computed from.
pub fn save_features(path: &Path, ds: &Dataset, mut meta: Map<String, Value>) -> Result<(), DatasetError> {
    meta.insert("kind".into(), Value::from("features"));
    meta.insert("segments".into(), metas_to_json(ds.samples.iter().map(|s| s.meta.clone())));
    let mut f = TensorFile::new(meta);
    let data = ds.samples.iter().flat_map(|s| s.features.iter().copied()).collect();
    f.push("features", Tensor { shape: vec![ds.len(), N_FEATURES, MONTAGE_CHANNELS], data });
    Ok(f.write(path)?)
}

/// Joins a segment cache with its feature cache.
pub fn load_dataset(segments_path: &Path, features_path: &Path) -> Result<Dataset, DatasetError> {
    let segments = load_segments(segments_path)?;
    let f = TensorFile::read(features_path)?;
    let metas = metas_from_file(&f)?;
    if metas.len() != segments.len() || metas.iter().zip(&segments).any(|(m, s)| *m != s.meta) {
        return Err(DatasetError::Inconsistent("feature cache does not match segment cache".into()));
    }
    let t = f.get_shaped("features", &[metas.len(), N_FEATURES, MONTAGE_CHANNELS])?;
    let features = t.data.chunks_exact(FEATURE_LEN).map(<[f64]>::to_vec).collect();
    Ok(Dataset::from_parts(&segments, features))
}
