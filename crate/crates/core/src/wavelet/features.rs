use crate::preprocess::montage::MONTAGE_CHANNELS;
use crate::preprocess::{Segment, SEGMENT_LEN};

use super::dtcwt::dtcwt_decompose;
use super::dwt::dwt_decompose;
use super::filters::Wavelet;
use super::wpd::wpd_decompose;
use super::{SubbandSet, WaveletError};

pub const FEATURES_PER_BAND: usize = 6;
/// DWT and DTCWT produce six bands, but only `[A5, D5, D4, D3, D2]` are
/// featurized: D1 spans 62.5-125 Hz at 250 Hz, above the band-pass edge.
pub const PYRAMID_FEATURED_BANDS: usize = 5;
pub const DWT_FEATURES: usize = PYRAMID_FEATURED_BANDS * FEATURES_PER_BAND;
pub const DTCWT_FEATURES: usize = PYRAMID_FEATURED_BANDS * FEATURES_PER_BAND;
pub const WPD_FEATURES: usize = 32 * FEATURES_PER_BAND;
pub const N_FEATURES: usize = DWT_FEATURES + DTCWT_FEATURES + WPD_FEATURES;

/// Guard for the ratio feature and the zero-variance convention.
pub const EPS: f64 = 1e-12;

/// `[mean|b|, mean b², std, ratio of mean|b| to the neighbor's, skewness,
/// excess kurtosis]`.
pub fn subband_stats(band: &[f64], neighbor_mav: f64) -> Result<[f64; 6], WaveletError> {
    if band.is_empty() {
        return Err(WaveletError::EmptyBand);
    }
    let (mut abs_sum, mut sq_sum) = (0.0, 0.0);
    // Running central moment sums (Terriberry's update).
    let (mut mean, mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0, 0.0);
    for (i, &x) in band.iter().enumerate() {
        abs_sum += x.abs();
        sq_sum += x * x;
        let n1 = i as f64;
        let n = n1 + 1.0;
        let delta = x - mean;
        let dn = delta / n;
        let dn2 = dn * dn;
        let term1 = delta * dn * n1;
        mean += dn;
        m4 += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * m2 - 4.0 * dn * m3;
        m3 += term1 * dn * (n - 2.0) - 3.0 * dn * m2;
        m2 += term1;
    }
    let n = band.len() as f64;
    let f1 = abs_sum / n;
    let var = m2 / n;
    let (skew, kurt) = if var < EPS { (0.0, 0.0) } else { (m3 / n / var.powf(1.5), m4 / n / (var * var) - 3.0) };
    Ok([f1, sq_sum / n, var.sqrt(), f1 / neighbor_mav.max(EPS), skew, kurt])
}

/// Six statistics for every band, band-major. Each band's ratio feature
/// uses the next band; the last band uses its predecessor.
pub fn band_features(bands: &[Vec<f64>]) -> Result<Vec<f64>, WaveletError> {
    let mav: Vec<f64> = bands
        .iter()
        .map(|b| if b.is_empty() { 0.0 } else { b.iter().map(|v| v.abs()).sum::<f64>() / b.len() as f64 })
        .collect();
    let k = bands.len();
    let mut out = Vec::with_capacity(k * FEATURES_PER_BAND);
    for (i, band) in bands.iter().enumerate() {
        let neighbor = if i + 1 < k { mav[i + 1] } else { mav[i.saturating_sub(1)] };
        out.extend(subband_stats(band, neighbor)?);
    }
    Ok(out)
}

/// 252 features of one channel: `[DWT 30 | DTCWT 30 | WPD 192]`.
pub fn channel_features(x: &[f64], w: &Wavelet) -> Result<Vec<f64>, WaveletError> {
    let pyramid = |set: SubbandSet| band_features(&set.bands[..PYRAMID_FEATURED_BANDS]);
    let mut v = pyramid(dwt_decompose(x, w)?)?;
    v.extend(pyramid(dtcwt_decompose(x)?)?);
    v.extend(band_features(&wpd_decompose(x, w)?.bands)?);
    debug_assert_eq!(v.len(), N_FEATURES);
    Ok(v)
}

/// Feature matrix of one segment, 252 rows (features) by 20 columns
/// (channels), stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub data: Vec<f64>,
}

impl FeatureTensor {
    pub const ROWS: usize = N_FEATURES;
    pub const COLS: usize = MONTAGE_CHANNELS;

    pub fn from_data(data: Vec<f64>) -> Result<Self, WaveletError> {
        if data.len() != Self::ROWS * Self::COLS || data.iter().any(|v| !v.is_finite()) {
            return Err(WaveletError::BadTensor(data.len()));
        }
        Ok(FeatureTensor { data })
    }

    pub fn get(&self, feature: usize, channel: usize) -> f64 {
        self.data[feature * Self::COLS + channel]
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        (0..Self::ROWS).map(|f| self.get(f, c)).collect()
    }
}

pub fn extract_feature_tensor(seg: &Segment) -> Result<FeatureTensor, WaveletError> {
    extract_feature_tensor_with(seg, &Wavelet::db4())
}

pub fn extract_feature_tensor_with(seg: &Segment, w: &Wavelet) -> Result<FeatureTensor, WaveletError> {
    let mut data = vec![0.0; N_FEATURES * MONTAGE_CHANNELS];
    for c in 0..MONTAGE_CHANNELS {
        let feats = channel_features(seg.channel(c), w)?;
        for (f, v) in feats.into_iter().enumerate() {
            data[f * MONTAGE_CHANNELS + c] = v;
        }
    }
    FeatureTensor::from_data(data)
}

const _: () = assert!(N_FEATURES == 252 && SEGMENT_LEN == 500);
