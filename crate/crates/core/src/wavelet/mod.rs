//! Multiresolution decompositions of single-channel segments and the
//! 252-value feature vector built from their sub-bands.

pub mod dtcwt;
pub mod dwt;
pub mod features;
pub mod filters;
pub mod wpd;

pub use dtcwt::dtcwt_decompose;
pub use dwt::{dwt_decompose, wavedec, waverec, Boundary};
pub use features::{extract_feature_tensor, subband_stats, FeatureTensor, N_FEATURES};
pub use filters::Wavelet;
pub use wpd::{wpd_decompose, wpd_reconstruct};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Dwt,
    Dtcwt,
    Wpd,
}

/// Ordered sub-bands of one decomposition. DTCWT detail bands hold
/// magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandSet {
    pub method: Method,
    pub bands: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WaveletError {
    #[error("signal of {got} samples is too short; need at least {needed}")]
    SignalTooShort { got: usize, needed: usize },
    #[error("empty sub-band")]
    EmptyBand,
    #[error("feature tensor must hold 252x20 finite values, got {0} entries")]
    BadTensor(usize),
}
