//! Dense-tensor layers with hand-written gradients and the multi-path
//! classifier assembled from them. All tensors are NHWC, `f64`.

pub mod attention;
pub mod cnn;
pub mod conv;
pub mod gradcheck;
pub mod layers;
pub mod lstm;
pub mod model;
pub mod param;
pub mod tensor;

use serde::{Deserialize, Serialize};

pub use model::{Batch, MpSeizNet};
pub use param::{Ctx, Param};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid model configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Wavelet-feature CNN only.
    Cnn,
    /// Raw-signal Bi-LSTM with attention only.
    BiLstm,
    /// Both paths, concatenated before the classifier.
    Fused,
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(Variant::Cnn),
            "bilstm" | "bi-lstm" | "lstm" => Ok(Variant::BiLstm),
            "fused" | "mp-seiznet" | "mpseiznet" => Ok(Variant::Fused),
            _ => Err(format!("unknown model variant '{s}' (expected cnn, bilstm or fused)")),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Cnn => "cnn",
            Variant::BiLstm => "bilstm",
            Variant::Fused => "fused",
        })
    }
}

/// Architecture hyper-parameters. The defaults give the full-size network;
/// tests shrink the widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub variant: Variant,
    pub feature_rows: usize,
    pub feature_cols: usize,
    pub base_maps: usize,
    pub dense_units: usize,
    pub seq_len: usize,
    pub seq_channels: usize,
    pub lstm_hidden: usize,
    pub n_classes: usize,
    pub lrelu_alpha: f64,
    pub bn_momentum: f64,
    pub spatial_dropout: f64,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::Fused,
            feature_rows: crate::wavelet::N_FEATURES,
            feature_cols: 20,
            base_maps: 32,
            dense_units: 512,
            seq_len: 500,
            seq_channels: 20,
            lstm_hidden: 64,
            n_classes: 5,
            lrelu_alpha: layers::LRELU_ALPHA,
            bn_momentum: layers::BN_MOMENTUM,
            spatial_dropout: 0.2,
            dropout: 0.5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |m: &str| Err(NeuralError::Config(m.to_string()));
        if [self.base_maps, self.dense_units, self.seq_len, self.seq_channels, self.lstm_hidden].contains(&0) {
            return bad("widths and lengths must be positive");
        }
        if self.n_classes < 2 {
            return bad("need at least two classes");
        }
        for (name, r) in [("spatial_dropout", self.spatial_dropout), ("dropout", self.dropout)] {
            if !(0.0..1.0).contains(&r) {
                return Err(NeuralError::Config(format!("{name} must lie in [0, 1), got {r}")));
            }
        }
        if !(0.0..1.0).contains(&self.bn_momentum) {
            return bad("bn_momentum must lie in [0, 1)");
        }
        if self.variant != Variant::BiLstm {
            cnn::flattened_len(self)?;
        }
        Ok(())
    }
}
