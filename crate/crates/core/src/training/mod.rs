//! Cross-entropy training with Adam, plateau learning-rate reduction and
//! early stopping on validation loss.

pub mod adam;
pub mod checkpoint;
pub mod loss;
pub mod schedule;
pub mod train;

use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use checkpoint::Checkpoint;
pub use loss::cross_entropy;
pub use schedule::{EarlyStopping, PlateauScheduler};
pub use train::{evaluate_probs, train_model, train_model_observed, TrainOutcome};

use crate::neural::NeuralError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("class {0} has no training samples")]
    MissingClass(&'static str),
    #[error("{0} set is empty")]
    EmptySet(&'static str),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    File(#[from] crate::tensorfile::TensorFileError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lr_init: f64,
    pub lr_min: f64,
    pub lr_factor: f64,
    pub lr_patience: usize,
    pub es_patience: usize,
    /// Smallest validation-loss decrease that counts as an improvement.
    pub min_delta: f64,
    /// Share of the training side held out for validation.
    pub val_fraction: f64,
    pub seed: u64,
    pub standardize_features: bool,
    pub zscore_raw: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            max_epochs: 100,
            lr_init: 0.01,
            lr_min: 1e-4,
            lr_factor: 0.5,
            lr_patience: 5,
            es_patience: 10,
            min_delta: 1e-6,
            val_fraction: 0.2,
            seed: 0,
            standardize_features: true,
            zscore_raw: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive");
        }
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr_init) {
            return bad("need 0 < lr_min <= lr_init");
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return bad("lr_factor must lie in (0, 1)");
        }
        if self.lr_patience == 0 || self.es_patience == 0 {
            return bad("patiences must be at least 1");
        }
        if !(self.min_delta >= 0.0) {
            return bad("min_delta must be non-negative");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
    /// Wall-clock seconds; excluded from CSV output so that reruns are
    /// byte-identical.
    pub wall_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    /// 1-based epoch whose weights were restored.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,lr\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{:.17e},{:.17e},{:.17e}\n", e.epoch, e.train_loss, e.val_loss, e.lr));
        }
        s
    }

    /// Parses the output of [`TrainHistory::to_csv`] back into
    /// `(epoch, train_loss, val_loss, lr)` rows. `#` comment lines and the
    /// header are skipped.
    pub fn parse_csv(text: &str) -> Result<Vec<(usize, f64, f64, f64)>, String> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') || line.starts_with("epoch,") {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let err = || format!("line {}: malformed history row", i + 1);
            if f.len() != 4 {
                return Err(err());
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| err());
            rows.push((f[0].trim().parse().map_err(|_| err())?, num(f[1])?, num(f[2])?, num(f[3])?));
        }
        Ok(rows)
    }
}
