//! Metrics, fold construction and the cross-validation driver.

pub mod cv;
pub mod folds;
pub mod metrics;

pub use cv::{mean_f1, run_cross_validation, CvReport, CvRun};
pub use folds::{make_folds, make_patient_folds, make_seizure_folds, subsample_test, Fold, FoldManifest, Scheme};
pub use metrics::{argmax_rows, weighted_f1, ClassScore, ConfusionMatrix, EvalReport};

use crate::training::TrainError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("{truths} truths but {preds} predictions")]
    LengthMismatch { truths: usize, preds: usize },
    #[error("class index {0} out of range")]
    InvalidClass(usize),
    #[error("class {class} has {count} segments, at least {needed} needed")]
    TooFewSegments { class: &'static str, count: usize, needed: usize },
    #[error("class {class} is recorded from {patients} patients, at least 3 needed")]
    InfeasibleSplit { class: &'static str, patients: usize },
    #[error("fold references unknown segment {0}")]
    UnknownSegment(String),
    #[error(transparent)]
    Train(#[from] TrainError),
}
