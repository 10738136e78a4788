use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::neural::{ModelConfig, Variant};
use crate::training::{evaluate_probs, train_model_observed, EpochRecord, TrainConfig, TrainOutcome};

use super::folds::{FoldManifest, Scheme};
use super::metrics::{argmax_rows, weighted_f1, ConfusionMatrix, EvalReport};
use super::EvalError;

pub const REPORT_VERSION: u32 = 1;

/// Per-fold reports of one model variant and their unweighted mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub version: u32,
    pub scheme: Scheme,
    pub variant: Variant,
    pub seed: u64,
    pub config_hash: String,
    pub folds: Vec<EvalReport>,
    pub mean_weighted_f1: f64,
    /// Sum of the fold confusion matrices.
    pub pooled_confusion: ConfusionMatrix,
}

#[derive(Debug, Clone)]
pub struct CvRun {
    pub report: CvReport,
    /// Trained model of each fold, in fold order.
    pub outcomes: Vec<TrainOutcome>,
}

pub fn mean_f1(reports: &[EvalReport]) -> f64 {
    reports.iter().map(|r| r.weighted_f1).sum::<f64>() / reports.len() as f64
}

fn resolve(index: &HashMap<String, usize>, ids: &[String]) -> Result<Vec<usize>, EvalError> {
    ids.iter().map(|id| index.get(id).copied().ok_or_else(|| EvalError::UnknownSegment(id.clone()))).collect()
}

/// Trains and scores every round of `manifest`. Rounds run in parallel;
/// fold `f` trains with seed `train.seed + f`.
pub fn run_cross_validation(
    ds: &Dataset,
    manifest: &FoldManifest,
    train: &TrainConfig,
    model: &ModelConfig,
    config_hash: &str,
    on_epoch: impl Fn(usize, &EpochRecord) + Sync,
) -> Result<CvRun, EvalError> {
    let index: HashMap<String, usize> = ds.samples.iter().enumerate().map(|(i, s)| (s.meta.id(), i)).collect();
    let results: Vec<(EvalReport, TrainOutcome)> = manifest
        .folds
        .par_iter()
        .map(|fold| {
            let tr = ds.subset(&resolve(&index, &fold.train)?);
            let va = ds.subset(&resolve(&index, &fold.val)?);
            let te = ds.subset(&resolve(&index, &fold.test_eval)?);
            let cfg = TrainConfig { seed: train.seed.wrapping_add(fold.id as u64), ..train.clone() };
            let mut out = train_model_observed(&tr, &va, &cfg, model, |e| on_epoch(fold.id, e))?;
            let probs = evaluate_probs(&mut out.model, &out.norm, &te, cfg.batch_size)?;
            let preds = argmax_rows(&probs, model.n_classes);
            let cm = ConfusionMatrix::from_pairs(&te.labels(), &preds)?;
            Ok((weighted_f1(&cm, fold.id)?, out))
        })
        .collect::<Result<_, EvalError>>()?;
    let (folds, outcomes): (Vec<EvalReport>, Vec<TrainOutcome>) = results.into_iter().unzip();
    let mut pooled = ConfusionMatrix::default();
    for r in &folds {
        pooled.add(&r.confusion);
    }
    let report = CvReport {
        version: REPORT_VERSION,
        scheme: manifest.scheme,
        variant: model.variant,
        seed: train.seed,
        config_hash: config_hash.to_string(),
        mean_weighted_f1: mean_f1(&folds),
        folds,
        pooled_confusion: pooled,
    };
    Ok(CvRun { report, outcomes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::folds::make_seizure_folds;
    use crate::preprocess::{Segment, SegmentMeta};
    use crate::recording::SeizureType;

    fn report(f1: f64) -> EvalReport {
        EvalReport { fold: 0, confusion: ConfusionMatrix::default(), per_class: vec![], weighted_f1: f1 }
    }

    #[test]
    fn aggregate_is_the_plain_mean() {
        let r = [report(0.9), report(0.7), report(0.8)];
        assert_eq!(mean_f1(&r), (0.9 + 0.7 + 0.8) / 3.0);
    }

    /// Classes differ by a constant offset, so even one epoch of a tiny
    /// Bi-LSTM separates some of them. Only plumbing is checked here.
    #[test]
    fn runs_every_fold_and_shares_the_manifest_across_variants() {
        let mut segs = Vec::new();
        for (c, &class) in SeizureType::ALL.iter().enumerate() {
            for k in 0..10 {
                let data = (0..10_000).map(|i| c as f64 * 10.0 + ((i * 7 + k) % 13) as f64).collect();
                let meta = SegmentMeta {
                    label: class,
                    patient_id: format!("p{c}"),
                    session_id: "s".into(),
                    event_index: 0,
                    index_in_event: k,
                };
                segs.push(Segment::new(data, meta).unwrap());
            }
        }
        let ds = Dataset::from_segments(&segs).unwrap();
        let metas: Vec<SegmentMeta> = ds.samples.iter().map(|s| s.meta.clone()).collect();
        let manifest = make_seizure_folds(&metas, 4, 0.2).unwrap();
        let train = TrainConfig { batch_size: 8, max_epochs: 1, ..TrainConfig::default() };
        let small =
            |variant| ModelConfig { variant, base_maps: 2, dense_units: 4, lstm_hidden: 3, ..ModelConfig::default() };
        let a = run_cross_validation(&ds, &manifest, &train, &small(Variant::BiLstm), "h", |_, _| {}).unwrap();
        let b = run_cross_validation(&ds, &manifest, &train, &small(Variant::Cnn), "h", |_, _| {}).unwrap();
        assert_eq!(a.report.folds.len(), 5);
        assert_eq!(a.report.pooled_confusion.total(), 50);
        for (x, y) in a.report.folds.iter().zip(&b.report.folds) {
            assert_eq!(x.confusion.total(), y.confusion.total());
            for c in 0..5 {
                assert_eq!(x.confusion.support(c), y.confusion.support(c));
            }
        }
        assert_eq!(a.report.mean_weighted_f1, mean_f1(&a.report.folds));
        let mut bad = manifest.clone();
        bad.folds[2].train.push("nope".into());
        assert!(matches!(
            run_cross_validation(&ds, &bad, &train, &small(Variant::Cnn), "h", |_, _| {}),
            Err(EvalError::UnknownSegment(_))
        ));
    }
}
