use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, Normalizer};
use crate::neural::{Batch, Ctx, ModelConfig, MpSeizNet, Variant};
use crate::recording::SeizureType;

use super::loss::{cross_entropy, cross_entropy_probs};
use super::schedule::{EarlyStopping, PlateauScheduler, Verdict};
use super::{Adam, EpochRecord, StopReason, TrainConfig, TrainError, TrainHistory};

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MpSeizNet,
    pub norm: Normalizer,
    pub history: TrainHistory,
}

/// Seed of the dropout stream for one mini-batch.
fn batch_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    let mut z = seed ^ ((epoch as u64) << 32 | batch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^ (z >> 31)
}

fn inputs<'a>(variant: Variant, f: &'a crate::neural::Tensor, r: &'a crate::neural::Tensor) -> Batch<'a> {
    Batch { features: (variant != Variant::BiLstm).then_some(f), raw: (variant != Variant::Cnn).then_some(r) }
}

/// Class probabilities `[N·K]` for every sample of `ds`, in order.
pub fn evaluate_probs(
    model: &mut MpSeizNet,
    norm: &Normalizer,
    ds: &Dataset,
    batch_size: usize,
) -> Result<Vec<f64>, TrainError> {
    let variant = model.config.variant;
    let mut out = Vec::with_capacity(ds.len() * model.config.n_classes);
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let (f, r, _) = norm.batch(ds, chunk);
        let p = model.forward(inputs(variant, &f, &r), &mut Ctx::eval())?;
        out.extend(p.data);
    }
    Ok(out)
}

fn mean_loss(model: &mut MpSeizNet, norm: &Normalizer, ds: &Dataset, batch_size: usize) -> Result<f64, TrainError> {
    let p = evaluate_probs(model, norm, ds, batch_size)?;
    Ok(cross_entropy_probs(&p, model.config.n_classes, &ds.labels()))
}

pub fn train_model(
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
) -> Result<TrainOutcome, TrainError> {
    train_model_observed(train, val, cfg, model_cfg, |_| {})
}

/// As [`train_model`], calling `on_epoch` after every epoch.
pub fn train_model_observed(
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptySet("training"));
    }
    if val.is_empty() {
        return Err(TrainError::EmptySet("validation"));
    }
    let counts = train.class_counts();
    if let Some(missing) = SeizureType::ALL.iter().find(|c| counts[c.index()] == 0) {
        return Err(TrainError::MissingClass(missing.code()));
    }

    let norm = Normalizer::fit(train, cfg.standardize_features, cfg.zscore_raw);
    let mut model = MpSeizNet::new(model_cfg, cfg.seed)?;
    let variant = model_cfg.variant;
    let mut opt = Adam::new();
    let mut sched = PlateauScheduler::new(cfg.lr_init, cfg.lr_factor, cfg.lr_patience, cfg.lr_min, cfg.min_delta);
    let mut stopper = EarlyStopping::new(cfg.es_patience, cfg.min_delta);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5EED));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut lr = cfg.lr_init;
    let mut best = model.clone();
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (f, r, labels) = norm.batch(train, chunk);
            let mut ctx = Ctx::train(batch_seed(cfg.seed, epoch, b));
            let logits = model.forward_logits(inputs(variant, &f, &r), &mut ctx)?;
            let (loss, dlogits) = cross_entropy(&logits, &labels)?;
            model.zero_grad();
            model.backward(&dlogits);
            opt.step(model.params_mut(), lr);
            total += loss * chunk.len() as f64;
        }
        let val_loss = mean_loss(&mut model, &norm, val, cfg.batch_size)?;
        let rec = EpochRecord {
            epoch,
            train_loss: total / train.len() as f64,
            val_loss,
            lr,
            wall_s: start.elapsed().as_secs_f64(),
        };
        on_epoch(&rec);
        epochs.push(rec);
        let verdict = stopper.observe(val_loss);
        if verdict == Verdict::Improved {
            best = model.clone();
        }
        lr = sched.observe(val_loss);
        if verdict == Verdict::Stop {
            stop_reason = StopReason::EarlyStop;
            break;
        }
    }
    let history = TrainHistory { epochs, stop_reason, best_epoch: stopper.best_epoch };
    Ok(TrainOutcome { model: best, norm, history })
}
