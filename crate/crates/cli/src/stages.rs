//! One function per subcommand. Each artifact carries the hash of the
//! configuration (and upstream artifacts) that produced it, plus the seed;
//! a stage whose outputs already carry the expected hash is skipped.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::{json, Map, Value};

use seizure_core::dataset::{load_dataset, load_segments, save_features, save_segments, Dataset};
use seizure_core::evaluation::{argmax_rows, make_folds, run_cross_validation, FoldManifest, Scheme};
use seizure_core::ingest::synth::file_stem;
use seizure_core::ingest::{edf, generate_synthetic_corpus, list_edf_files, load_recording, write_sidecar, CorpusSpec};
use seizure_core::neural::{ModelConfig, Variant};
use seizure_core::preprocess::{
    condition_recording, preprocess_recording, segment_all_windows, MontageSpec, Segment, SegmentMeta,
};
use seizure_core::recording::SeizureType;
use seizure_core::selftest;
use seizure_core::tensorfile::{config_hash, write_atomic, TensorFile};
use seizure_core::training::{evaluate_probs, train_model_observed, Checkpoint, TrainConfig, TrainOutcome};

pub const SEGMENTS_FILE: &str = "segments.mpsz";
pub const FEATURES_FILE: &str = "features.mpsz";
pub const CORPUS_MANIFEST: &str = "corpus.json";
pub const SCHEMA_VERSION: u32 = 1;

fn provenance(hash: &str, seed: u64) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("config_hash".into(), Value::from(hash));
    m.insert("seed".into(), Value::from(seed));
    m
}

fn tensor_hash(path: &Path) -> Option<String> {
    TensorFile::read(path).ok()?.meta_str("config_hash").map(str::to_string)
}

fn json_hash(path: &Path) -> Option<String> {
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path).ok()?).ok()?;
    v.get("config_hash")?.as_str().map(str::to_string)
}

fn skip(stage: &str, current: Option<String>, hash: &str, force: bool) -> bool {
    let fresh = !force && current.as_deref() == Some(hash);
    if fresh {
        println!("{stage}: outputs up to date (config {}), use --force to rebuild", &hash[..12]);
    }
    fresh
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn gen_corpus(out: &Path, spec: &CorpusSpec, seed: u64, force: bool) -> Result<()> {
    let hash = config_hash(&json!({ "stage": "gen-corpus", "spec": spec, "seed": seed }));
    let manifest = out.join(CORPUS_MANIFEST);
    if skip("gen-corpus", json_hash(&manifest), &hash, force) {
        return Ok(());
    }
    let recs = generate_synthetic_corpus(spec, seed)?;
    let mut files = Vec::new();
    for rec in &recs {
        let peak = rec.samples.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let header = edf::header_for(rec, (peak * 1.05).ceil().max(100.0));
        let bytes = edf::write_edf(&header, rec)?;
        let stem = file_stem(rec);
        let edf_path = out.join(format!("{stem}.edf"));
        write_atomic(&edf_path, &bytes)?;
        write_atomic(&out.join(format!("{stem}.json")), write_sidecar(&rec.annotations).as_bytes())?;
        files.push(json!({ "edf": format!("{stem}.edf"), "sha256": sha256_hex(&bytes) }));
    }
    write_json(
        &manifest,
        &json!({ "version": SCHEMA_VERSION, "kind": "corpus", "config_hash": hash, "seed": seed, "spec": spec, "files": files }),
    )?;
    println!("gen-corpus: wrote {} recordings to {}", recs.len(), out.display());
    Ok(())
}

pub fn ingest(corpus: &Path, cache: &Path, montage: &MontageSpec, seed: u64, force: bool) -> Result<()> {
    let edfs = list_edf_files(corpus)?;
    if edfs.is_empty() {
        bail!("no .edf files in {}", corpus.display());
    }
    let mut inputs = Vec::new();
    for p in &edfs {
        let mut bytes = std::fs::read(p).with_context(|| p.display().to_string())?;
        if let Ok(side) = std::fs::read(seizure_core::ingest::sidecar_path(p)) {
            bytes.extend(side);
        }
        inputs.push(sha256_hex(&bytes));
    }
    let hash = config_hash(&json!({ "stage": "ingest", "inputs": inputs, "montage": montage.to_text() }));
    let out = cache.join(SEGMENTS_FILE);
    if skip("ingest", tensor_hash(&out), &hash, force) {
        return Ok(());
    }
    let mut segments = Vec::new();
    for p in &edfs {
        let rec = load_recording(p)?;
        let segs = preprocess_recording(&rec, montage).with_context(|| p.display().to_string())?;
        segments.extend(segs);
    }
    save_segments(&out, &segments, provenance(&hash, seed))?;
    println!("ingest: {} segments from {} recordings -> {}", segments.len(), edfs.len(), out.display());
    Ok(())
}

pub fn extract(cache: &Path, seed: u64, force: bool) -> Result<()> {
    let seg_path = cache.join(SEGMENTS_FILE);
    let upstream =
        tensor_hash(&seg_path).with_context(|| format!("{} missing or unreadable; run ingest", seg_path.display()))?;
    let hash = config_hash(&json!({ "stage": "extract", "segments": upstream }));
    let out = cache.join(FEATURES_FILE);
    if skip("extract", tensor_hash(&out), &hash, force) {
        return Ok(());
    }
    let segments = load_segments(&seg_path)?;
    let ds = Dataset::from_segments(&segments)?;
    save_features(&out, &ds, provenance(&hash, seed))?;
    println!("extract: {} feature tensors of 252x20 -> {}", ds.len(), out.display());
    Ok(())
}

fn load_cached(cache: &Path) -> Result<(Dataset, String)> {
    let feat = cache.join(FEATURES_FILE);
    let upstream =
        tensor_hash(&feat).with_context(|| format!("{} missing or unreadable; run extract", feat.display()))?;
    Ok((load_dataset(&cache.join(SEGMENTS_FILE), &feat)?, upstream))
}

fn history_csv(out: &TrainOutcome, hash: &str, seed: u64) -> String {
    format!(
        "# version={SCHEMA_VERSION} config_hash={hash} seed={seed} stop={} best_epoch={}\n{}",
        serde_json::to_value(out.history.stop_reason)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default(),
        out.history.best_epoch,
        out.history.to_csv()
    )
}

fn log_epoch(prefix: &str, e: &seizure_core::training::EpochRecord) {
    eprintln!(
        "{prefix}epoch {:>3}  train {:.4}  val {:.4}  lr {:.2e}  {:.1}s",
        e.epoch, e.train_loss, e.val_loss, e.lr, e.wall_s
    );
}

/// Trains on every cached segment with a stratified validation hold-out.
pub fn train(cache: &Path, out_dir: &Path, train: &TrainConfig, model: &ModelConfig, force: bool) -> Result<()> {
    let (ds, upstream) = load_cached(cache)?;
    let hash = config_hash(&json!({ "stage": "train", "features": upstream, "train": train, "model": model }));
    let ck_path = out_dir.join("checkpoint.mpsz");
    if skip("train", tensor_hash(&ck_path), &hash, force) {
        return Ok(());
    }
    let metas: Vec<SegmentMeta> = ds.samples.iter().map(|s| s.meta.clone()).collect();
    let (tr, va) = seizure_core::evaluation::folds::stratified_split(&metas, train.val_fraction, train.seed);
    let out = train_model_observed(&ds.subset(&tr), &ds.subset(&va), train, model, |e| log_epoch("", e))?;
    write_atomic(&out_dir.join("history.csv"), history_csv(&out, &hash, train.seed).as_bytes())?;
    let ck = Checkpoint { model: out.model, norm: out.norm, meta: provenance(&hash, train.seed) };
    ck.save(&ck_path)?;
    println!(
        "train: best epoch {} of {}, checkpoint {}",
        out.history.best_epoch,
        out.history.epochs.len(),
        ck_path.display()
    );
    Ok(())
}

/// Output directory of one cross-validation run.
pub fn crossval_dir(out_dir: &Path, scheme: Scheme, variant: Variant) -> PathBuf {
    out_dir.join(scheme.to_string()).join(variant.to_string())
}

pub fn crossval(
    cache: &Path,
    out_dir: &Path,
    scheme: Scheme,
    variants: &[Variant],
    train: &TrainConfig,
    model: &ModelConfig,
    force: bool,
) -> Result<()> {
    let (ds, upstream) = load_cached(cache)?;
    let metas: Vec<SegmentMeta> = ds.samples.iter().map(|s| s.meta.clone()).collect();
    let manifest: FoldManifest = make_folds(scheme, &metas, train.seed, train.val_fraction)?;
    for &variant in variants {
        let model = ModelConfig { variant, ..model.clone() };
        let hash = config_hash(&json!({
            "stage": "crossval", "features": upstream, "scheme": scheme, "train": train, "model": model
        }));
        let dir = crossval_dir(out_dir, scheme, variant);
        let aggregate = dir.join("aggregate.json");
        if skip(&format!("crossval {variant}"), json_hash(&aggregate), &hash, force) {
            continue;
        }
        let mut m = serde_json::to_value(&manifest)?;
        m["config_hash"] = Value::from(hash.clone());
        write_json(&dir.join("manifest.json"), &m)?;
        let run = run_cross_validation(&ds, &manifest, train, &model, &hash, |f, e| {
            log_epoch(&format!("{variant} fold {f} "), e)
        })?;
        for (r, out) in run.report.folds.iter().zip(&run.outcomes) {
            let f = r.fold;
            let seed = train.seed.wrapping_add(f as u64);
            let mut v = serde_json::to_value(r)?;
            v["version"] = Value::from(SCHEMA_VERSION);
            v["config_hash"] = Value::from(hash.clone());
            v["seed"] = Value::from(seed);
            write_json(&dir.join(format!("fold_{f}.json")), &v)?;
            let csv = format!("# config_hash={hash} seed={seed}\n{}", r.confusion.to_csv());
            write_atomic(&dir.join(format!("confusion_{f}.csv")), csv.as_bytes())?;
            write_atomic(&dir.join(format!("history_{f}.csv")), history_csv(out, &hash, seed).as_bytes())?;
            let ck = Checkpoint { model: out.model.clone(), norm: out.norm.clone(), meta: provenance(&hash, seed) };
            ck.save(&dir.join(format!("checkpoint_{f}.mpsz")))?;
        }
        let pooled = format!("# config_hash={hash} seed={}\n{}", train.seed, run.report.pooled_confusion.to_csv());
        write_atomic(&dir.join("confusion_pooled.csv"), pooled.as_bytes())?;
        write_json(&aggregate, &run.report)?;
        let f1s: Vec<String> = run.report.folds.iter().map(|r| format!("{:.4}", r.weighted_f1)).collect();
        println!(
            "crossval {scheme} {variant}: mean weighted F1 {:.4} (folds {}) -> {}",
            run.report.mean_weighted_f1,
            f1s.join(", "),
            dir.display()
        );
    }
    Ok(())
}

/// Per-window class probabilities for every 2 s window of one EDF file.
pub fn predict(checkpoint: &Path, edf_path: &Path, montage: &MontageSpec, out: &Path) -> Result<()> {
    let mut ck = Checkpoint::load(checkpoint)?;
    let rec = load_recording(edf_path)?;
    let conditioned = condition_recording(&rec, montage)?;
    let windows = segment_all_windows(&conditioned)?;
    if windows.is_empty() {
        bail!("{} is shorter than one 2 s window", edf_path.display());
    }
    // Labels are unknown; the placeholder meta only keys the windows.
    let segments: Vec<Segment> = windows
        .iter()
        .enumerate()
        .map(|(k, (_, data))| {
            let meta = SegmentMeta {
                label: SeizureType::Cpz,
                patient_id: rec.patient_id.clone(),
                session_id: rec.session_id.clone(),
                event_index: 0,
                index_in_event: k,
            };
            Segment::new(data.clone(), meta)
        })
        .collect::<Result<_, _>>()?;
    let ds = Dataset::from_segments(&segments)?;
    let probs = evaluate_probs(&mut ck.model, &ck.norm, &ds, 32)?;
    let k = ck.model.config.n_classes;
    let preds = argmax_rows(&probs, k);
    let hash = ck.meta.get("config_hash").and_then(Value::as_str).unwrap_or("unknown");
    let seed = ck.meta.get("seed").and_then(Value::as_u64).unwrap_or(0);
    let mut csv = format!("# version={SCHEMA_VERSION} config_hash={hash} seed={seed}\nstart_s");
    for c in SeizureType::ALL {
        csv.push(',');
        csv.push_str(c.code());
    }
    csv.push_str(",predicted\n");
    for ((start, _), (row, &p)) in windows.iter().zip(probs.chunks(k).zip(&preds)) {
        csv.push_str(&format!("{start:.3}"));
        for v in row {
            csv.push_str(&format!(",{v:.6}"));
        }
        csv.push_str(&format!(",{}\n", SeizureType::ALL[p].code()));
    }
    write_atomic(out, csv.as_bytes())?;
    println!("predict: {} windows -> {}", windows.len(), out.display());
    Ok(())
}

/// Runs the numerical self-checks; false when any fails.
pub fn selftest(signals: usize, seed: u64) -> bool {
    let mut ok = true;
    for c in selftest::wavelet_suite(signals, seed).into_iter().chain(selftest::gradient_suite(seed)) {
        let verdict = if c.passed() { "PASS" } else { "FAIL" };
        println!("{verdict}  {:<36} {:.3e} < {:.0e}  (n={})", c.name, c.value, c.limit, c.samples);
        ok &= c.passed();
    }
    ok
}
