//! End-to-end acceptance run. Prints one PASS/FAIL line per check and exits
//! non-zero if any check fails.

use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use seizure_core::dataset::Dataset;
use seizure_core::evaluation::folds::stratified_split;
use seizure_core::evaluation::{
    argmax_rows, make_folds, run_cross_validation, weighted_f1, ConfusionMatrix, CvRun, FoldManifest, Scheme,
};
use seizure_core::ingest::edf::{read_digital, write_edf_digital};
use seizure_core::ingest::{
    generate_synthetic_corpus, parse_edf, parse_edf_header, CorpusSpec, EdfHeader, SignalHeader,
};
use seizure_core::neural::{Batch, Ctx, ModelConfig, MpSeizNet, Tensor, Variant};
use seizure_core::preprocess::{preprocess_recording, MontageSpec, Segment};
use seizure_core::selftest::{gradient_suite, Check};
use seizure_core::training::schedule::Verdict;
use seizure_core::training::{evaluate_probs, train_model, Checkpoint, EarlyStopping, PlateauScheduler, TrainConfig};
use seizure_core::wavelet::dtcwt::dtcwt_forward;
use seizure_core::wavelet::features::{band_features, channel_features, DTCWT_FEATURES, DWT_FEATURES, WPD_FEATURES};
use seizure_core::wavelet::wpd::wpd_leaves;
use seizure_core::wavelet::{
    dtcwt_decompose, dwt_decompose, extract_feature_tensor, wavedec, waverec, wpd_decompose, wpd_reconstruct, Boundary,
    Wavelet,
};

struct Outcome {
    name: &'static str,
    failures: Vec<String>,
    notes: Vec<String>,
    secs: f64,
}

impl Outcome {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if ok {
            self.notes.push(what);
        } else {
            self.failures.push(what);
        }
    }
}

fn run(name: &'static str, f: impl FnOnce(&mut Outcome)) -> bool {
    let t = Instant::now();
    let mut o = Outcome { name, failures: Vec::new(), notes: Vec::new(), secs: 0.0 };
    f(&mut o);
    o.secs = t.elapsed().as_secs_f64();
    let pass = o.failures.is_empty();
    let detail = if pass { o.notes.join("; ") } else { o.failures.join("; ") };
    println!("{} {:<22} {:>7.1}s  {}", if pass { "PASS" } else { "FAIL" }, o.name, o.secs, detail);
    pass
}

fn reference_segments() -> Vec<Segment> {
    let corpus = generate_synthetic_corpus(&CorpusSpec::default(), 7).unwrap();
    let montage = MontageSpec::default();
    corpus.iter().flat_map(|r| preprocess_recording(r, &montage).unwrap()).collect()
}

fn structure(o: &mut Outcome) {
    let cfg = ModelConfig::default();
    let mut model = MpSeizNet::new(&cfg, 0).unwrap();
    let cnn = model.cnn.as_ref().unwrap();
    let want = [
        ("conv_1", 320),
        ("conv_2", 9_248),
        ("bn_1", 128),
        ("conv_3", 36_928),
        ("conv_4", 36_928),
        ("bn_2", 256),
        ("conv_5", 36_928),
        ("conv_6", 36_928),
        ("bn_3", 256),
        ("conv_7", 147_584),
        ("conv_8", 147_584),
        ("bn_4", 512),
        ("dense", 1_966_592),
    ];
    let got = cnn.layer_params();
    let counts_ok = got.len() == want.len() && got.iter().zip(want).all(|((n, c), (wn, wc))| n == wn && *c == wc);
    o.check(counts_ok, format!("{} layer parameter counts", want.len()));

    let features =
        Tensor::new(&[1, 252, 20, 1], (0..5040).map(|i| ((i * 13 % 29) as f64) / 14.0 - 1.0).collect()).unwrap();
    let raw = Tensor::new(&[1, 500, 20], (0..10_000).map(|i| ((i * 7 % 31) as f64) / 15.0 - 1.0).collect()).unwrap();
    let p = model.forward(Batch { features: Some(&features), raw: Some(&raw) }, &mut Ctx::eval()).unwrap();
    o.check(p.shape == vec![1, 5], "fused output 1x5");
    let trace: Vec<(&str, Vec<usize>)> = model.cnn.as_ref().unwrap().trace.clone();
    let want_trace: &[(&str, &[usize])] = &[
        ("input", &[252, 20, 1]),
        ("conv_1", &[252, 20, 32]),
        ("conv_2", &[252, 20, 32]),
        ("concatenate", &[252, 20, 64]),
        ("conv_3", &[252, 20, 64]),
        ("maxpool_1", &[126, 10, 64]),
        ("conv_4", &[124, 8, 64]),
        ("conv_5", &[124, 8, 64]),
        ("conv_6", &[124, 8, 64]),
        ("concatenate_1", &[124, 8, 128]),
        ("conv_7", &[124, 8, 128]),
        ("maxpool_2", &[62, 4, 128]),
        ("conv_8", &[60, 2, 128]),
        ("maxpool_3", &[30, 1, 128]),
        ("flatten", &[3840]),
        ("dense", &[512]),
    ];
    let trace_ok = trace.len() == want_trace.len()
        && trace.iter().zip(want_trace).all(|((n, s), (wn, ws))| n == wn && s.as_slice() == *ws);
    o.check(trace_ok, "shape trace 252x20x1 -> flatten 3840 -> 512");
}

fn features(o: &mut Outcome, segments: &[Segment]) {
    o.check(DWT_FEATURES == 30 && DTCWT_FEATURES == 30 && WPD_FEATURES == 192, "252 = 30 + 30 + 192");
    let w = Wavelet::db4();
    let mut slowest = 0.0f64;
    let mut layout_ok = true;
    for seg in segments.iter().step_by(segments.len() / 5) {
        let t = Instant::now();
        let ft = extract_feature_tensor(seg).unwrap();
        slowest = slowest.max(t.elapsed().as_secs_f64());
        layout_ok &= ft.data.len() == 252 * 20;
        for c in [0, 7, 19] {
            let x = seg.channel(c);
            let col = ft.channel(c);
            let mut expect = band_features(&dwt_decompose(x, &w).unwrap().bands[..5]).unwrap();
            expect.extend(band_features(&dtcwt_decompose(x).unwrap().bands[..5]).unwrap());
            let wpd = wpd_decompose(x, &w).unwrap();
            layout_ok &= wpd.bands.len() == 32;
            expect.extend(band_features(&wpd.bands).unwrap());
            layout_ok &= col == expect && col == channel_features(x, &w).unwrap();
            // First feature is the mean absolute value of the A5 band.
            let a5 = &dwt_decompose(x, &w).unwrap().bands[0];
            let mav = a5.iter().map(|v| v.abs()).sum::<f64>() / a5.len() as f64;
            layout_ok &= (col[0] - mav).abs() <= 1e-12 * mav.max(1.0);
        }
    }
    o.check(layout_ok, "per-channel blocks match their decompositions");
    o.check(slowest < 1.0, format!("slowest segment {slowest:.3}s < 1s"));
}

/// Periodized single-level analysis by FFT circular convolution; the
/// coefficient `o` sits at output sample `2o + 1`.
fn fft_analyze(x: &[f64], filter: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut planner = FftPlanner::<f64>::new();
    let (fwd, inv) = (planner.plan_fft_forward(n), planner.plan_fft_inverse(n));
    let mut a: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let mut h = vec![Complex::new(0.0, 0.0); n];
    for (j, &c) in filter.iter().enumerate() {
        h[j % n] += c;
    }
    fwd.process(&mut a);
    fwd.process(&mut h);
    let mut y: Vec<Complex<f64>> = a.iter().zip(&h).map(|(p, q)| p * q).collect();
    inv.process(&mut y);
    (0..n / 2).map(|o| y[2 * o + 1].re / n as f64).collect()
}

fn cv(e: &[f64]) -> f64 {
    let mean = e.iter().sum::<f64>() / e.len() as f64;
    (e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / e.len() as f64).sqrt() / mean
}

fn wavelets(o: &mut Outcome) {
    let w = Wavelet::db4();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut dwt_err, mut wpd_err, mut parseval) = (0.0f64, 0.0f64, 0.0f64);
    let max_diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    for _ in 0..1000 {
        let x: Vec<f64> = (0..500).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for mode in [Boundary::Symmetric, Boundary::Periodized] {
            let bands = wavedec(&x, &w, 5, mode).unwrap();
            dwt_err = dwt_err.max(max_diff(&x, &waverec(&bands, &w, mode, 500)));
            let leaves = wpd_leaves(&x, &w, 5, mode).unwrap();
            wpd_err = wpd_err.max(max_diff(&x, &wpd_reconstruct(&leaves, &w, mode, 500)));
        }
        let ex: f64 = x.iter().map(|v| v * v).sum();
        let eb: f64 = wavedec(&x, &w, 5, Boundary::Periodized).unwrap().iter().flatten().map(|v| v * v).sum();
        parseval = parseval.max(((ex - eb) / ex).abs());
    }
    o.check(dwt_err < 1e-8, format!("dwt reconstruction {dwt_err:.1e}"));
    o.check(wpd_err < 1e-8, format!("wpd reconstruction {wpd_err:.1e}"));
    o.check(parseval < 1e-10, format!("parseval {parseval:.1e}"));

    // Level-3 detail energy of shifted impulses: DWT from an FFT cascade,
    // checked against the library, and DTCWT from the library.
    let (mut dwt_e, mut dtcwt_e, mut agree) = (Vec::new(), Vec::new(), 0.0f64);
    for p in 200..208 {
        let mut x = vec![0.0; 512];
        x[p] = 1.0;
        let a1 = fft_analyze(&x, &w.dec_lo);
        let a2 = fft_analyze(&a1, &w.dec_lo);
        let d3 = fft_analyze(&a2, &w.dec_hi);
        let e: f64 = d3.iter().map(|v| v * v).sum();
        let lib = wavedec(&x, &w, 5, Boundary::Periodized).unwrap();
        let lib_e: f64 = lib[lib.len() - 3].iter().map(|v| v * v).sum();
        agree = agree.max((e - lib_e).abs());
        dwt_e.push(e);
        let (re, im) = &dtcwt_forward(&x, 5).unwrap().details[2];
        dtcwt_e.push(re.iter().chain(im).map(|v| v * v).sum());
    }
    o.check(agree < 1e-12, format!("dwt level-3 energies match fft oracle ({agree:.1e})"));
    let ratio = cv(&dtcwt_e) / cv(&dwt_e);
    o.check(ratio < 0.5, format!("shift cv ratio {ratio:.3} < 0.5"));
}

fn gradients(o: &mut Outcome) {
    let checks: Vec<Check> = gradient_suite(11);
    let layers: Vec<&Check> = checks.iter().filter(|c| !c.name.starts_with("model")).collect();
    let models: Vec<&Check> = checks.iter().filter(|c| c.name.starts_with("model")).collect();
    let worst = |cs: &[&Check]| cs.iter().map(|c| c.value).fold(0.0, f64::max);
    for c in &checks {
        if !c.passed() || c.samples < 200 {
            o.check(false, format!("{}: {:.2e} over {} coordinates", c.name, c.value, c.samples));
        }
    }
    o.check(
        layers.iter().all(|c| c.limit <= 1e-6),
        format!("{} layer checks, worst {:.1e}", layers.len(), worst(&layers)),
    );
    o.check(
        !models.is_empty() && models.iter().all(|c| c.limit <= 1e-4),
        format!("{} model checks, worst {:.1e}", models.len(), worst(&models)),
    );
}

fn brute_weighted_f1(m: &[[u64; 5]; 5]) -> f64 {
    let total: u64 = m.iter().flatten().sum();
    let mut acc = 0.0;
    for c in 0..5 {
        let tp = m[c][c] as f64;
        let row: u64 = m[c].iter().sum();
        let col: u64 = (0..5).map(|r| m[r][c]).sum();
        let p = if col == 0 { 0.0 } else { tp / col as f64 };
        let r = if row == 0 { 0.0 } else { tp / row as f64 };
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        acc += f * row as f64 / total as f64;
    }
    acc
}

fn metrics(o: &mut Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let mut cm = ConfusionMatrix::default();
        for row in cm.counts.iter_mut() {
            for v in row.iter_mut() {
                // Sparse matrices exercise empty rows and columns.
                *v = if i % 4 == 0 && rng.gen_bool(0.5) { 0 } else { rng.gen_range(0..50) };
            }
        }
        if cm.total() == 0 {
            cm.counts[0][0] = 1;
        }
        let got = weighted_f1(&cm, 0).unwrap().weighted_f1;
        worst = worst.max((got - brute_weighted_f1(&cm.counts)).abs());
    }
    o.check(worst < 1e-12, format!("1000 random matrices, max diff {worst:.1e}"));
    let cm = ConfusionMatrix::from_pairs(&[0, 0, 1, 1, 2], &[0, 1, 1, 1, 2]).unwrap();
    let r = weighted_f1(&cm, 0).unwrap();
    let hand = 0.4 * (2.0 / 3.0) + 0.4 * 0.8 + 0.2 * 1.0;
    o.check((r.weighted_f1 - hand).abs() < 1e-15 && (r.weighted_f1 - 0.7867).abs() < 5e-5, "hand example 0.7867");
}

fn small_model() -> ModelConfig {
    ModelConfig { variant: Variant::Fused, base_maps: 8, dense_units: 64, bn_momentum: 0.9, ..ModelConfig::default() }
}

fn train_cfg(epochs: usize) -> TrainConfig {
    TrainConfig { batch_size: 16, max_epochs: epochs, lr_init: 0.01, seed: 7, ..TrainConfig::default() }
}

fn patients_of(ds: &Dataset, ids: &[String]) -> BTreeSet<String> {
    let by_id: HashMap<String, &str> = ds.samples.iter().map(|s| (s.meta.id(), s.meta.patient_id.as_str())).collect();
    ids.iter().map(|id| by_id[id.as_str()].to_string()).collect()
}

fn crossval(ds: &Dataset, scheme: Scheme, epochs: usize) -> (FoldManifest, CvRun) {
    let metas: Vec<_> = ds.samples.iter().map(|s| s.meta.clone()).collect();
    let manifest = make_folds(scheme, &metas, 7, 0.2).unwrap();
    let run = run_cross_validation(ds, &manifest, &train_cfg(epochs), &small_model(), "acceptance", |_, _| {}).unwrap();
    (manifest, run)
}

fn learning(o: &mut Outcome, ds: &Dataset) {
    o.check(ds.len() >= 200, format!("{} reference segments", ds.len()));
    let metas: Vec<_> = ds.samples.iter().map(|s| s.meta.clone()).collect();
    let (train_idx, _) = stratified_split(&metas, (ds.len() - 200) as f64 / ds.len() as f64, 7);
    let train = ds.subset(&train_idx);
    let mut out = train_model(&train, &train, &train_cfg(10), &small_model()).unwrap();
    let probs = evaluate_probs(&mut out.model, &out.norm, &train, 64).unwrap();
    let cm = ConfusionMatrix::from_pairs(&train.labels(), &argmax_rows(&probs, 5)).unwrap();
    let f1 = weighted_f1(&cm, 0).unwrap().weighted_f1;
    o.check(train.len() == 200 && f1 >= 0.99, format!("overfit {} segments F1 {f1:.3}", train.len()));

    let (_, run) = crossval(ds, Scheme::SeizureWise5, 6);
    let f1 = run.report.mean_weighted_f1;
    o.check(f1 >= 0.90, format!("seizure-wise 5-fold mean F1 {f1:.3}"));

    let (manifest, run) = crossval(ds, Scheme::PatientWise3, 10);
    let f1 = run.report.mean_weighted_f1;
    o.check(f1 >= 0.75, format!("patient-wise 3-fold mean F1 {f1:.3}"));
    let mut disjoint = true;
    for (i, a) in manifest.folds.iter().enumerate() {
        let test = patients_of(ds, &a.test);
        disjoint &= test == a.test_patients;
        let mut seen = a.train.clone();
        seen.extend(a.val.iter().cloned());
        disjoint &= test.is_disjoint(&patients_of(ds, &seen));
        for b in &manifest.folds[i + 1..] {
            disjoint &= test.is_disjoint(&patients_of(ds, &b.test));
        }
    }
    o.check(disjoint, "no patient shared between folds");
}

fn regimen(o: &mut Outcome) {
    let c = TrainConfig::default();
    o.check(
        c.es_patience == 10 && c.lr_init == 0.01 && c.lr_min == 1e-4,
        format!("patience {}, lr {} floor {}", c.es_patience, c.lr_init, c.lr_min),
    );
    // Returns (stop epoch, best epoch, lr after each epoch).
    let drive = |losses: &[f64]| {
        let mut es = EarlyStopping::new(c.es_patience, c.min_delta);
        let mut s = PlateauScheduler::new(c.lr_init, c.lr_factor, c.lr_patience, c.lr_min, c.min_delta);
        let mut lrs = Vec::new();
        for (e, &l) in losses.iter().enumerate() {
            let v = es.observe(l);
            lrs.push(s.observe(l));
            if v == Verdict::Stop {
                return (Some(e + 1), es.best_epoch, lrs);
            }
        }
        (None, es.best_epoch, lrs)
    };

    // Improves for 12 epochs, then flat.
    let script: Vec<f64> = (0..40).map(|e| if e < 12 { 2.0 - 0.1 * e as f64 } else { 0.9 }).collect();
    let (stop, best, lrs) = drive(&script);
    let mut want = vec![0.01; 16];
    want.extend([0.005; 5]);
    want.extend([0.0025; 1]);
    o.check(
        stop == Some(22) && best == 12 && lrs == want,
        "plateau after 12 epochs stops at 22, lr halved at 17 and 22",
    );

    // A single late improvement resets both counters.
    let mut script = vec![1.0; 9];
    script.push(0.5);
    script.extend([0.6; 20]);
    let (stop, best, lrs) = drive(&script);
    let mut want = vec![0.01; 5];
    want.extend([0.005; 9]);
    want.extend([0.0025; 5]);
    want.push(0.00125);
    o.check(stop == Some(20) && best == 10 && lrs == want, "improvement at 10 resets both counters, stop at 20");

    // Never improving: the rate reaches the floor and stays there.
    let mut s = PlateauScheduler::new(c.lr_init, c.lr_factor, c.lr_patience, c.lr_min, c.min_delta);
    let lrs: Vec<f64> = (0..60).map(|e| s.observe(1.0 + e as f64)).collect();
    let mut oracle = Vec::new();
    let mut lr: f64 = 0.01;
    for e in 1..=60 {
        if e > 1 && (e - 1) % 5 == 0 {
            lr = (lr * 0.5).max(1e-4);
        }
        oracle.push(lr);
    }
    o.check(lrs == oracle && lrs[35] == 1e-4, "floor 1e-4 reached on the seventh cut");
}

fn determinism(o: &mut Outcome, ds: &Dataset) {
    let metas: Vec<_> = ds.samples.iter().map(|s| s.meta.clone()).collect();
    let manifest = make_folds(Scheme::PatientWise3, &metas, 3, 0.2).unwrap();
    let model = ModelConfig { base_maps: 4, dense_units: 16, lstm_hidden: 8, ..small_model() };
    let train = TrainConfig { max_epochs: 2, ..train_cfg(2) };
    let once = || {
        let run = run_cross_validation(ds, &manifest, &train, &model, "determinism", |_, _| {}).unwrap();
        let report = serde_json::to_vec_pretty(&run.report).unwrap();
        let ckpts: Vec<Vec<u8>> = run
            .outcomes
            .into_iter()
            .map(|t| Checkpoint { model: t.model, norm: t.norm, meta: Default::default() }.to_file().to_bytes())
            .collect();
        (report, ckpts)
    };
    let (a, b) = (once(), once());
    o.check(a.0 == b.0, format!("report {} bytes identical", a.0.len()));
    o.check(
        a.1.len() == 3 && a.1 == b.1,
        format!("{} checkpoints, {} bytes, identical", a.1.len(), a.1.iter().map(Vec::len).sum::<usize>()),
    );
}

fn random_header(rng: &mut ChaCha8Rng) -> EdfHeader {
    let n_signals = rng.gen_range(1..6);
    // Parsing requires a single sample rate per file.
    let spr = rng.gen_range(1..300);
    let signals = (0..n_signals)
        .map(|i| {
            let dig_min = rng.gen_range(-32768..0);
            let dig_max = rng.gen_range(1..=32767);
            let phys_min = -(rng.gen_range(1..100_000) as f64) / 10.0;
            let phys_max = rng.gen_range(1..100_000) as f64 / 10.0;
            SignalHeader {
                label: format!("EEG C{i}-REF"),
                transducer: String::new(),
                physical_dim: "uV".into(),
                phys_min,
                phys_max,
                dig_min,
                dig_max,
                prefilter: String::new(),
                samples_per_record: spr,
            }
        })
        .collect();
    EdfHeader {
        version: "0".into(),
        patient_id: "X".into(),
        recording_id: "Y".into(),
        start_date: "01.01.00".into(),
        start_time: "00.00.00".into(),
        header_bytes: 256 * (1 + n_signals),
        n_records: rng.gen_range(1..5),
        record_duration_s: 1.0,
        signals,
    }
}

fn ingestion(o: &mut Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut bytes_ok, mut digital_ok, mut worst) = (true, true, 0.0f64);
    for _ in 0..100 {
        let h = random_header(&mut rng);
        let digital: Vec<Vec<i16>> = h
            .signals
            .iter()
            .map(|s| {
                (0..s.samples_per_record * h.n_records).map(|_| rng.gen_range(s.dig_min..=s.dig_max) as i16).collect()
            })
            .collect();
        let bytes = write_edf_digital(&h, &digital).unwrap();
        // Data region oracle: records in order, each holding every signal's
        // block of little-endian samples.
        let mut data = Vec::new();
        for r in 0..h.n_records {
            for (s, ch) in h.signals.iter().zip(&digital) {
                let spr = s.samples_per_record;
                for v in &ch[r * spr..(r + 1) * spr] {
                    data.extend(v.to_le_bytes());
                }
            }
        }
        bytes_ok &= bytes[h.header_bytes..] == data[..];
        let parsed = parse_edf_header(&bytes).unwrap();
        digital_ok &= read_digital(&bytes, &parsed).unwrap() == digital;
        let rec = parse_edf(&bytes).unwrap();
        for ((s, ch), phys) in h.signals.iter().zip(&digital).zip(&rec.samples) {
            for (&d, &p) in ch.iter().zip(phys) {
                let want = s.phys_min
                    + (d as f64 - s.dig_min as f64) * (s.phys_max - s.phys_min) / (s.dig_max - s.dig_min) as f64;
                worst = worst.max((p - want).abs() / s.phys_max.abs().max(s.phys_min.abs()));
            }
        }
    }
    o.check(bytes_ok, "data region byte-exact on 100 random files");
    o.check(digital_ok, "digital samples round-trip exactly");
    o.check(worst < 1e-12, format!("physical mapping within {worst:.1e} of oracle"));
}

fn main() {
    let t = Instant::now();
    let mut all = true;
    all &= run("structure", structure);
    let segments = reference_segments();
    all &= run("feature arithmetic", |o| features(o, &segments));
    all &= run("wavelet correctness", wavelets);
    all &= run("gradient fidelity", gradients);
    all &= run("metric oracle", metrics);
    let ds = Dataset::from_segments(&segments).unwrap();
    all &= run("end-to-end learning", |o| learning(o, &ds));
    all &= run("regimen semantics", regimen);
    all &= run("determinism", |o| determinism(o, &ds));
    all &= run("ingestion", ingestion);
    println!("acceptance: {} in {:.0}s", if all { "all passed" } else { "FAILED" }, t.elapsed().as_secs_f64());
    if !all {
        std::process::exit(1);
    }
}
