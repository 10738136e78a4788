//! Numerical self-checks runnable outside the test harness: wavelet
//! reconstruction and shift behaviour, and finite-difference gradient checks
//! of every layer type and a width-reduced model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::neural::attention::Attention;
use crate::neural::conv::{Conv2d, Padding};
use crate::neural::gradcheck::{gradient_check, readout, GradCheckReport, HasParams, Pass};
use crate::neural::layers::{softmax_rows, BatchNorm, Dense, LeakyRelu, MaxPool2};
use crate::neural::lstm::{BiLstm, Lstm};
use crate::neural::{Batch, Ctx, ModelConfig, MpSeizNet, Param, Tensor, Variant};
use crate::wavelet::dtcwt::dtcwt_forward;
use crate::wavelet::wpd::wpd_leaves;
use crate::wavelet::{wavedec, waverec, wpd_reconstruct, Boundary, Wavelet};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    /// Coordinates or signals examined.
    pub samples: usize,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value < self.limit
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Coefficient of variation of detail energy at `level` (1-based) over
/// impulses at `positions`.
pub fn shift_energy_cv(positions: impl Iterator<Item = usize>, level: usize, dtcwt: bool) -> f64 {
    let w = Wavelet::db4();
    let e: Vec<f64> = positions
        .map(|p| {
            let mut x = vec![0.0; 512];
            x[p] = 1.0;
            if dtcwt {
                let (re, im) = &dtcwt_forward(&x, 5).unwrap().details[level - 1];
                re.iter().chain(im).map(|v| v * v).sum()
            } else {
                let bands = wavedec(&x, &w, 5, Boundary::Periodized).unwrap();
                // Bands run [A5, D5, ..., D1].
                bands[bands.len() - level].iter().map(|v| v * v).sum()
            }
        })
        .collect();
    let mean = e.iter().sum::<f64>() / e.len() as f64;
    (e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / e.len() as f64).sqrt() / mean
}

pub fn wavelet_suite(n_signals: usize, seed: u64) -> Vec<Check> {
    let w = Wavelet::db4();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut dwt_err, mut wpd_err, mut parseval) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..n_signals {
        let x = random_vec(&mut rng, 500);
        for mode in [Boundary::Symmetric, Boundary::Periodized] {
            let bands = wavedec(&x, &w, 5, mode).unwrap();
            dwt_err = dwt_err.max(max_abs_diff(&x, &waverec(&bands, &w, mode, 500)));
            let leaves = wpd_leaves(&x, &w, 5, mode).unwrap();
            wpd_err = wpd_err.max(max_abs_diff(&x, &wpd_reconstruct(&leaves, &w, mode, 500)));
        }
        let bands = wavedec(&x, &w, 5, Boundary::Periodized).unwrap();
        let ex: f64 = x.iter().map(|v| v * v).sum();
        let eb: f64 = bands.iter().flatten().map(|v| v * v).sum();
        parseval = parseval.max(((ex - eb) / ex).abs());
    }
    let ratio = shift_energy_cv(200..208, 3, true) / shift_energy_cv(200..208, 3, false);
    vec![
        Check { name: "dwt perfect reconstruction".into(), value: dwt_err, limit: 1e-8, samples: n_signals },
        Check { name: "wpd perfect reconstruction".into(), value: wpd_err, limit: 1e-8, samples: n_signals },
        Check { name: "periodized parseval".into(), value: parseval, limit: 1e-10, samples: n_signals },
        Check { name: "dtcwt/dwt level-3 shift cv ratio".into(), value: ratio, limit: 0.5, samples: 8 },
    ]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::new(shape, random_vec(&mut rng, shape.iter().product())).unwrap()
}

/// A layer stack plus a trainable copy of its input.
struct Probe<L> {
    layers: L,
    x: Param,
}

impl<L> Probe<L> {
    fn new(layers: L, x: &Tensor) -> Self {
        Probe { layers, x: Param::new("input", &x.shape, x.data.clone()) }
    }

    fn input(&self) -> Tensor {
        Tensor::new(&self.x.shape, self.x.value.clone()).unwrap()
    }
}

fn kink_hash(f: impl FnOnce(&mut std::collections::hash_map::DefaultHasher)) -> u64 {
    use std::hash::Hasher;
    let mut h = std::collections::hash_map::DefaultHasher::new();
    f(&mut h);
    h.finish()
}

macro_rules! probe_params {
    ($t:ty, |$s:ident| $body:expr) => {
        impl HasParams for Probe<$t> {
            fn params_mut(&mut self) -> Vec<&mut Param> {
                let $s = &mut self.layers;
                let mut v: Vec<&mut Param> = $body;
                v.push(&mut self.x);
                v
            }
        }
    };
}

probe_params!(Dense, |l| l.params_mut());
probe_params!(Conv2d, |l| l.params_mut());
probe_params!(Lstm, |l| l.params_mut());

struct BnStack {
    bn: BatchNorm,
    act: LeakyRelu,
    pool: MaxPool2,
}

impl HasParams for Probe<BnStack> {
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.layers.bn.params_mut();
        v.push(&mut self.x);
        v
    }

    fn kink_signature(&self) -> u64 {
        use std::hash::Hash;
        kink_hash(|h| {
            self.layers.act.pattern().hash(h);
            self.layers.pool.routing().hash(h);
        })
    }
}

probe_params!((BiLstm, Attention), |l| {
    let mut v = l.0.params_mut();
    v.extend(l.1.params_mut());
    v
});

const LAYER_COORDS: usize = 400;
const LAYER_LIMIT: f64 = 1e-6;
const MODEL_LIMIT: f64 = 1e-4;

fn check(name: &str, rep: GradCheckReport, limit: f64) -> Check {
    Check { name: name.into(), value: rep.max_rel_err, limit, samples: rep.coords }
}

/// Width-reduced network used for the whole-model check.
pub fn shrunk_model_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        feature_rows: 20,
        feature_cols: 20,
        base_maps: 8,
        dense_units: 16,
        seq_len: 12,
        seq_channels: 4,
        lstm_hidden: 5,
        ..ModelConfig::default()
    }
}

fn model_check(variant: Variant, train: bool, seed: u64) -> GradCheckReport {
    let mut m = MpSeizNet::new(&shrunk_model_config(variant), seed).unwrap();
    let n = 3;
    let f = random_tensor(&[n, 20, 20, 1], seed + 1);
    let r = random_tensor(&[n, 12, 4], seed + 2);
    let labels = [0, 3, 4];
    gradient_check(
        &mut m,
        |m, pass| {
            let mut ctx = if train { Ctx::train(seed + 3) } else { Ctx::eval_recording() };
            let logits = m.forward_logits(Batch { features: Some(&f), raw: Some(&r) }, &mut ctx).unwrap();
            let p = softmax_rows(&logits.data, 5);
            let mut d = p.clone();
            let mut loss = 0.0;
            for (s, &y) in labels.iter().enumerate() {
                loss -= p[s * 5 + y].ln() / n as f64;
                d[s * 5 + y] -= 1.0;
            }
            if pass == Pass::Backward {
                d.iter_mut().for_each(|v| *v /= n as f64);
                m.zero_grad();
                m.backward(&Tensor::new(&logits.shape, d).unwrap());
            }
            loss
        },
        300,
        seed + 4,
    )
}

/// Every layer type against central differences, then the shrunk model in
/// each variant.
pub fn gradient_suite(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rec = Ctx { record: true, ..Ctx::eval() };
    let mut out = Vec::new();

    let x = random_tensor(&[4, 16], seed + 1);
    let mut p = Probe::new(Dense::new("dense", 16, 12, &mut rng), &x);
    let r = readout(48, seed + 2);
    let rep = gradient_check(
        &mut p,
        |p, pass| {
            let y = p.layers.forward(&p.input(), &rec).unwrap();
            if pass == Pass::Backward {
                p.params_mut().into_iter().for_each(Param::zero_grad);
                p.x.grad = p.layers.backward(&Tensor::new(&y.shape, r.clone()).unwrap()).data;
            }
            dot(&y.data, &r)
        },
        LAYER_COORDS,
        seed + 3,
    );
    out.push(check("dense", rep, LAYER_LIMIT));

    for (padding, cin) in [(Padding::Same, 3), (Padding::Valid, 3), (Padding::Same, 9), (Padding::Valid, 9)] {
        let x = random_tensor(&[2, 5, 4, cin], rng.gen());
        let mut p = Probe::new(Conv2d::new("conv", cin, 4, padding, &mut rng), &x);
        let (ho, wo) = p.layers.output_hw(5, 4).unwrap();
        let r = readout(2 * ho * wo * 4, rng.gen());
        let rep = gradient_check(
            &mut p,
            |p, pass| {
                let y = p.layers.forward(&p.input(), &rec).unwrap();
                if pass == Pass::Backward {
                    p.params_mut().into_iter().for_each(Param::zero_grad);
                    p.x.grad = p.layers.backward(&Tensor::new(&y.shape, r.clone()).unwrap()).data;
                }
                dot(&y.data, &r)
            },
            LAYER_COORDS,
            rng.gen(),
        );
        out.push(check(&format!("conv2d {padding:?} cin={cin}"), rep, LAYER_LIMIT));
    }

    let x = random_tensor(&[3, 4, 6, 4], rng.gen());
    let mut bn = BatchNorm::new("bn", 4, 0.99);
    bn.gamma.value = random_vec(&mut rng, 4);
    bn.beta.value = random_vec(&mut rng, 4);
    let mut p = Probe::new(BnStack { bn, act: LeakyRelu::new(0.3), pool: MaxPool2::default() }, &x);
    let r = readout(3 * 2 * 3 * 4, rng.gen());
    let rep = gradient_check(
        &mut p,
        |p, pass| {
            let ctx = Ctx { train: true, record: true, ..Ctx::eval() };
            let x = p.input();
            let s = &mut p.layers;
            let y = s.bn.forward(&x, &ctx).unwrap();
            let y = s.act.forward(y, &ctx);
            let y = s.pool.forward(&y, &ctx).unwrap();
            if pass == Pass::Backward {
                s.bn.params_mut().into_iter().for_each(Param::zero_grad);
                let d = s.pool.backward(&Tensor::new(&y.shape, r.clone()).unwrap());
                let d = s.act.backward(d);
                p.x.grad = s.bn.backward(&d).data;
            }
            dot(&y.data, &r)
        },
        LAYER_COORDS,
        rng.gen(),
    );
    out.push(check("batchnorm+leaky relu+max pool", rep, LAYER_LIMIT));

    let x = random_tensor(&[2, 3, 5], rng.gen());
    for reverse in [false, true] {
        let mut lstm = Lstm::new("lstm", 5, 6, reverse, &mut rng);
        for q in lstm.params_mut() {
            q.value.iter_mut().for_each(|v| *v += rng.gen_range(-0.3..0.3));
        }
        let mut p = Probe::new(lstm, &x);
        let r = readout(2 * 3 * 6, rng.gen());
        let rep = gradient_check(
            &mut p,
            |p, pass| {
                let y = p.layers.forward(&p.input(), &rec).unwrap();
                if pass == Pass::Backward {
                    p.params_mut().into_iter().for_each(Param::zero_grad);
                    p.x.grad = p.layers.backward(&Tensor::new(&y.shape, r.clone()).unwrap(), true).unwrap().data;
                }
                dot(&y.data, &r)
            },
            LAYER_COORDS,
            rng.gen(),
        );
        out.push(check(if reverse { "lstm backward direction" } else { "lstm forward direction" }, rep, LAYER_LIMIT));
    }

    let x = random_tensor(&[2, 6, 3], rng.gen());
    let mut p = Probe::new((BiLstm::new("bilstm", 3, 4, &mut rng), Attention::new("attention", 8, &mut rng)), &x);
    let r = readout(16, rng.gen());
    let rep = gradient_check(
        &mut p,
        |p, pass| {
            let x = p.input();
            let (rnn, att) = &mut p.layers;
            let h = rnn.forward(&x, &rec).unwrap();
            let y = att.forward(&h, &rec).unwrap();
            if pass == Pass::Backward {
                rnn.params_mut().into_iter().for_each(Param::zero_grad);
                att.params_mut().into_iter().for_each(Param::zero_grad);
                let dh = att.backward(&Tensor::new(&y.shape, r.clone()).unwrap());
                p.x.grad = rnn.backward(&dh, true).unwrap().data;
            }
            dot(&y.data, &r)
        },
        LAYER_COORDS,
        rng.gen(),
    );
    out.push(check("bilstm+attention", rep, LAYER_LIMIT));

    out.push(check("model fused (train mode)", model_check(Variant::Fused, true, seed + 10), MODEL_LIMIT));
    out.push(check("model cnn (eval mode)", model_check(Variant::Cnn, false, seed + 20), MODEL_LIMIT));
    out.push(check("model bilstm (eval mode)", model_check(Variant::BiLstm, false, seed + 30), MODEL_LIMIT));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass() {
        for c in wavelet_suite(20, 1) {
            assert!(c.passed(), "{c:?}");
            assert!(c.samples >= 8, "{c:?}");
        }
        for c in gradient_suite(2) {
            assert!(c.passed(), "{c:?}");
            assert!(c.samples >= 200, "{c:?}");
        }
    }

    #[test]
    fn dwt_shift_variance_is_visible() {
        assert!(shift_energy_cv(200..208, 3, false) > 0.1);
    }
}
