//! Central finite-difference checks of analytic parameter gradients.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::param::Param;

/// Smallest denominator in the relative error. With `h = 1e-5` a central
/// difference carries an absolute round-off of roughly `1e-11 · |L|`, so
/// smaller gradients cannot be resolved to a relative `1e-6`.
pub const REL_FLOOR: f64 = 1e-3;

pub trait HasParams {
    fn params_mut(&mut self) -> Vec<&mut Param>;

    /// Identifies the piece of a piecewise-smooth function the last
    /// recorded forward pass landed on. Smooth models return a constant.
    fn kink_signature(&self) -> u64 {
        0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    /// Zero gradients, recorded forward, backward.
    Backward,
    /// Recorded forward only.
    Probe,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Coordinates compared.
    pub coords: usize,
    /// Coordinates skipped because `θ ± h` crossed a kink.
    pub kinked: usize,
    /// `(param name, flat index, analytic, numeric)` of the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs().max(b.abs())).max(REL_FLOOR)
}

/// Compares analytic and numeric derivatives of a scalar loss on `coords`
/// randomly chosen trainable coordinates (fewer if the model has fewer).
///
/// `loss(model, pass)` must be a deterministic function of the parameters;
/// with [`Pass::Backward`] it must leave `dL/dθ` in every `Param::grad`.
/// A coordinate whose perturbed evaluations change the model's
/// [`HasParams::kink_signature`] is not compared; another one is drawn.
pub fn gradient_check<M: HasParams>(
    model: &mut M,
    mut loss: impl FnMut(&mut M, Pass) -> f64,
    coords: usize,
    seed: u64,
) -> GradCheckReport {
    loss(model, Pass::Backward);
    let analytic: Vec<Vec<f64>> = model.params_mut().iter().map(|p| p.grad.clone()).collect();
    loss(model, Pass::Probe);
    let base = model.kink_signature();
    let mut all: Vec<(usize, usize)> = Vec::new();
    for (pi, p) in model.params_mut().iter().enumerate() {
        if p.trainable {
            all.extend((0..p.len()).map(|i| (pi, i)));
        }
    }
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut report = GradCheckReport { max_rel_err: 0.0, coords: 0, kinked: 0, worst: None };
    for &(pi, i) in &all {
        if report.coords == coords {
            break;
        }
        let theta = model.params_mut()[pi].value[i];
        let h = 1e-5 * theta.abs().max(1.0);
        model.params_mut()[pi].value[i] = theta + h;
        let up = loss(model, Pass::Probe);
        let sig_up = model.kink_signature();
        model.params_mut()[pi].value[i] = theta - h;
        let down = loss(model, Pass::Probe);
        let sig_down = model.kink_signature();
        model.params_mut()[pi].value[i] = theta;
        if sig_up != base || sig_down != base {
            report.kinked += 1;
            continue;
        }
        report.coords += 1;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[pi][i];
        let e = rel_err(a, numeric);
        if e > report.max_rel_err || report.worst.is_none() {
            report.max_rel_err = report.max_rel_err.max(e);
            report.worst = Some((model.params_mut()[pi].name.clone(), i, a, numeric));
        }
    }
    report
}

/// Fixed random weights for a linear read-out loss `Σ r_k y_k`.
pub fn readout(len: usize, seed: u64) -> Vec<f64> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

macro_rules! impl_has_params {
    ($($t:ty),*) => {$(
        impl HasParams for $t {
            fn params_mut(&mut self) -> Vec<&mut Param> {
                <$t>::params_mut(self)
            }
        }
    )*};
}

impl_has_params!(
    super::conv::Conv2d,
    super::layers::Dense,
    super::layers::BatchNorm,
    super::lstm::Lstm,
    super::lstm::BiLstm,
    super::attention::Attention
);

fn signature(f: impl FnOnce(&mut std::collections::hash_map::DefaultHasher)) -> u64 {
    use std::hash::Hasher;
    let mut h = std::collections::hash_map::DefaultHasher::new();
    f(&mut h);
    h.finish()
}

impl HasParams for super::cnn::CnnSubmodel {
    fn params_mut(&mut self) -> Vec<&mut Param> {
        super::cnn::CnnSubmodel::params_mut(self)
    }

    fn kink_signature(&self) -> u64 {
        signature(|h| self.hash_pattern(h))
    }
}

impl HasParams for super::model::MpSeizNet {
    fn params_mut(&mut self) -> Vec<&mut Param> {
        super::model::MpSeizNet::params_mut(self)
    }

    fn kink_signature(&self) -> u64 {
        signature(|h| {
            if let Some(c) = &self.cnn {
                c.hash_pattern(h);
            }
        })
    }
}
