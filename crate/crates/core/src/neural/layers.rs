use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::param::{glorot_uniform, Ctx, Param};
use super::tensor::{gemm, Tensor};
use super::NeuralError;

pub const LRELU_ALPHA: f64 = 0.3;
pub const BN_EPS: f64 = 1e-3;
pub const BN_MOMENTUM: f64 = 0.99;

/// 2×2 max pooling with stride 2 on NHWC; odd trailing rows/columns are
/// dropped. Gradients go to the first maximal element of each window.
#[derive(Debug, Clone, Default)]
pub struct MaxPool2 {
    argmax: Vec<u32>,
    in_shape: Vec<usize>,
}

impl MaxPool2 {
    pub fn output_hw(h: usize, w: usize) -> Result<(usize, usize), NeuralError> {
        if h < 2 || w < 2 {
            return Err(NeuralError::ShapeMismatch(format!("2x2 pooling on {h}x{w}")));
        }
        Ok((h / 2, w / 2))
    }

    pub fn forward(&mut self, x: &Tensor, ctx: &Ctx) -> Result<Tensor, NeuralError> {
        let [n, h, w, c] = x.shape[..] else {
            return Err(NeuralError::ShapeMismatch(format!("pool input {:?}", x.shape)));
        };
        let (ho, wo) = Self::output_hw(h, w)?;
        let mut out = Tensor::zeros(&[n, ho, wo, c]);
        let mut argmax = Vec::with_capacity(if ctx.record { out.len() } else { 0 });
        let mut o = 0;
        for s in 0..n {
            for oy in 0..ho {
                for ox in 0..wo {
                    for ch in 0..c {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_i = 0;
                        for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                            let i = ((s * h + 2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                            if x.data[i] > best {
                                best = x.data[i];
                                best_i = i;
                            }
                        }
                        out.data[o] = best;
                        if ctx.record {
                            argmax.push(best_i as u32);
                        }
                        o += 1;
                    }
                }
            }
        }
        self.argmax = argmax;
        self.in_shape = x.shape.clone();
        Ok(out)
    }

    /// Flat input index chosen in each window by the last recorded forward.
    pub fn routing(&self) -> &[u32] {
        &self.argmax
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let mut dx = Tensor::zeros(&self.in_shape);
        for (&i, g) in self.argmax.iter().zip(&dy.data) {
            dx.data[i as usize] += g;
        }
        self.argmax = Vec::new();
        dx
    }
}

/// Per-channel normalization over every axis but the last.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    pub eps: f64,
    pub momentum: f64,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    used_batch_stats: bool,
}

impl BatchNorm {
    pub fn new(name: &str, c: usize, momentum: f64) -> Self {
        BatchNorm {
            gamma: Param::filled(format!("{name}.gamma"), &[c], 1.0),
            beta: Param::zeros(format!("{name}.beta"), &[c]),
            running_mean: Param::buffer(format!("{name}.moving_mean"), &[c], 0.0),
            running_var: Param::buffer(format!("{name}.moving_variance"), &[c], 1.0),
            eps: BN_EPS,
            momentum,
            xhat: Vec::new(),
            inv_std: Vec::new(),
            used_batch_stats: false,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Trainable scale and shift plus the two running-statistic vectors.
    pub fn param_count(&self) -> usize {
        4 * self.channels()
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta, &self.running_mean, &self.running_var]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta, &mut self.running_mean, &mut self.running_var]
    }

    pub fn forward(&mut self, x: &Tensor, ctx: &Ctx) -> Result<Tensor, NeuralError> {
        let c = self.channels();
        if x.shape.last() != Some(&c) {
            return Err(NeuralError::ShapeMismatch(format!("{}: {:?} has no {c} channels", self.gamma.name, x.shape)));
        }
        let m = x.len() / c;
        let (mean, var) = if ctx.train {
            if m < 2 {
                return Err(NeuralError::ShapeMismatch("batch statistics need at least two values per channel".into()));
            }
            let mut mean = vec![0.0; c];
            for row in x.data.chunks_exact(c) {
                mean.iter_mut().zip(row).for_each(|(a, v)| *a += v);
            }
            mean.iter_mut().for_each(|a| *a /= m as f64);
            let mut var = vec![0.0; c];
            for row in x.data.chunks_exact(c) {
                for ((a, v), mu) in var.iter_mut().zip(row).zip(&mean) {
                    *a += (v - mu) * (v - mu);
                }
            }
            var.iter_mut().for_each(|a| *a /= m as f64);
            let mo = self.momentum;
            for k in 0..c {
                self.running_mean.value[k] = mo * self.running_mean.value[k] + (1.0 - mo) * mean[k];
                self.running_var.value[k] = mo * self.running_var.value[k] + (1.0 - mo) * var[k];
            }
            (mean, var)
        } else {
            (self.running_mean.value.clone(), self.running_var.value.clone())
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut out = Tensor::zeros(&x.shape);
        let mut xhat = if ctx.record { vec![0.0; x.len()] } else { Vec::new() };
        for (i, (row, orow)) in x.data.chunks_exact(c).zip(out.data.chunks_exact_mut(c)).enumerate() {
            for k in 0..c {
                let h = (row[k] - mean[k]) * inv_std[k];
                orow[k] = self.gamma.value[k] * h + self.beta.value[k];
                if ctx.record {
                    xhat[i * c + k] = h;
                }
            }
        }
        self.xhat = xhat;
        self.inv_std = inv_std;
        self.used_batch_stats = ctx.train;
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let c = self.channels();
        let m = (dy.len() / c) as f64;
        let mut sum_dxhat = vec![0.0; c];
        let mut sum_dxhat_xhat = vec![0.0; c];
        for (drow, hrow) in dy.data.chunks_exact(c).zip(self.xhat.chunks_exact(c)) {
            for k in 0..c {
                self.gamma.grad[k] += drow[k] * hrow[k];
                self.beta.grad[k] += drow[k];
                let dh = drow[k] * self.gamma.value[k];
                sum_dxhat[k] += dh;
                sum_dxhat_xhat[k] += dh * hrow[k];
            }
        }
        let mut dx = Tensor::zeros(&dy.shape);
        for ((drow, hrow), xrow) in
            dy.data.chunks_exact(c).zip(self.xhat.chunks_exact(c)).zip(dx.data.chunks_exact_mut(c))
        {
            for k in 0..c {
                let dh = drow[k] * self.gamma.value[k];
                xrow[k] = if self.used_batch_stats {
                    self.inv_std[k] * (dh - sum_dxhat[k] / m - hrow[k] * sum_dxhat_xhat[k] / m)
                } else {
                    self.inv_std[k] * dh
                };
            }
        }
        self.xhat = Vec::new();
        dx
    }
}

pub fn leaky_relu(x: f64, alpha: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        alpha * x
    }
}

/// Leaky ReLU. Backward reads the sign from the stored output, which equals
/// the input's sign for a positive slope.
#[derive(Debug, Clone)]
pub struct LeakyRelu {
    pub alpha: f64,
    positive: Vec<bool>,
}

impl LeakyRelu {
    pub fn new(alpha: f64) -> Self {
        LeakyRelu { alpha, positive: Vec::new() }
    }

    pub fn forward(&mut self, mut x: Tensor, ctx: &Ctx) -> Tensor {
        if ctx.record {
            self.positive = x.data.iter().map(|&v| v > 0.0).collect();
        }
        x.data.iter_mut().for_each(|v| *v = leaky_relu(*v, self.alpha));
        x
    }

    /// Sign pattern of the last recorded forward.
    pub fn pattern(&self) -> &[bool] {
        &self.positive
    }

    pub fn backward(&mut self, mut dy: Tensor) -> Tensor {
        for (d, &p) in dy.data.iter_mut().zip(&self.positive) {
            if !p {
                *d *= self.alpha;
            }
        }
        self.positive = Vec::new();
        dy
    }
}

/// Inverted dropout. With `channel_len == Some(c)` whole channels of an
/// NHWC map are dropped together (spatial dropout); otherwise single
/// elements are.
#[derive(Debug, Clone)]
pub struct Dropout {
    pub rate: f64,
    pub spatial: bool,
    /// Per-(sample, channel) or per-element scale; empty means identity.
    mask: Vec<f64>,
    shape: Vec<usize>,
}

impl Dropout {
    pub fn new(rate: f64) -> Self {
        Dropout { rate, spatial: false, mask: Vec::new(), shape: Vec::new() }
    }

    pub fn spatial(rate: f64) -> Self {
        Dropout { spatial: true, ..Self::new(rate) }
    }

    fn scale_index(&self, i: usize) -> usize {
        if self.spatial {
            let c = *self.shape.last().unwrap();
            let per_sample = self.shape[1..].iter().product::<usize>();
            (i / per_sample) * c + i % c
        } else {
            i
        }
    }

    pub fn forward(&mut self, mut x: Tensor, ctx: &mut Ctx) -> Tensor {
        self.mask.clear();
        if !ctx.train || self.rate <= 0.0 {
            return x;
        }
        self.shape = x.shape.clone();
        let units = if self.spatial { x.shape[0] * x.shape.last().unwrap() } else { x.len() };
        let keep = 1.0 - self.rate;
        let rng: &mut ChaCha8Rng = &mut ctx.rng;
        self.mask = (0..units).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
        for i in 0..x.len() {
            x.data[i] *= self.mask[self.scale_index(i)];
        }
        x
    }

    pub fn backward(&mut self, mut dy: Tensor) -> Tensor {
        if self.mask.is_empty() {
            return dy;
        }
        for i in 0..dy.len() {
            dy.data[i] *= self.mask[self.scale_index(i)];
        }
        self.mask.clear();
        dy
    }
}

/// Fully connected layer on `[N, in]`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl Dense {
    pub fn new(name: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        Dense {
            weight: Param::new(
                format!("{name}.kernel"),
                &[fan_in, fan_out],
                glorot_uniform(rng, fan_in, fan_out, fan_in * fan_out),
            ),
            bias: Param::zeros(format!("{name}.bias"), &[fan_out]),
            input: None,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }

    pub fn forward(&mut self, x: &Tensor, ctx: &Ctx) -> Result<Tensor, NeuralError> {
        let (fi, fo) = (self.fan_in(), self.fan_out());
        if x.shape.len() != 2 || x.shape[1] != fi {
            return Err(NeuralError::ShapeMismatch(format!(
                "{}: expected [N,{fi}], got {:?}",
                self.weight.name, x.shape
            )));
        }
        let n = x.shape[0];
        let mut out = Tensor::zeros(&[n, fo]);
        for row in out.data.chunks_exact_mut(fo) {
            row.copy_from_slice(&self.bias.value);
        }
        gemm(n, fi, fo, 1.0, &x.data, false, &self.weight.value, false, 1.0, &mut out.data);
        self.input = ctx.record.then(|| x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let x = self.input.take().expect("dense backward without recorded forward");
        let (n, fi, fo) = (x.shape[0], self.fan_in(), self.fan_out());
        gemm(fi, n, fo, 1.0, &x.data, true, &dy.data, false, 1.0, &mut self.weight.grad);
        for row in dy.data.chunks_exact(fo) {
            self.bias.grad.iter_mut().zip(row).for_each(|(g, v)| *g += v);
        }
        let mut dx = Tensor::zeros(&[n, fi]);
        gemm(n, fo, fi, 1.0, &dy.data, false, &self.weight.value, true, 0.0, &mut dx.data);
        dx
    }
}

/// Channel-wise concatenation `[a, b]` of two NHWC maps.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor, NeuralError> {
    let (ca, cb) = (*a.shape.last().unwrap(), *b.shape.last().unwrap());
    if a.shape[..a.shape.len() - 1] != b.shape[..b.shape.len() - 1] {
        return Err(NeuralError::ShapeMismatch(format!("concat {:?} with {:?}", a.shape, b.shape)));
    }
    let mut shape = a.shape.clone();
    *shape.last_mut().unwrap() = ca + cb;
    let mut data = Vec::with_capacity(a.len() + b.len());
    for (ra, rb) in a.data.chunks_exact(ca).zip(b.data.chunks_exact(cb)) {
        data.extend_from_slice(ra);
        data.extend_from_slice(rb);
    }
    Ok(Tensor { shape, data })
}

/// Inverse of [`concat_channels`] for gradients.
pub fn split_channels(d: &Tensor, ca: usize) -> (Tensor, Tensor) {
    let c = *d.shape.last().unwrap();
    let cb = c - ca;
    let pixels = d.len() / c;
    let (mut a, mut b) = (Vec::with_capacity(pixels * ca), Vec::with_capacity(pixels * cb));
    for row in d.data.chunks_exact(c) {
        a.extend_from_slice(&row[..ca]);
        b.extend_from_slice(&row[ca..]);
    }
    let mut sa = d.shape.clone();
    *sa.last_mut().unwrap() = ca;
    let mut sb = d.shape.clone();
    *sb.last_mut().unwrap() = cb;
    (Tensor { shape: sa, data: a }, Tensor { shape: sb, data: b })
}

/// Row-wise softmax, max-shifted.
pub fn softmax_rows(logits: &[f64], width: usize) -> Vec<f64> {
    let mut out = logits.to_vec();
    for row in out.chunks_exact_mut(width) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}
