//! LSTM layer with backpropagation through time, and its bidirectional
//! wrapper. Gates are packed `[i | f | o | g]` along the last axis of the
//! kernel, recurrent kernel and bias.

use rand_chacha::ChaCha8Rng;

use super::param::{glorot_uniform, orthogonal, Ctx, Param};
use super::tensor::{gemm, Tensor};
use super::NeuralError;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One direction of a recurrent layer over `[N, T, I]` sequences.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub input: usize,
    pub hidden: usize,
    pub reverse: bool,
    /// `[I, 4H]`.
    pub kernel: Param,
    /// `[H, 4H]`.
    pub recurrent: Param,
    pub bias: Param,
    cache: Option<LstmCache>,
}

#[derive(Debug, Clone)]
struct LstmCache {
    x: Tensor,
    /// Activated gates per (n, t), `[N*T, 4H]`.
    gates: Vec<f64>,
    /// Cell and hidden states per (n, t), `[N*T, H]`.
    c: Vec<f64>,
    h: Vec<f64>,
}

/// One LSTM step for a batch: `z` holds the gate
/// pre-activations `[N, 4H]` and is overwritten with the activations.
fn cell_step(z: &mut [f64], c_prev: &[f64], c: &mut [f64], h: &mut [f64], hidden: usize) {
    for (((zr, cp), cr), hr) in z
        .chunks_exact_mut(4 * hidden)
        .zip(c_prev.chunks_exact(hidden))
        .zip(c.chunks_exact_mut(hidden))
        .zip(h.chunks_exact_mut(hidden))
    {
        for k in 0..hidden {
            let i = sigmoid(zr[k]);
            let f = sigmoid(zr[hidden + k]);
            let o = sigmoid(zr[2 * hidden + k]);
            let g = zr[3 * hidden + k].tanh();
            zr[k] = i;
            zr[hidden + k] = f;
            zr[2 * hidden + k] = o;
            zr[3 * hidden + k] = g;
            cr[k] = f * cp[k] + i * g;
            hr[k] = o * cr[k].tanh();
        }
    }
}

impl Lstm {
    pub fn new(name: &str, input: usize, hidden: usize, reverse: bool, rng: &mut ChaCha8Rng) -> Self {
        let g = 4 * hidden;
        let mut bias = vec![0.0; g];
        // Forget-gate bias starts at one.
        bias[hidden..2 * hidden].fill(1.0);
        Lstm {
            input,
            hidden,
            reverse,
            kernel: Param::new(format!("{name}.kernel"), &[input, g], glorot_uniform(rng, input, g, input * g)),
            recurrent: Param::new(format!("{name}.recurrent_kernel"), &[hidden, g], orthogonal(rng, hidden, g)),
            bias: Param::new(format!("{name}.bias"), &[g], bias),
            cache: None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.kernel.len() + self.recurrent.len() + self.bias.len()
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.kernel, &self.recurrent, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.kernel, &mut self.recurrent, &mut self.bias]
    }

    fn order(&self, t_len: usize) -> Vec<usize> {
        if self.reverse {
            (0..t_len).rev().collect()
        } else {
            (0..t_len).collect()
        }
    }

    /// Hidden states `[N, T, H]`, each at its input's time index.
    pub fn forward(&mut self, x: &Tensor, ctx: &Ctx) -> Result<Tensor, NeuralError> {
        if x.shape.len() != 3 || x.shape[2] != self.input {
            return Err(NeuralError::ShapeMismatch(format!(
                "{}: expected [N,T,{}], got {:?}",
                self.kernel.name, self.input, x.shape
            )));
        }
        let (n, t_len, hd) = (x.shape[0], x.shape[1], self.hidden);
        let g4 = 4 * hd;
        let mut xw = vec![0.0; n * t_len * g4];
        for row in xw.chunks_exact_mut(g4) {
            row.copy_from_slice(&self.bias.value);
        }
        gemm(n * t_len, self.input, g4, 1.0, &x.data, false, &self.kernel.value, false, 1.0, &mut xw);

        let mut gates = vec![0.0; n * t_len * g4];
        let mut c_all = vec![0.0; n * t_len * hd];
        let mut h_all = vec![0.0; n * t_len * hd];
        let mut z = vec![0.0; n * g4];
        let mut h_prev = vec![0.0; n * hd];
        let mut c_prev = vec![0.0; n * hd];
        let mut c = vec![0.0; n * hd];
        let mut h = vec![0.0; n * hd];
        for t in self.order(t_len) {
            for s in 0..n {
                z[s * g4..(s + 1) * g4].copy_from_slice(&xw[(s * t_len + t) * g4..][..g4]);
            }
            gemm(n, hd, g4, 1.0, &h_prev, false, &self.recurrent.value, false, 1.0, &mut z);
            cell_step(&mut z, &c_prev, &mut c, &mut h, hd);
            for s in 0..n {
                let r = s * t_len + t;
                gates[r * g4..(r + 1) * g4].copy_from_slice(&z[s * g4..(s + 1) * g4]);
                c_all[r * hd..(r + 1) * hd].copy_from_slice(&c[s * hd..(s + 1) * hd]);
                h_all[r * hd..(r + 1) * hd].copy_from_slice(&h[s * hd..(s + 1) * hd]);
            }
            std::mem::swap(&mut h_prev, &mut h);
            std::mem::swap(&mut c_prev, &mut c);
        }
        let out = Tensor { shape: vec![n, t_len, hd], data: h_all };
        self.cache = ctx.record.then(|| LstmCache { x: x.clone(), gates, c: c_all, h: out.data.clone() });
        Ok(out)
    }

    /// Backpropagation through time from `dh` `[N, T, H]`. Returns the input
    /// gradient when `want_input_grad`.
    pub fn backward(&mut self, dh_out: &Tensor, want_input_grad: bool) -> Option<Tensor> {
        let cache = self.cache.take().expect("lstm backward without recorded forward");
        let (n, t_len, hd) = (cache.x.shape[0], cache.x.shape[1], self.hidden);
        let g4 = 4 * hd;
        let order = self.order(t_len);
        let mut dz_all = vec![0.0; n * t_len * g4];
        let mut h_prev_all = vec![0.0; n * t_len * hd];
        let mut dh_next = vec![0.0; n * hd];
        let mut dc_next = vec![0.0; n * hd];
        let mut dz = vec![0.0; n * g4];
        for (step, &t) in order.iter().enumerate().rev() {
            let prev = (step > 0).then(|| order[step - 1]);
            for s in 0..n {
                let r = s * t_len + t;
                let gate = &cache.gates[r * g4..(r + 1) * g4];
                for k in 0..hd {
                    let (i, f, o, g) = (gate[k], gate[hd + k], gate[2 * hd + k], gate[3 * hd + k]);
                    let c = cache.c[r * hd + k];
                    let c_prev = prev.map_or(0.0, |p| cache.c[(s * t_len + p) * hd + k]);
                    let tc = c.tanh();
                    let dh = dh_out.data[r * hd + k] + dh_next[s * hd + k];
                    let d_o = dh * tc;
                    let dc = dc_next[s * hd + k] + dh * o * (1.0 - tc * tc);
                    dc_next[s * hd + k] = dc * f;
                    let zrow = &mut dz[s * g4..(s + 1) * g4];
                    zrow[k] = dc * g * i * (1.0 - i);
                    zrow[hd + k] = dc * c_prev * f * (1.0 - f);
                    zrow[2 * hd + k] = d_o * o * (1.0 - o);
                    zrow[3 * hd + k] = dc * i * (1.0 - g * g);
                }
                dz_all[r * g4..(r + 1) * g4].copy_from_slice(&dz[s * g4..(s + 1) * g4]);
                if let Some(p) = prev {
                    let src = (s * t_len + p) * hd;
                    h_prev_all[r * hd..(r + 1) * hd].copy_from_slice(&cache.h[src..src + hd]);
                }
            }
            gemm(n, g4, hd, 1.0, &dz, false, &self.recurrent.value, true, 0.0, &mut dh_next);
        }
        let rows = n * t_len;
        gemm(self.input, rows, g4, 1.0, &cache.x.data, true, &dz_all, false, 1.0, &mut self.kernel.grad);
        gemm(hd, rows, g4, 1.0, &h_prev_all, true, &dz_all, false, 1.0, &mut self.recurrent.grad);
        for row in dz_all.chunks_exact(g4) {
            self.bias.grad.iter_mut().zip(row).for_each(|(b, v)| *b += v);
        }
        want_input_grad.then(|| {
            let mut dx = Tensor::zeros(&cache.x.shape);
            gemm(rows, g4, self.input, 1.0, &dz_all, false, &self.kernel.value, true, 0.0, &mut dx.data);
            dx
        })
    }
}

/// Forward and reverse LSTMs with per-timestep concatenation
/// `[forward ; backward]`.
#[derive(Debug, Clone)]
pub struct BiLstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

impl BiLstm {
    pub fn new(name: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        BiLstm {
            fwd: Lstm::new(&format!("{name}.forward"), input, hidden, false, rng),
            bwd: Lstm::new(&format!("{name}.backward"), input, hidden, true, rng),
        }
    }

    pub fn output_width(&self) -> usize {
        2 * self.fwd.hidden
    }

    pub fn param_count(&self) -> usize {
        self.fwd.param_count() + self.bwd.param_count()
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = self.fwd.params();
        v.extend(self.bwd.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.fwd.params_mut();
        v.extend(self.bwd.params_mut());
        v
    }

    pub fn forward(&mut self, x: &Tensor, ctx: &Ctx) -> Result<Tensor, NeuralError> {
        let a = self.fwd.forward(x, ctx)?;
        let b = self.bwd.forward(x, ctx)?;
        super::layers::concat_channels(&a, &b)
    }

    pub fn backward(&mut self, dy: &Tensor, want_input_grad: bool) -> Option<Tensor> {
        let (da, db) = super::layers::split_channels(dy, self.fwd.hidden);
        let dxa = self.fwd.backward(&da, want_input_grad);
        let dxb = self.bwd.backward(&db, want_input_grad);
        match (dxa, dxb) {
            (Some(mut a), Some(b)) => {
                a.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += y);
                Some(a)
            }
            _ => None,
        }
    }
}
