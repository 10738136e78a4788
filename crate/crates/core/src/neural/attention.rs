use rand_chacha::ChaCha8Rng;

use super::param::{glorot_uniform, Ctx, Param};
use super::tensor::Tensor;
use super::NeuralError;

/// Additive attention pooling over time with a scalar score per step:
/// `s_t = tanh(w·h_t + b)`, `α = softmax_t(s)`, output `Σ α_t h_t`.
#[derive(Debug, Clone)]
pub struct Attention {
    /// `[D]`.
    pub weight: Param,
    pub bias: Param,
    cache: Option<(Tensor, Vec<f64>, Vec<f64>)>,
}

impl Attention {
    pub fn new(name: &str, width: usize, rng: &mut ChaCha8Rng) -> Self {
        Attention {
            weight: Param::new(format!("{name}.kernel"), &[width], glorot_uniform(rng, width, 1, width)),
            bias: Param::zeros(format!("{name}.bias"), &[1]),
            cache: None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + 1
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }

    /// Attention weights `[N, T]` of the last recorded forward pass.
    pub fn last_weights(&self) -> Option<&[f64]> {
        self.cache.as_ref().map(|c| c.2.as_slice())
    }

    pub fn forward(&mut self, h: &Tensor, ctx: &Ctx) -> Result<Tensor, NeuralError> {
        let d = self.weight.len();
        if h.shape.len() != 3 || h.shape[2] != d {
            return Err(NeuralError::ShapeMismatch(format!("attention: expected [N,T,{d}], got {:?}", h.shape)));
        }
        let (n, t_len) = (h.shape[0], h.shape[1]);
        let mut scores = vec![0.0; n * t_len];
        let mut alpha = vec![0.0; n * t_len];
        let mut out = Tensor::zeros(&[n, d]);
        for s in 0..n {
            let sc = &mut scores[s * t_len..(s + 1) * t_len];
            for (t, v) in sc.iter_mut().enumerate() {
                let row = &h.data[(s * t_len + t) * d..][..d];
                let e: f64 = row.iter().zip(&self.weight.value).map(|(a, b)| a * b).sum::<f64>() + self.bias.value[0];
                *v = e.tanh();
            }
            // Scores lie in [-1, 1]; no max shift is needed.
            let a = &mut alpha[s * t_len..(s + 1) * t_len];
            let mut sum = 0.0;
            for (x, v) in a.iter_mut().zip(sc.iter()) {
                *x = v.exp();
                sum += *x;
            }
            a.iter_mut().for_each(|x| *x /= sum);
            let o = &mut out.data[s * d..(s + 1) * d];
            for (t, w) in a.iter().enumerate() {
                let row = &h.data[(s * t_len + t) * d..][..d];
                o.iter_mut().zip(row).for_each(|(x, v)| *x += w * v);
            }
        }
        if ctx.record {
            self.cache = Some((h.clone(), scores, alpha));
        }
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let (h, scores, alpha) = self.cache.take().expect("attention backward without recorded forward");
        let (n, t_len, d) = (h.shape[0], h.shape[1], h.shape[2]);
        let mut dh = Tensor::zeros(&h.shape);
        let mut dalpha = vec![0.0; t_len];
        for s in 0..n {
            let g = &dy.data[s * d..(s + 1) * d];
            let a = &alpha[s * t_len..(s + 1) * t_len];
            for (t, da) in dalpha.iter_mut().enumerate() {
                let row = &h.data[(s * t_len + t) * d..][..d];
                *da = row.iter().zip(g).map(|(x, y)| x * y).sum();
            }
            let dot: f64 = a.iter().zip(&dalpha).map(|(x, y)| x * y).sum();
            for t in 0..t_len {
                let st = scores[s * t_len + t];
                let de = a[t] * (dalpha[t] - dot) * (1.0 - st * st);
                let row = &h.data[(s * t_len + t) * d..][..d];
                let drow = &mut dh.data[(s * t_len + t) * d..][..d];
                for k in 0..d {
                    drow[k] += a[t] * g[k] + de * self.weight.value[k];
                    self.weight.grad[k] += de * row[k];
                }
                self.bias.grad[0] += de;
            }
        }
        dh
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn single_step_returns_it() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut a = Attention::new("att", 4, &mut rng);
        let h = Tensor::new(&[1, 1, 4], vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let out = a.forward(&h, &Ctx::eval_recording()).unwrap();
        assert_eq!(out.data, h.data);
        assert_eq!(a.last_weights().unwrap(), &[1.0]);
    }

    #[test]
    fn identical_steps_get_uniform_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut a = Attention::new("att", 3, &mut rng);
        let row = [0.2, -0.4, 0.9];
        let h = Tensor::new(&[1, 500, 3], row.iter().copied().cycle().take(1500).collect()).unwrap();
        let out = a.forward(&h, &Ctx::eval_recording()).unwrap();
        assert!(a.last_weights().unwrap().iter().all(|&w| (w - 1.0 / 500.0).abs() < 1e-15));
        assert!(out.data.iter().zip(row).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn weights_are_a_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = Attention::new("att", 8, &mut rng);
        let h = Tensor::new(&[3, 40, 8], (0..960).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
        a.forward(&h, &Ctx::eval_recording()).unwrap();
        for w in a.last_weights().unwrap().chunks(40) {
            assert!(w.iter().all(|&x| x > 0.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
