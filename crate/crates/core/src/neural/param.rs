use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// A named array with an accumulated gradient. Non-trainable entries
/// (batch-norm running statistics) are skipped by the optimizer but still
/// saved in checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub trainable: bool,
}

impl Param {
    pub fn new(name: impl Into<String>, shape: &[usize], value: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), value.len());
        let grad = vec![0.0; value.len()];
        Param { name: name.into(), shape: shape.to_vec(), value, grad, trainable: true }
    }

    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Self::new(name, shape, vec![0.0; shape.iter().product()])
    }

    pub fn filled(name: impl Into<String>, shape: &[usize], v: f64) -> Self {
        Self::new(name, shape, vec![v; shape.iter().product()])
    }

    pub fn buffer(name: impl Into<String>, shape: &[usize], v: f64) -> Self {
        let mut p = Self::filled(name, shape, v);
        p.trainable = false;
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Uniform on `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
}

/// `rows × cols` matrix with orthonormal rows (if `rows <= cols`) or
/// columns, from Gram-Schmidt on a Gaussian draw.
pub fn orthogonal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    let (short, long) = (rows.min(cols), rows.max(cols));
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(short);
    while vs.len() < short {
        let mut v: Vec<f64> = (0..long).map(|_| StandardNormal.sample(rng)).collect();
        for _ in 0..2 {
            for u in &vs {
                let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            vs.push(v);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for (i, v) in vs.iter().enumerate() {
        for (j, x) in v.iter().enumerate() {
            if rows <= cols {
                out[i * cols + j] = *x;
            } else {
                out[j * cols + i] = *x;
            }
        }
    }
    out
}

/// Forward-pass mode, whether layers keep what backward needs, and the
/// randomness used by dropout layers.
#[derive(Debug, Clone)]
pub struct Ctx {
    pub train: bool,
    pub record: bool,
    pub rng: ChaCha8Rng,
}

impl Ctx {
    pub fn eval() -> Self {
        Ctx { train: false, record: false, rng: rand::SeedableRng::seed_from_u64(0) }
    }

    /// Inference behaviour, but recording for a backward pass.
    pub fn eval_recording() -> Self {
        Ctx { record: true, ..Self::eval() }
    }

    pub fn train(seed: u64) -> Self {
        Ctx { train: true, record: true, rng: rand::SeedableRng::seed_from_u64(seed) }
    }
}
