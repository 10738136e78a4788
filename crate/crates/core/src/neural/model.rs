use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::attention::Attention;
use super::cnn::CnnSubmodel;
use super::layers::{softmax_rows, Dense};
use super::lstm::BiLstm;
use super::param::{Ctx, Param};
use super::tensor::Tensor;
use super::{ModelConfig, NeuralError, Variant};

/// Inputs of one batch: wavelet feature maps `[N, 252, 20, 1]` and raw
/// signals `[N, 500, 20]` (time-major). A variant only reads what it uses.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub features: Option<&'a Tensor>,
    pub raw: Option<&'a Tensor>,
}

/// The fused network or one of its standalone sub-models.
#[derive(Debug, Clone)]
pub struct MpSeizNet {
    pub config: ModelConfig,
    pub cnn: Option<CnnSubmodel>,
    pub bilstm: Option<BiLstm>,
    pub attention: Option<Attention>,
    pub head: Dense,
}

impl MpSeizNet {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self, NeuralError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let uses_cnn = config.variant != Variant::BiLstm;
        let uses_rnn = config.variant != Variant::Cnn;
        let cnn = uses_cnn.then(|| CnnSubmodel::new(config, &mut rng)).transpose()?;
        let bilstm = uses_rnn.then(|| BiLstm::new("bilstm", config.seq_channels, config.lstm_hidden, &mut rng));
        let attention = uses_rnn.then(|| Attention::new("attention", 2 * config.lstm_hidden, &mut rng));
        let width = cnn.as_ref().map_or(0, |c| c.output_width()) + bilstm.as_ref().map_or(0, |b| b.output_width());
        let head_name = match config.variant {
            Variant::Fused => "fusion_dense",
            Variant::Cnn => "cnn_head",
            Variant::BiLstm => "bilstm_head",
        };
        let head = Dense::new(head_name, width, config.n_classes, &mut rng);
        Ok(MpSeizNet { config: config.clone(), cnn, bilstm, attention, head })
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = Vec::new();
        if let Some(c) = &self.cnn {
            v.extend(c.params());
        }
        if let Some(b) = &self.bilstm {
            v.extend(b.params());
        }
        if let Some(a) = &self.attention {
            v.extend(a.params());
        }
        v.extend(self.head.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = Vec::new();
        if let Some(c) = &mut self.cnn {
            v.extend(c.params_mut());
        }
        if let Some(b) = &mut self.bilstm {
            v.extend(b.params_mut());
        }
        if let Some(a) = &mut self.attention {
            v.extend(a.params_mut());
        }
        v.extend(self.head.params_mut());
        v
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    fn batch_size<'a>(&self, batch: &Batch<'a>) -> Result<usize, NeuralError> {
        let variant = self.config.variant;
        let need = |t: Option<&'a Tensor>, what: &str| -> Result<&'a Tensor, NeuralError> {
            t.ok_or_else(|| NeuralError::ShapeMismatch(format!("{what} input required by {variant} model")))
        };
        let n_f = if self.cnn.is_some() { Some(need(batch.features, "feature")?.shape[0]) } else { None };
        let n_r = if self.bilstm.is_some() {
            let raw = need(batch.raw, "raw")?;
            let want = [self.config.seq_len, self.config.seq_channels];
            if raw.shape.len() != 3 || raw.shape[1..] != want {
                return Err(NeuralError::ShapeMismatch(format!(
                    "raw input: expected [N,{},{}], got {:?}",
                    want[0], want[1], raw.shape
                )));
            }
            Some(raw.shape[0])
        } else {
            None
        };
        match (n_f, n_r) {
            (Some(a), Some(b)) if a != b => Err(NeuralError::ShapeMismatch(format!("batch sizes {a} and {b} differ"))),
            (Some(a), _) | (None, Some(a)) => Ok(a),
            (None, None) => unreachable!("every variant has a sub-model"),
        }
    }

    /// Pre-softmax scores `[N, classes]`.
    pub fn forward_logits(&mut self, batch: Batch, ctx: &mut Ctx) -> Result<Tensor, NeuralError> {
        let n = self.batch_size(&batch)?;
        let mut parts: Vec<Tensor> = Vec::new();
        if let Some(cnn) = &mut self.cnn {
            parts.push(cnn.forward(batch.features.unwrap(), ctx)?);
        }
        if let (Some(rnn), Some(att)) = (&mut self.bilstm, &mut self.attention) {
            let h = rnn.forward(batch.raw.unwrap(), ctx)?;
            parts.push(att.forward(&h, ctx)?);
        }
        let joined = if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            let width: usize = parts.iter().map(|p| p.shape[1]).sum();
            let mut data = Vec::with_capacity(n * width);
            for s in 0..n {
                for p in &parts {
                    let w = p.shape[1];
                    data.extend_from_slice(&p.data[s * w..(s + 1) * w]);
                }
            }
            Tensor { shape: vec![n, width], data }
        };
        self.head.forward(&joined, ctx)
    }

    /// Class probabilities `[N, classes]`.
    pub fn forward(&mut self, batch: Batch, ctx: &mut Ctx) -> Result<Tensor, NeuralError> {
        let mut logits = self.forward_logits(batch, ctx)?;
        logits.data = softmax_rows(&logits.data, self.config.n_classes);
        Ok(logits)
    }

    /// Accumulates parameter gradients from `dlogits` of the last recorded
    /// forward pass.
    pub fn backward(&mut self, dlogits: &Tensor) {
        let d = self.head.backward(dlogits);
        let n = d.shape[0];
        let cnn_w = self.cnn.as_ref().map_or(0, |c| c.output_width());
        let width = d.shape[1];
        let slice = |lo: usize, hi: usize| {
            let w = hi - lo;
            let mut data = Vec::with_capacity(n * w);
            for s in 0..n {
                data.extend_from_slice(&d.data[s * width + lo..s * width + hi]);
            }
            Tensor { shape: vec![n, w], data }
        };
        if let Some(cnn) = &mut self.cnn {
            cnn.backward(&slice(0, cnn_w));
        }
        if let (Some(rnn), Some(att)) = (&mut self.bilstm, &mut self.attention) {
            let dh = att.backward(&slice(cnn_w, width));
            rnn.backward(&dh, false);
        }
    }
}
