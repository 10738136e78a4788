//! Two-block convolutional sub-model over the 252×20 feature map.

use rand_chacha::ChaCha8Rng;

use super::conv::{Conv2d, Padding};
use super::layers::{concat_channels, split_channels, BatchNorm, Dense, Dropout, LeakyRelu, MaxPool2};
use super::param::{Ctx, Param};
use super::tensor::Tensor;
use super::{ModelConfig, NeuralError};

#[derive(Debug, Clone)]
pub struct CnnSubmodel {
    pub conv: [Conv2d; 8],
    pub bn: [BatchNorm; 4],
    act: [LeakyRelu; 6],
    sd: [Dropout; 6],
    pool: [MaxPool2; 3],
    pub dense: Dense,
    dropout: Dropout,
    input_hw: (usize, usize),
    pooled_shape: Vec<usize>,
    /// `(layer, output shape without the batch axis)` of the last forward.
    pub trace: Vec<(&'static str, Vec<usize>)>,
}

/// Spatial size after the full stack, or an error if the input is too small.
pub fn flattened_len(cfg: &ModelConfig) -> Result<usize, NeuralError> {
    let (h, w) = (cfg.feature_rows, cfg.feature_cols);
    let (h, w) = MaxPool2::output_hw(h, w)?;
    let shrink = |h: usize, w: usize| -> Result<(usize, usize), NeuralError> {
        if h < 3 || w < 3 {
            return Err(NeuralError::ShapeMismatch(format!("VALID 3x3 convolution on {h}x{w}")));
        }
        Ok((h - 2, w - 2))
    };
    let (h, w) = shrink(h, w)?;
    let (h, w) = MaxPool2::output_hw(h, w)?;
    let (h, w) = shrink(h, w)?;
    let (h, w) = MaxPool2::output_hw(h, w)?;
    Ok(h * w * 4 * cfg.base_maps)
}

impl CnnSubmodel {
    pub fn new(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self, NeuralError> {
        let m = cfg.base_maps;
        let flat = flattened_len(cfg)?;
        let mut conv = [
            Conv2d::new("conv_1", 1, m, Padding::Same, rng),
            Conv2d::new("conv_2", m, m, Padding::Same, rng),
            Conv2d::new("conv_3", 2 * m, 2 * m, Padding::Same, rng),
            Conv2d::new("conv_4", 2 * m, 2 * m, Padding::Valid, rng),
            Conv2d::new("conv_5", 2 * m, 2 * m, Padding::Same, rng),
            Conv2d::new("conv_6", 2 * m, 2 * m, Padding::Same, rng),
            Conv2d::new("conv_7", 4 * m, 4 * m, Padding::Same, rng),
            Conv2d::new("conv_8", 4 * m, 4 * m, Padding::Valid, rng),
        ];
        conv[0].input_grad = false;
        let mo = cfg.bn_momentum;
        let act = std::array::from_fn(|_| LeakyRelu::new(cfg.lrelu_alpha));
        let sd = std::array::from_fn(|_| Dropout::spatial(cfg.spatial_dropout));
        Ok(CnnSubmodel {
            conv,
            bn: [
                BatchNorm::new("bn_1", m, mo),
                BatchNorm::new("bn_2", 2 * m, mo),
                BatchNorm::new("bn_3", 2 * m, mo),
                BatchNorm::new("bn_4", 4 * m, mo),
            ],
            act,
            sd,
            pool: Default::default(),
            dense: Dense::new("dense", flat, cfg.dense_units, rng),
            dropout: Dropout::new(cfg.dropout),
            input_hw: (cfg.feature_rows, cfg.feature_cols),
            pooled_shape: Vec::new(),
            trace: Vec::new(),
        })
    }

    pub fn output_width(&self) -> usize {
        self.dense.fan_out()
    }

    /// `(layer name, parameter count)` in network order; batch-norm counts
    /// include the running statistics.
    pub fn layer_params(&self) -> Vec<(String, usize)> {
        let c = |i: usize| (format!("conv_{}", i + 1), self.conv[i].param_count());
        let b = |i: usize| (format!("bn_{}", i + 1), self.bn[i].param_count());
        vec![
            c(0),
            c(1),
            b(0),
            c(2),
            c(3),
            b(1),
            c(4),
            c(5),
            b(2),
            c(6),
            c(7),
            b(3),
            ("dense".into(), self.dense.param_count()),
        ]
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = Vec::new();
        for c in &self.conv {
            v.extend(c.params());
        }
        for b in &self.bn {
            v.extend(b.params());
        }
        v.extend(self.dense.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = Vec::new();
        for c in &mut self.conv {
            v.extend(c.params_mut());
        }
        for b in &mut self.bn {
            v.extend(b.params_mut());
        }
        v.extend(self.dense.params_mut());
        v
    }

    /// Feeds the activation signs and pooling choices of the last recorded
    /// forward into `state`. Within one pattern the network is smooth.
    pub fn hash_pattern<H: std::hash::Hasher>(&self, state: &mut H) {
        use std::hash::Hash;
        for a in &self.act {
            a.pattern().hash(state);
        }
        for p in &self.pool {
            p.routing().hash(state);
        }
    }

    /// `[N, H, W, 1]` feature maps to `[N, dense_units]`.
    pub fn forward(&mut self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor, NeuralError> {
        let (h, w) = self.input_hw;
        if x.shape.len() != 4 || x.shape[1..] != [h, w, 1] {
            return Err(NeuralError::ShapeMismatch(format!("cnn input: expected [N,{h},{w},1], got {:?}", x.shape)));
        }
        let n = x.shape[0];
        let mut trace = Vec::new();
        let mut log = |name: &'static str, t: &Tensor| trace.push((name, t.shape[1..].to_vec()));
        log("input", x);

        let x1 = self.act[0].forward(self.conv[0].forward(x, ctx)?, ctx);
        log("conv_1", &x1);
        let d1 = self.sd[0].forward(x1.clone(), ctx);
        let y2 = self.conv[1].forward(&d1, ctx)?;
        log("conv_2", &y2);
        let y2 = self.act[1].forward(self.bn[0].forward(&y2, ctx)?, ctx);
        let cat1 = concat_channels(&x1, &y2)?;
        log("concatenate", &cat1);
        drop((x1, y2, d1));
        let y3 = self.sd[1].forward(self.conv[2].forward(&cat1, ctx)?, ctx);
        log("conv_3", &y3);
        drop(cat1);
        let p1 = self.pool[0].forward(&y3, ctx)?;
        log("maxpool_1", &p1);
        drop(y3);
        let y4 = self.conv[3].forward(&p1, ctx)?;
        log("conv_4", &y4);
        let y4 = self.sd[2].forward(self.act[2].forward(self.bn[1].forward(&y4, ctx)?, ctx), ctx);

        let x5 = self.act[3].forward(self.conv[4].forward(&y4, ctx)?, ctx);
        log("conv_5", &x5);
        let d5 = self.sd[3].forward(x5.clone(), ctx);
        let y6 = self.conv[5].forward(&d5, ctx)?;
        log("conv_6", &y6);
        let y6 = self.act[4].forward(self.bn[2].forward(&y6, ctx)?, ctx);
        let cat2 = concat_channels(&x5, &y6)?;
        log("concatenate_1", &cat2);
        let y7 = self.sd[4].forward(self.conv[6].forward(&cat2, ctx)?, ctx);
        log("conv_7", &y7);
        let p2 = self.pool[1].forward(&y7, ctx)?;
        log("maxpool_2", &p2);
        let y8 = self.conv[7].forward(&p2, ctx)?;
        log("conv_8", &y8);
        let y8 = self.sd[5].forward(self.act[5].forward(self.bn[3].forward(&y8, ctx)?, ctx), ctx);
        let p3 = self.pool[2].forward(&y8, ctx)?;
        log("maxpool_3", &p3);
        self.pooled_shape = p3.shape.clone();
        let flat_len = p3.row_len();
        let flat = p3.reshape(&[n, flat_len]);
        log("flatten", &flat);
        let out = self.dense.forward(&flat, ctx)?;
        log("dense", &out);
        let out = self.dropout.forward(out, ctx);
        self.trace = trace;
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Tensor) {
        let d = self.dense.backward(&self.dropout.backward(dy.clone()));
        let d = d.reshape(&self.pooled_shape);
        let d = self.pool[2].backward(&d);
        let d = self.bn[3].backward(&self.act[5].backward(self.sd[5].backward(d)));
        let d = self.conv[7].backward(&d);
        let d = self.pool[1].backward(&d);
        let d = self.conv[6].backward(&self.sd[4].backward(d));
        let (mut dx5, dy6) = split_channels(&d, self.conv[4].cout);
        let d = self.bn[2].backward(&self.act[4].backward(dy6));
        let d = self.sd[3].backward(self.conv[5].backward(&d));
        dx5.data.iter_mut().zip(&d.data).for_each(|(a, b)| *a += b);
        let d = self.conv[4].backward(&self.act[3].backward(dx5));

        let d = self.bn[1].backward(&self.act[2].backward(self.sd[2].backward(d)));
        let d = self.conv[3].backward(&d);
        let d = self.pool[0].backward(&d);
        let d = self.conv[2].backward(&self.sd[1].backward(d));
        let (mut dx1, dy2) = split_channels(&d, self.conv[0].cout);
        let d = self.bn[0].backward(&self.act[1].backward(dy2));
        let d = self.sd[0].backward(self.conv[1].backward(&d));
        dx1.data.iter_mut().zip(&d.data).for_each(|(a, b)| *a += b);
        self.conv[0].backward(&self.act[0].backward(dx1));
    }
}
