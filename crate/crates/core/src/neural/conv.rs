//! 3×3 stride-1 convolution (cross-correlation) on NHWC tensors.
//!
//! Wide inputs are zero-padded once per sample; on the padded grid every
//! kernel tap is a constant row offset, so the convolution is nine GEMMs
//! over strided views with no column matrix. Outputs are computed on the
//! padded width and the extra columns discarded. Narrow inputs (a few
//! channels) use im2col, where the nine-fold copy is cheap.

use rand_chacha::ChaCha8Rng;

use super::param::{glorot_uniform, Ctx, Param};
use super::tensor::{gemm, Tensor};
use super::NeuralError;

pub const KERNEL: usize = 3;

/// Below this many input channels the im2col path is faster.
const SHIFT_MIN_CIN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding of one pixel; output size equals input size.
    Same,
    /// No padding; each spatial dimension shrinks by two.
    Valid,
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub cin: usize,
    pub cout: usize,
    pub padding: Padding,
    /// `[3, 3, cin, cout]`.
    pub weight: Param,
    pub bias: Param,
    /// The first layer of a network never needs its input gradient.
    pub input_grad: bool,
    input: Option<Tensor>,
}

fn im2col(x: &[f64], h: usize, w: usize, c: usize, pad: usize, ho: usize, wo: usize, col: &mut [f64]) {
    let row_len = KERNEL * KERNEL * c;
    for oy in 0..ho {
        for ox in 0..wo {
            let row = &mut col[(oy * wo + ox) * row_len..][..row_len];
            for ky in 0..KERNEL {
                let iy = (oy + ky) as isize - pad as isize;
                for kx in 0..KERNEL {
                    let ix = (ox + kx) as isize - pad as isize;
                    let dst = &mut row[(ky * KERNEL + kx) * c..][..c];
                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                        dst.fill(0.0);
                    } else {
                        let src = (iy as usize * w + ix as usize) * c;
                        dst.copy_from_slice(&x[src..src + c]);
                    }
                }
            }
        }
    }
}

fn col2im(col: &[f64], h: usize, w: usize, c: usize, pad: usize, ho: usize, wo: usize, dx: &mut [f64]) {
    let row_len = KERNEL * KERNEL * c;
    for oy in 0..ho {
        for ox in 0..wo {
            let row = &col[(oy * wo + ox) * row_len..][..row_len];
            for ky in 0..KERNEL {
                let iy = (oy + ky) as isize - pad as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..KERNEL {
                    let ix = (ox + kx) as isize - pad as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let dst = (iy as usize * w + ix as usize) * c;
                    let src = &row[(ky * KERNEL + kx) * c..][..c];
                    dx[dst..dst + c].iter_mut().zip(src).for_each(|(d, s)| *d += s);
                }
            }
        }
    }
}

/// Geometry of the padded grid used by the shifted-GEMM path.
#[derive(Debug, Clone, Copy)]
struct Grid {
    h: usize,
    w: usize,
    pad: usize,
    ho: usize,
    /// Padded row width; also the output grid width.
    wp: usize,
}

impl Grid {
    /// Padded image plus two spare pixels read by the last taps.
    fn padded_len(&self, c: usize) -> usize {
        ((self.h + 2 * self.pad) * self.wp + KERNEL - 1) * c
    }

    fn rows(&self) -> usize {
        self.ho * self.wp
    }

    fn offset(&self, ky: usize, kx: usize) -> usize {
        ky * self.wp + kx
    }

    fn pad_into(&self, x: &[f64], c: usize, buf: &mut [f64]) {
        buf.fill(0.0);
        for y in 0..self.h {
            let dst = ((y + self.pad) * self.wp + self.pad) * c;
            buf[dst..dst + self.w * c].copy_from_slice(&x[y * self.w * c..(y + 1) * self.w * c]);
        }
    }
}

impl Conv2d {
    pub fn new(name: &str, cin: usize, cout: usize, padding: Padding, rng: &mut ChaCha8Rng) -> Self {
        let fan = KERNEL * KERNEL;
        let shape = [KERNEL, KERNEL, cin, cout];
        let weight =
            Param::new(format!("{name}.kernel"), &shape, glorot_uniform(rng, fan * cin, fan * cout, fan * cin * cout));
        Conv2d {
            cin,
            cout,
            padding,
            weight,
            bias: Param::zeros(format!("{name}.bias"), &[cout]),
            input_grad: true,
            input: None,
        }
    }

    fn pad(&self) -> usize {
        match self.padding {
            Padding::Same => 1,
            Padding::Valid => 0,
        }
    }

    fn grid(&self, h: usize, w: usize) -> Grid {
        let pad = self.pad();
        Grid { h, w, pad, ho: h + 2 * pad - 2, wp: w + 2 * pad }
    }

    fn tap(&self, ky: usize, kx: usize) -> &[f64] {
        &self.weight.value[(ky * KERNEL + kx) * self.cin * self.cout..][..self.cin * self.cout]
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize), NeuralError> {
        match self.padding {
            Padding::Same => Ok((h, w)),
            Padding::Valid if h >= KERNEL && w >= KERNEL => Ok((h - 2, w - 2)),
            Padding::Valid => Err(NeuralError::ShapeMismatch(format!("VALID 3x3 convolution on {h}x{w}"))),
        }
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
        if x.shape.len() != 4 || x.shape[3] != self.cin {
            return Err(NeuralError::ShapeMismatch(format!(
                "{}: expected [N,H,W,{}], got {:?}",
                self.weight.name, self.cin, x.shape
            )));
        }
        let (n, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
        let (ho, wo) = self.output_hw(h, w)?;
        let p = ho * wo;
        let k = KERNEL * KERNEL * self.cin;
        let mut out = Tensor::zeros(&[n, ho, wo, self.cout]);
        if self.cin >= SHIFT_MIN_CIN {
            let g = self.grid(h, w);
            let (cin, cout, m) = (self.cin, self.cout, g.rows());
            let mut buf = vec![0.0; g.padded_len(cin)];
            let mut yg = vec![0.0; m * cout];
            for (xs, ys) in x.data.chunks_exact(h * w * cin).zip(out.data.chunks_exact_mut(p * cout)) {
                g.pad_into(xs, cin, &mut buf);
                yg.fill(0.0);
                for ky in 0..KERNEL {
                    for kx in 0..KERNEL {
                        let a = &buf[g.offset(ky, kx) * cin..][..m * cin];
                        gemm(m, cin, cout, 1.0, a, false, self.tap(ky, kx), false, 1.0, &mut yg);
                    }
                }
                for oy in 0..ho {
                    for ox in 0..wo {
                        let dst = &mut ys[(oy * wo + ox) * cout..][..cout];
                        let src = &yg[(oy * g.wp + ox) * cout..][..cout];
                        dst.iter_mut().zip(src).zip(&self.bias.value).for_each(|((d, s), b)| *d = s + b);
                    }
                }
            }
        } else {
            let mut col = vec![0.0; p * k];
            for (xs, ys) in x.data.chunks_exact(h * w * self.cin).zip(out.data.chunks_exact_mut(p * self.cout)) {
                im2col(xs, h, w, self.cin, self.pad(), ho, wo, &mut col);
                for row in ys.chunks_exact_mut(self.cout) {
                    row.copy_from_slice(&self.bias.value);
                }
                gemm(p, k, self.cout, 1.0, &col, false, &self.weight.value, false, 1.0, ys);
            }
        }
        self.input = ctx.record.then(|| x.clone());
        Ok(out)
    }

    /// Accumulates parameter gradients; returns the input gradient (empty
    /// when `input_grad` is off).
    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let x = self.input.take().expect("conv backward without recorded forward");
        let (n, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
        let (ho, wo) = (dy.shape[1], dy.shape[2]);
        let p = ho * wo;
        let k = KERNEL * KERNEL * self.cin;
        let mut dx = if self.input_grad { Tensor::zeros(&x.shape) } else { Tensor { shape: vec![0], data: vec![] } };
        for dys in dy.data.chunks_exact(self.cout) {
            self.bias.grad.iter_mut().zip(dys).for_each(|(g, v)| *g += v);
        }
        if self.cin >= SHIFT_MIN_CIN {
            let g = self.grid(h, w);
            let (cin, cout, m) = (self.cin, self.cout, g.rows());
            let mut buf = vec![0.0; g.padded_len(cin)];
            let mut dbuf = vec![0.0; if self.input_grad { g.padded_len(cin) } else { 0 }];
            let mut dyg = vec![0.0; m * cout];
            for s in 0..n {
                let xs = &x.data[s * h * w * cin..][..h * w * cin];
                let dys = &dy.data[s * p * cout..][..p * cout];
                g.pad_into(xs, cin, &mut buf);
                for oy in 0..ho {
                    for ox in 0..wo {
                        dyg[(oy * g.wp + ox) * cout..][..cout].copy_from_slice(&dys[(oy * wo + ox) * cout..][..cout]);
                    }
                }
                dbuf.fill(0.0);
                for ky in 0..KERNEL {
                    for kx in 0..KERNEL {
                        let off = g.offset(ky, kx) * cin;
                        let t = (ky * KERNEL + kx) * cin * cout;
                        let a = &buf[off..][..m * cin];
                        gemm(cin, m, cout, 1.0, a, true, &dyg, false, 1.0, &mut self.weight.grad[t..t + cin * cout]);
                        if self.input_grad {
                            let wt = &self.weight.value[t..t + cin * cout];
                            gemm(m, cout, cin, 1.0, &dyg, false, wt, true, 1.0, &mut dbuf[off..][..m * cin]);
                        }
                    }
                }
                if self.input_grad {
                    let dxs = &mut dx.data[s * h * w * cin..][..h * w * cin];
                    for y in 0..h {
                        let src = ((y + g.pad) * g.wp + g.pad) * cin;
                        dxs[y * w * cin..(y + 1) * w * cin].copy_from_slice(&dbuf[src..src + w * cin]);
                    }
                }
            }
        } else {
            let mut col = vec![0.0; p * k];
            let mut dcol = vec![0.0; if self.input_grad { p * k } else { 0 }];
            for s in 0..n {
                let xs = &x.data[s * h * w * self.cin..][..h * w * self.cin];
                let dys = &dy.data[s * p * self.cout..][..p * self.cout];
                im2col(xs, h, w, self.cin, self.pad(), ho, wo, &mut col);
                gemm(k, p, self.cout, 1.0, &col, true, dys, false, 1.0, &mut self.weight.grad);
                if self.input_grad {
                    gemm(p, self.cout, k, 1.0, dys, false, &self.weight.value, true, 0.0, &mut dcol);
                    col2im(
                        &dcol,
                        h,
                        w,
                        self.cin,
                        self.pad(),
                        ho,
                        wo,
                        &mut dx.data[s * h * w * self.cin..][..h * w * self.cin],
                    );
                }
            }
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Direct nested-loop cross-correlation.
    fn naive(x: &Tensor, c: &Conv2d) -> Tensor {
        let (n, h, w, cin) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
        let (ho, wo) = c.output_hw(h, w).unwrap();
        let pad = if c.padding == Padding::Same { 1isize } else { 0 };
        let mut out = Tensor::zeros(&[n, ho, wo, c.cout]);
        for s in 0..n {
            for oy in 0..ho {
                for ox in 0..wo {
                    for co in 0..c.cout {
                        let mut acc = c.bias.value[co];
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = oy as isize + ky as isize - pad;
                                let ix = ox as isize + kx as isize - pad;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                for ci in 0..cin {
                                    acc += x.data[((s * h + iy as usize) * w + ix as usize) * cin + ci]
                                        * c.weight.value[((ky * 3 + kx) * cin + ci) * c.cout + co];
                                }
                            }
                        }
                        out.data[((s * ho + oy) * wo + ox) * c.cout + co] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matches_direct_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (padding, cin) in [(Padding::Same, 3), (Padding::Valid, 3), (Padding::Same, 9), (Padding::Valid, 10)] {
            let mut conv = Conv2d::new("c", cin, 4, padding, &mut rng);
            conv.bias.value = vec![0.1, -0.2, 0.3, 0.0];
            let x = Tensor::new(&[2, 5, 4, cin], (0..40 * cin).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let got = conv.forward(&x, &Ctx::eval()).unwrap();
            let want = naive(&x, &conv);
            assert_eq!(got.shape, want.shape);
            assert!(got.data.iter().zip(&want.data).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut conv = Conv2d::new("c", 1, 1, Padding::Same, &mut rng);
        conv.weight.value = vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let x = Tensor::new(&[1, 4, 3, 1], (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(conv.forward(&x, &Ctx::eval()).unwrap(), x);
    }

    #[test]
    fn first_layer_shape_and_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut conv = Conv2d::new("conv_1", 1, 32, Padding::Same, &mut rng);
        assert_eq!(conv.param_count(), 320);
        let y = conv.forward(&Tensor::zeros(&[1, 252, 20, 1]), &Ctx::eval()).unwrap();
        assert_eq!(y.shape, vec![1, 252, 20, 32]);
        assert!(conv.forward(&Tensor::zeros(&[1, 252, 20, 2]), &Ctx::eval()).is_err());
        let mut valid = Conv2d::new("v", 1, 1, Padding::Valid, &mut rng);
        assert!(valid.forward(&Tensor::zeros(&[1, 2, 5, 1]), &Ctx::eval()).is_err());
    }
}
