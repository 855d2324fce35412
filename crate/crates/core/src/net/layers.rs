use serde::{Deserialize, Serialize};

use super::BnMode;
use crate::tensor::{gemm, Tensor3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv1d,
    ConvT1d,
    Batchnorm1d,
    Relu,
    LeakyRelu,
    Tanh,
}

/// Shape-level description of a layer, without its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// `(out_ch, in_ch, kernel)`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Transposed 1D convolution; weight layout `(in_ch, out_ch, kernel)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvTranspose1d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm1d {
    pub channels: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Conv1d(Conv1d),
    ConvT1d(ConvTranspose1d),
    Batchnorm1d(BatchNorm1d),
    Relu,
    LeakyRelu { slope: f64 },
    Tanh,
}

/// What a layer keeps from its forward pass for the backward pass.
#[derive(Clone, Debug)]
pub(crate) enum Cache {
    Conv {
        cols: Vec<f64>,
        in_shape: (usize, usize, usize),
    },
    ConvT {
        x_mat: Vec<f64>,
        in_shape: (usize, usize, usize),
    },
    BatchNorm {
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        mode: BnMode,
        /// Batch mean and unbiased variance, recorded in active mode.
        stats: Option<(Vec<f64>, Vec<f64>)>,
    },
    Relu {
        input: Tensor3,
    },
    LeakyRelu {
        input: Tensor3,
    },
    Tanh {
        output: Tensor3,
    },
}

pub(crate) type ParamGrads = Vec<Vec<f64>>;

fn conv_out_len(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    (len + 2 * padding)
        .checked_sub(kernel)
        .map(|span| span / stride + 1)
}

fn conv_t_out_len(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    ((len - 1) * stride + kernel).checked_sub(2 * padding)
}

impl Conv1d {
    pub fn out_len(&self, len: usize) -> Option<usize> {
        conv_out_len(len, self.kernel, self.stride, self.padding)
    }

    /// Source position of output tap `(t, kk)`, if it falls inside the input.
    #[inline]
    fn source(&self, t: usize, kk: usize, len: usize) -> Option<usize> {
        (t * self.stride + kk)
            .checked_sub(self.padding)
            .filter(|&p| p < len)
    }

    fn forward(&self, x: &Tensor3) -> (Tensor3, Cache) {
        let (nb, ic, lin) = x.shape();
        assert_eq!(ic, self.in_ch, "conv1d: channel mismatch");
        let lout = self.out_len(lin).expect("conv1d: input shorter than kernel");
        let (k, n) = (self.kernel, nb * lout);

        let mut cols = vec![0.0; ic * k * n];
        for c in 0..ic {
            for kk in 0..k {
                let row = &mut cols[(c * k + kk) * n..(c * k + kk + 1) * n];
                for b in 0..nb {
                    for t in 0..lout {
                        if let Some(p) = self.source(t, kk, lin) {
                            row[b * lout + t] = x.at(b, c, p);
                        }
                    }
                }
            }
        }

        let mut out = vec![0.0; self.out_ch * n];
        gemm(self.out_ch, ic * k, n, &self.weight, false, &cols, false, 0.0, &mut out);
        for (o, row) in out.chunks_mut(n).enumerate() {
            row.iter_mut().for_each(|v| *v += self.bias[o]);
        }
        let y = Tensor3::from_channel_major(nb, self.out_ch, lout, &out);
        (
            y,
            Cache::Conv {
                cols,
                in_shape: x.shape(),
            },
        )
    }

    fn backward(
        &self,
        cols: &[f64],
        in_shape: (usize, usize, usize),
        dy: &Tensor3,
        want_params: bool,
    ) -> (Tensor3, Option<ParamGrads>) {
        let (nb, ic, lin) = in_shape;
        let (_, oc, lout) = dy.shape();
        let (k, n) = (self.kernel, nb * lout);
        let dy_mat = dy.to_channel_major();

        let grads = want_params.then(|| {
            let mut dw = vec![0.0; oc * ic * k];
            gemm(oc, n, ic * k, &dy_mat, false, cols, true, 0.0, &mut dw);
            let db = dy_mat.chunks(n).map(|r| r.iter().sum()).collect();
            vec![dw, db]
        });

        let mut dcols = vec![0.0; ic * k * n];
        gemm(ic * k, oc, n, &self.weight, true, &dy_mat, false, 0.0, &mut dcols);
        let mut dx = Tensor3::zeros(nb, ic, lin);
        for c in 0..ic {
            for kk in 0..k {
                let row = &dcols[(c * k + kk) * n..(c * k + kk + 1) * n];
                for b in 0..nb {
                    let dst = &mut dx.item_mut(b)[c * lin..(c + 1) * lin];
                    for t in 0..lout {
                        if let Some(p) = self.source(t, kk, lin) {
                            dst[p] += row[b * lout + t];
                        }
                    }
                }
            }
        }
        (dx, grads)
    }
}

impl ConvTranspose1d {
    pub fn out_len(&self, len: usize) -> Option<usize> {
        if len == 0 {
            return None;
        }
        conv_t_out_len(len, self.kernel, self.stride, self.padding)
    }

    /// Output position fed by input position `j` through tap `kk`.
    #[inline]
    fn target(&self, j: usize, kk: usize, lout: usize) -> Option<usize> {
        (j * self.stride + kk)
            .checked_sub(self.padding)
            .filter(|&p| p < lout)
    }

    fn forward(&self, x: &Tensor3) -> (Tensor3, Cache) {
        let (nb, ic, lin) = x.shape();
        assert_eq!(ic, self.in_ch, "conv_t1d: channel mismatch");
        let lout = self.out_len(lin).expect("conv_t1d: degenerate output length");
        let (oc, k, n) = (self.out_ch, self.kernel, nb * lin);

        let x_mat = x.to_channel_major();
        let mut cols = vec![0.0; oc * k * n];
        gemm(oc * k, ic, n, &self.weight, true, &x_mat, false, 0.0, &mut cols);

        let mut y = Tensor3::zeros(nb, oc, lout);
        for b in 0..nb {
            let item = y.item_mut(b);
            for o in 0..oc {
                let dst = &mut item[o * lout..(o + 1) * lout];
                dst.iter_mut().for_each(|v| *v = self.bias[o]);
                for kk in 0..k {
                    let row = &cols[(o * k + kk) * n + b * lin..(o * k + kk) * n + (b + 1) * lin];
                    for (j, &v) in row.iter().enumerate() {
                        if let Some(p) = self.target(j, kk, lout) {
                            dst[p] += v;
                        }
                    }
                }
            }
        }
        (
            y,
            Cache::ConvT {
                x_mat,
                in_shape: x.shape(),
            },
        )
    }

    fn backward(
        &self,
        x_mat: &[f64],
        in_shape: (usize, usize, usize),
        dy: &Tensor3,
        want_params: bool,
    ) -> (Tensor3, Option<ParamGrads>) {
        let (nb, ic, lin) = in_shape;
        let (_, oc, lout) = dy.shape();
        let (k, n) = (self.kernel, nb * lin);

        let mut dcols = vec![0.0; oc * k * n];
        for o in 0..oc {
            for kk in 0..k {
                let row = &mut dcols[(o * k + kk) * n..(o * k + kk + 1) * n];
                for b in 0..nb {
                    for j in 0..lin {
                        if let Some(p) = self.target(j, kk, lout) {
                            row[b * lin + j] = dy.at(b, o, p);
                        }
                    }
                }
            }
        }

        let grads = want_params.then(|| {
            let mut dw = vec![0.0; ic * oc * k];
            gemm(ic, n, oc * k, x_mat, false, &dcols, true, 0.0, &mut dw);
            let mut db = vec![0.0; oc];
            for b in 0..nb {
                for (o, d) in db.iter_mut().enumerate() {
                    *d += dy.item(b)[o * lout..(o + 1) * lout].iter().sum::<f64>();
                }
            }
            vec![dw, db]
        });

        let mut dx_mat = vec![0.0; ic * n];
        gemm(ic, oc * k, n, &self.weight, false, &dcols, false, 0.0, &mut dx_mat);
        (Tensor3::from_channel_major(nb, ic, lin, &dx_mat), grads)
    }
}

impl BatchNorm1d {
    pub fn new(channels: usize, momentum: f64, eps: f64) -> Self {
        Self {
            channels,
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum,
            eps,
        }
    }

    fn forward(&self, x: &Tensor3, mode: BnMode) -> (Tensor3, Cache) {
        let (nb, nc, nl) = x.shape();
        assert_eq!(nc, self.channels, "batchnorm1d: channel mismatch");
        let count = (nb * nl) as f64;

        let (mean, var) = match mode {
            BnMode::Active => {
                let mut mean = vec![0.0; nc];
                let mut var = vec![0.0; nc];
                for c in 0..nc {
                    let mut s = 0.0;
                    for b in 0..nb {
                        s += x.item(b)[c * nl..(c + 1) * nl].iter().sum::<f64>();
                    }
                    let m = s / count;
                    let mut ss = 0.0;
                    for b in 0..nb {
                        ss += x.item(b)[c * nl..(c + 1) * nl]
                            .iter()
                            .map(|v| (v - m) * (v - m))
                            .sum::<f64>();
                    }
                    mean[c] = m;
                    var[c] = ss / count;
                }
                (mean, var)
            }
            BnMode::Static => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();

        let mut xhat = vec![0.0; x.data().len()];
        let mut y = Tensor3::zeros(nb, nc, nl);
        for b in 0..nb {
            let src = x.item(b);
            let base = b * nc * nl;
            let dst = y.item_mut(b);
            for c in 0..nc {
                for t in c * nl..(c + 1) * nl {
                    let h = (src[t] - mean[c]) * inv_std[c];
                    xhat[base + t] = h;
                    dst[t] = self.gamma[c] * h + self.beta[c];
                }
            }
        }

        let stats = (mode == BnMode::Active).then(|| {
            let unbiased = if count > 1.0 {
                var.iter().map(|v| v * count / (count - 1.0)).collect()
            } else {
                var.clone()
            };
            (mean, unbiased)
        });
        (
            y,
            Cache::BatchNorm {
                xhat,
                inv_std,
                mode,
                stats,
            },
        )
    }

    fn backward(
        &self,
        xhat: &[f64],
        inv_std: &[f64],
        mode: BnMode,
        dy: &Tensor3,
        want_params: bool,
    ) -> (Tensor3, Option<ParamGrads>) {
        let (nb, nc, nl) = dy.shape();
        let count = (nb * nl) as f64;
        let mut sum_dy = vec![0.0; nc];
        let mut sum_dy_xhat = vec![0.0; nc];
        for b in 0..nb {
            let d = dy.item(b);
            let base = b * nc * nl;
            for c in 0..nc {
                for t in c * nl..(c + 1) * nl {
                    sum_dy[c] += d[t];
                    sum_dy_xhat[c] += d[t] * xhat[base + t];
                }
            }
        }

        let mut dx = Tensor3::zeros(nb, nc, nl);
        for b in 0..nb {
            let d = dy.item(b);
            let base = b * nc * nl;
            let out = dx.item_mut(b);
            for c in 0..nc {
                let g = self.gamma[c] * inv_std[c];
                for t in c * nl..(c + 1) * nl {
                    out[t] = match mode {
                        BnMode::Static => g * d[t],
                        BnMode::Active => {
                            g * (d[t] - sum_dy[c] / count - xhat[base + t] * sum_dy_xhat[c] / count)
                        }
                    };
                }
            }
        }
        let grads = want_params.then(|| vec![sum_dy_xhat, sum_dy]);
        (dx, grads)
    }

    /// Exponential moving update of the running statistics.
    pub fn absorb(&mut self, mean: &[f64], unbiased_var: &[f64]) {
        let m = self.momentum;
        for c in 0..self.channels {
            self.running_mean[c] = (1.0 - m) * self.running_mean[c] + m * mean[c];
            self.running_var[c] = (1.0 - m) * self.running_var[c] + m * unbiased_var[c];
        }
    }
}

impl Layer {
    pub fn spec(&self) -> LayerSpec {
        let plain = |kind| LayerSpec {
            kind,
            in_ch: 0,
            out_ch: 0,
            kernel: 0,
            stride: 0,
            padding: 0,
            slope: 0.0,
        };
        match self {
            Layer::Conv1d(c) => LayerSpec {
                kind: LayerKind::Conv1d,
                in_ch: c.in_ch,
                out_ch: c.out_ch,
                kernel: c.kernel,
                stride: c.stride,
                padding: c.padding,
                slope: 0.0,
            },
            Layer::ConvT1d(c) => LayerSpec {
                kind: LayerKind::ConvT1d,
                in_ch: c.in_ch,
                out_ch: c.out_ch,
                kernel: c.kernel,
                stride: c.stride,
                padding: c.padding,
                slope: 0.0,
            },
            Layer::Batchnorm1d(bn) => LayerSpec {
                in_ch: bn.channels,
                out_ch: bn.channels,
                ..plain(LayerKind::Batchnorm1d)
            },
            Layer::Relu => plain(LayerKind::Relu),
            Layer::LeakyRelu { slope } => LayerSpec {
                slope: *slope,
                ..plain(LayerKind::LeakyRelu)
            },
            Layer::Tanh => plain(LayerKind::Tanh),
        }
    }

    pub fn kind(&self) -> LayerKind {
        self.spec().kind
    }

    pub(crate) fn forward(&self, x: &Tensor3, mode: BnMode) -> (Tensor3, Cache) {
        match self {
            Layer::Conv1d(c) => c.forward(x),
            Layer::ConvT1d(c) => c.forward(x),
            Layer::Batchnorm1d(bn) => bn.forward(x, mode),
            Layer::Relu => {
                let mut y = x.clone();
                y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                (y, Cache::Relu { input: x.clone() })
            }
            Layer::LeakyRelu { slope } => {
                let mut y = x.clone();
                y.data_mut()
                    .iter_mut()
                    .for_each(|v| *v = if *v > 0.0 { *v } else { *v * slope });
                (y, Cache::LeakyRelu { input: x.clone() })
            }
            Layer::Tanh => {
                let mut y = x.clone();
                y.data_mut().iter_mut().for_each(|v| *v = v.tanh());
                (y.clone(), Cache::Tanh { output: y })
            }
        }
    }

    pub(crate) fn backward(
        &self,
        cache: &Cache,
        dy: &Tensor3,
        want_params: bool,
    ) -> (Tensor3, Option<ParamGrads>) {
        match (self, cache) {
            (Layer::Conv1d(c), Cache::Conv { cols, in_shape }) => {
                c.backward(cols, *in_shape, dy, want_params)
            }
            (Layer::ConvT1d(c), Cache::ConvT { x_mat, in_shape }) => {
                c.backward(x_mat, *in_shape, dy, want_params)
            }
            (
                Layer::Batchnorm1d(bn),
                Cache::BatchNorm {
                    xhat,
                    inv_std,
                    mode,
                    ..
                },
            ) => bn.backward(xhat, inv_std, *mode, dy, want_params),
            (Layer::Relu, Cache::Relu { input }) => {
                let mut dx = dy.clone();
                dx.data_mut()
                    .iter_mut()
                    .zip(input.data())
                    .for_each(|(d, &x)| {
                        if x <= 0.0 {
                            *d = 0.0
                        }
                    });
                (dx, want_params.then(Vec::new))
            }
            (Layer::LeakyRelu { slope }, Cache::LeakyRelu { input }) => {
                let mut dx = dy.clone();
                dx.data_mut()
                    .iter_mut()
                    .zip(input.data())
                    .for_each(|(d, &x)| {
                        if x <= 0.0 {
                            *d *= slope
                        }
                    });
                (dx, want_params.then(Vec::new))
            }
            (Layer::Tanh, Cache::Tanh { output }) => {
                let mut dx = dy.clone();
                dx.data_mut()
                    .iter_mut()
                    .zip(output.data())
                    .for_each(|(d, &y)| *d *= 1.0 - y * y);
                (dx, want_params.then(Vec::new))
            }
            _ => panic!("layer/cache mismatch"),
        }
    }

    pub(crate) fn out_shape(&self, shape: (usize, usize, usize)) -> Option<(usize, usize, usize)> {
        let (b, c, l) = shape;
        match self {
            Layer::Conv1d(cv) if c == cv.in_ch => Some((b, cv.out_ch, cv.out_len(l)?)),
            Layer::ConvT1d(cv) if c == cv.in_ch => Some((b, cv.out_ch, cv.out_len(l)?)),
            Layer::Batchnorm1d(bn) if c == bn.channels => Some(shape),
            Layer::Conv1d(_) | Layer::ConvT1d(_) | Layer::Batchnorm1d(_) => None,
            _ => Some(shape),
        }
    }

    pub(crate) fn params(&self) -> Vec<&[f64]> {
        match self {
            Layer::Conv1d(c) => vec![&c.weight, &c.bias],
            Layer::ConvT1d(c) => vec![&c.weight, &c.bias],
            Layer::Batchnorm1d(bn) => vec![&bn.gamma, &bn.beta],
            _ => Vec::new(),
        }
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::Conv1d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::ConvT1d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Batchnorm1d(bn) => vec![&mut bn.gamma, &mut bn.beta],
            _ => Vec::new(),
        }
    }
}
