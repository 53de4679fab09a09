//! Layer kinds with explicit forward and reverse-mode passes over
//! `N × C × H × W` activations stored row-major.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gemm, Trans};
use crate::rng::SeededRng;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Dense map from a flat input to `channels × side × side`.
    FullyConnected {
        inputs: usize,
        channels: usize,
        side: usize,
    },
    /// 1×1 convolution.
    FullyConv {
        in_channels: usize,
        out_channels: usize,
    },
    Conv3x3 {
        in_channels: usize,
        out_channels: usize,
    },
    Conv7x7 {
        in_channels: usize,
        out_channels: usize,
    },
    BilinearUpsampleX2,
    BatchNorm {
        channels: usize,
    },
    Relu,
    Tanh,
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::FullyConnected { .. } => "fully_connected",
            Self::FullyConv { .. } => "fully_conv",
            Self::Conv3x3 { .. } => "conv3x3",
            Self::Conv7x7 { .. } => "conv7x7",
            Self::BilinearUpsampleX2 => "bilinear_upsample_x2",
            Self::BatchNorm { .. } => "batch_norm",
            Self::Relu => "relu",
            Self::Tanh => "tanh",
        }
    }

    /// `(in, out, kernel)` for the convolution kinds.
    pub fn conv_dims(&self) -> Option<(usize, usize, usize)> {
        match *self {
            Self::FullyConv { in_channels, out_channels } => Some((in_channels, out_channels, 1)),
            Self::Conv3x3 { in_channels, out_channels } => Some((in_channels, out_channels, 3)),
            Self::Conv7x7 { in_channels, out_channels } => Some((in_channels, out_channels, 7)),
            _ => None,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = || {
            Error::shape(format!(
                "{} cannot take per-sample input of shape {input:?}",
                self.name()
            ))
        };
        match self {
            Self::FullyConnected { inputs, channels, side } => {
                if input.iter().product::<usize>() != *inputs {
                    return Err(bad());
                }
                Ok(vec![*channels, *side, *side])
            }
            Self::BilinearUpsampleX2 => match input {
                [c, h, w] => Ok(vec![*c, 2 * h, 2 * w]),
                _ => Err(bad()),
            },
            Self::BatchNorm { channels } => match input {
                [c, _, _] if c == channels => Ok(input.to_vec()),
                _ => Err(bad()),
            },
            Self::Relu | Self::Tanh => Ok(input.to_vec()),
            conv => {
                let (ci, co, _) = conv.conv_dims().expect("convolution");
                match input {
                    [c, h, w] if *c == ci => Ok(vec![co, *h, *w]),
                    _ => Err(bad()),
                }
            }
        }
    }

    /// Shapes of the trainable tensors, in storage order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            Self::FullyConnected { inputs, channels, side } => {
                let out = channels * side * side;
                vec![vec![out, inputs], vec![out]]
            }
            Self::BatchNorm { channels } => vec![vec![channels], vec![channels]],
            Self::BilinearUpsampleX2 | Self::Relu | Self::Tanh => vec![],
            conv => {
                let (ci, co, k) = conv.conv_dims().expect("convolution");
                vec![vec![co, ci, k, k], vec![co]]
            }
        }
    }

    /// Weights uniform in `±1/√fan_in`, biases 0, batch-norm `γ = 1, β = 0`.
    pub fn init_params(&self, rng: &mut SeededRng) -> Vec<Vec<f64>> {
        let shapes = self.param_shapes();
        match self {
            Self::BatchNorm { channels } => vec![vec![1.0; *channels], vec![0.0; *channels]],
            _ if shapes.is_empty() => vec![],
            _ => {
                let w = &shapes[0];
                let fan_in: usize = w[1..].iter().product();
                let b = 1.0 / (fan_in as f64).sqrt();
                let count: usize = w.iter().product();
                let weights = (0..count).map(|_| rng.uniform_in(-b, b)).collect();
                vec![weights, vec![0.0; shapes[1][0]]]
            }
        }
    }
}

/// Intermediate values kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub(crate) enum Cache {
    Input(Vec<f64>),
    Norm { xhat: Vec<f64>, inv_std: Vec<f64> },
    Output(Vec<f64>),
    Nothing,
}

/// Activation layout of a batch: `n` samples of `c × h × w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Dims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub fn from_sample(n: usize, shape: &[usize]) -> Self {
        match shape {
            [c, h, w] => Self { n, c: *c, h: *h, w: *w },
            _ => Self {
                n,
                c: shape.iter().product(),
                h: 1,
                w: 1,
            },
        }
    }

    pub fn hw(&self) -> usize {
        self.h * self.w
    }

    pub fn per_sample(&self) -> usize {
        self.c * self.hw()
    }
}

fn im2col(x: &[f64], c: usize, h: usize, w: usize, k: usize, col: &mut [f64]) {
    let p = k / 2;
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ci * k + ky) * k + kx) * hw..][..hw];
                // Valid output columns for this horizontal tap.
                let x0 = p.saturating_sub(kx);
                let x1 = (w + p).saturating_sub(kx).min(w);
                for oy in 0..h {
                    let dst = &mut row[oy * w..(oy + 1) * w];
                    let sy = oy + ky;
                    if sy < p || sy - p >= h || x0 >= x1 {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[(sy - p) * w..(sy - p + 1) * w];
                    dst[..x0].fill(0.0);
                    dst[x1..].fill(0.0);
                    dst[x0..x1].copy_from_slice(&src[x0 + kx - p..x1 + kx - p]);
                }
            }
        }
    }
}

fn col2im(col: &[f64], c: usize, h: usize, w: usize, k: usize, dx: &mut [f64]) {
    let p = k / 2;
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((ci * k + ky) * k + kx) * hw..][..hw];
                let x0 = p.saturating_sub(kx);
                let x1 = (w + p).saturating_sub(kx).min(w);
                if x0 >= x1 {
                    continue;
                }
                for oy in 0..h {
                    let sy = oy + ky;
                    if sy < p || sy - p >= h {
                        continue;
                    }
                    let src = &row[oy * w + x0..oy * w + x1];
                    let dst = &mut plane[(sy - p) * w + x0 + kx - p..(sy - p) * w + x1 + kx - p];
                    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
                }
            }
        }
    }
}

pub(crate) fn conv_forward(
    x: &[f64],
    d: Dims,
    co: usize,
    k: usize,
    weight: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let hw = d.hw();
    let kk = d.c * k * k;
    let mut out = vec![0.0; d.n * co * hw];
    let mut col = if k == 1 { Vec::new() } else { vec![0.0; kk * hw] };
    for i in 0..d.n {
        let xi = &x[i * d.per_sample()..(i + 1) * d.per_sample()];
        let oi = &mut out[i * co * hw..(i + 1) * co * hw];
        for (o, chunk) in oi.chunks_mut(hw).enumerate() {
            chunk.fill(bias[o]);
        }
        let src = if k == 1 {
            xi
        } else {
            im2col(xi, d.c, d.h, d.w, k, &mut col);
            &col
        };
        gemm(Trans::No, Trans::No, co, kk, hw, weight, src, 1.0, oi);
    }
    out
}

/// Returns the input gradient and accumulates into `dw`, `db`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    x: &[f64],
    d: Dims,
    co: usize,
    k: usize,
    weight: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let hw = d.hw();
    let kk = d.c * k * k;
    let mut dx = vec![0.0; x.len()];
    let mut col = if k == 1 { Vec::new() } else { vec![0.0; kk * hw] };
    let mut dcol = vec![0.0; kk * hw];
    for i in 0..d.n {
        let xi = &x[i * d.per_sample()..(i + 1) * d.per_sample()];
        let dyi = &dy[i * co * hw..(i + 1) * co * hw];
        for (o, chunk) in dyi.chunks(hw).enumerate() {
            db[o] += chunk.iter().sum::<f64>();
        }
        let src = if k == 1 {
            xi
        } else {
            im2col(xi, d.c, d.h, d.w, k, &mut col);
            &col
        };
        gemm(Trans::No, Trans::Yes, co, hw, kk, dyi, src, 1.0, dw);
        let dxi = &mut dx[i * d.per_sample()..(i + 1) * d.per_sample()];
        if k == 1 {
            gemm(Trans::Yes, Trans::No, kk, co, hw, weight, dyi, 0.0, dxi);
        } else {
            gemm(Trans::Yes, Trans::No, kk, co, hw, weight, dyi, 0.0, &mut dcol);
            col2im(&dcol, d.c, d.h, d.w, k, dxi);
        }
    }
    dx
}

pub(crate) fn fc_forward(x: &[f64], n: usize, inputs: usize, out: usize, weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let mut y: Vec<f64> = (0..n).flat_map(|_| bias.iter().copied()).collect();
    gemm(Trans::No, Trans::Yes, n, inputs, out, x, weight, 1.0, &mut y);
    y
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn fc_backward(
    x: &[f64],
    n: usize,
    inputs: usize,
    out: usize,
    weight: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    for row in dy.chunks(out) {
        db.iter_mut().zip(row).for_each(|(b, g)| *b += g);
    }
    gemm(Trans::Yes, Trans::No, out, n, inputs, dy, x, 1.0, dw);
    let mut dx = vec![0.0; n * inputs];
    gemm(Trans::No, Trans::No, n, out, inputs, dy, weight, 0.0, &mut dx);
    dx
}

/// Source taps `(i0, i1, w0, w1)` for half-pixel-centred ×2 upsampling
/// with edge clamping.
fn upsample_taps(n: usize) -> Vec<(usize, usize, f64, f64)> {
    (0..2 * n)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            let l = src - i0 as f64;
            (i0, i1, 1.0 - l, l)
        })
        .collect()
}

pub(crate) fn upsample_forward(x: &[f64], d: Dims) -> Vec<f64> {
    let (oh, ow) = (2 * d.h, 2 * d.w);
    let ty = upsample_taps(d.h);
    let tx = upsample_taps(d.w);
    let mut out = vec![0.0; d.n * d.c * oh * ow];
    for (plane, dst) in x.chunks(d.hw()).zip(out.chunks_mut(oh * ow)) {
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                dst[oy * ow + ox] = wy0 * (wx0 * plane[y0 * d.w + x0] + wx1 * plane[y0 * d.w + x1])
                    + wy1 * (wx0 * plane[y1 * d.w + x0] + wx1 * plane[y1 * d.w + x1]);
            }
        }
    }
    out
}

pub(crate) fn upsample_backward(dy: &[f64], d: Dims) -> Vec<f64> {
    let (oh, ow) = (2 * d.h, 2 * d.w);
    let ty = upsample_taps(d.h);
    let tx = upsample_taps(d.w);
    let mut dx = vec![0.0; d.n * d.c * d.hw()];
    for (src, plane) in dy.chunks(oh * ow).zip(dx.chunks_mut(d.hw())) {
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                let g = src[oy * ow + ox];
                plane[y0 * d.w + x0] += g * wy0 * wx0;
                plane[y0 * d.w + x1] += g * wy0 * wx1;
                plane[y1 * d.w + x0] += g * wy1 * wx0;
                plane[y1 * d.w + x1] += g * wy1 * wx1;
            }
        }
    }
    dx
}

/// Per-channel sums over the batch and spatial axes.
fn channel_sums(d: Dims, f: impl Fn(usize) -> f64) -> Vec<f64> {
    let hw = d.hw();
    let mut s = vec![0.0; d.c];
    for i in 0..d.n {
        for (c, acc) in s.iter_mut().enumerate() {
            let base = (i * d.c + c) * hw;
            *acc += (base..base + hw).map(&f).sum::<f64>();
        }
    }
    s
}

pub(crate) struct BnOutput {
    pub y: Vec<f64>,
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var_unbiased: Vec<f64>,
}

pub(crate) fn bn_forward_train(x: &[f64], d: Dims, gamma: &[f64], beta: &[f64]) -> BnOutput {
    let hw = d.hw();
    let m = (d.n * hw) as f64;
    let mean: Vec<f64> = channel_sums(d, |i| x[i]).into_iter().map(|s| s / m).collect();
    let var_sum = {
        let mut s = vec![0.0; d.c];
        for i in 0..d.n {
            for (c, acc) in s.iter_mut().enumerate() {
                let base = (i * d.c + c) * hw;
                *acc += x[base..base + hw].iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>();
            }
        }
        s
    };
    let inv_std: Vec<f64> = var_sum.iter().map(|s| 1.0 / (s / m + BN_EPS).sqrt()).collect();
    let mut xhat = vec![0.0; x.len()];
    let mut y = vec![0.0; x.len()];
    for i in 0..d.n {
        for c in 0..d.c {
            let base = (i * d.c + c) * hw;
            for p in base..base + hw {
                xhat[p] = (x[p] - mean[c]) * inv_std[c];
                y[p] = gamma[c] * xhat[p] + beta[c];
            }
        }
    }
    let denom = (m - 1.0).max(1.0);
    BnOutput {
        y,
        xhat,
        inv_std,
        batch_mean: mean,
        batch_var_unbiased: var_sum.iter().map(|s| s / denom).collect(),
    }
}

pub(crate) fn bn_forward_eval(
    x: &[f64],
    d: Dims,
    gamma: &[f64],
    beta: &[f64],
    mean: &[f64],
    var: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hw = d.hw();
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = vec![0.0; x.len()];
    let mut y = vec![0.0; x.len()];
    for i in 0..d.n {
        for c in 0..d.c {
            let base = (i * d.c + c) * hw;
            for p in base..base + hw {
                xhat[p] = (x[p] - mean[c]) * inv_std[c];
                y[p] = gamma[c] * xhat[p] + beta[c];
            }
        }
    }
    (y, xhat, inv_std)
}

/// Batch-norm backward. With batch statistics the gradient flows through
/// the mean and variance as well.
#[allow(clippy::too_many_arguments)]
pub(crate) fn bn_backward(
    dy: &[f64],
    d: Dims,
    xhat: &[f64],
    inv_std: &[f64],
    gamma: &[f64],
    batch_stats: bool,
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Vec<f64> {
    let hw = d.hw();
    let m = (d.n * hw) as f64;
    let sum_dy = channel_sums(d, |i| dy[i]);
    let sum_dy_xhat = channel_sums(d, |i| dy[i] * xhat[i]);
    for c in 0..d.c {
        dgamma[c] += sum_dy_xhat[c];
        dbeta[c] += sum_dy[c];
    }
    let mut dx = vec![0.0; dy.len()];
    for i in 0..d.n {
        for c in 0..d.c {
            let base = (i * d.c + c) * hw;
            let g = gamma[c] * inv_std[c];
            for p in base..base + hw {
                dx[p] = if batch_stats {
                    g * (dy[p] - sum_dy[c] / m - xhat[p] * sum_dy_xhat[c] / m)
                } else {
                    g * dy[p]
                };
            }
        }
    }
    dx
}
