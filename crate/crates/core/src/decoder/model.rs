use serde::{Deserialize, Serialize};

use super::layers::{self, Cache, Dims, LayerSpec, Mode, BN_MOMENTUM};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::DenseTensor;

/// Batch-norm running statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// A feed-forward decoder with cached activations for backpropagation.
#[derive(Debug, Clone)]
pub struct DecoderModel {
    layers: Vec<LayerSpec>,
    /// Per-sample input shape, `[features]` or `[C, H, W]`.
    input_shape: Vec<usize>,
    /// Per-sample input shape of every layer, plus the final output shape.
    shapes: Vec<Vec<usize>>,
    params: Vec<Vec<Vec<f64>>>,
    grads: Vec<Vec<Vec<f64>>>,
    running: Vec<Option<RunningStats>>,
    pub momentum: f64,
    caches: Vec<Cache>,
    cached_batch: Option<(usize, Mode)>,
    mode: Mode,
    frozen_relu: Option<Vec<bool>>,
}

impl DecoderModel {
    /// Builds a model with freshly initialised parameters.
    pub fn new(layers: Vec<LayerSpec>, input_shape: Vec<usize>, rng: &mut SeededRng) -> Result<Self> {
        let params = layers.iter().map(|l| l.init_params(rng)).collect();
        Self::with_params(layers, input_shape, params)
    }

    /// Builds a model from explicit parameters (e.g. a checkpoint).
    pub fn with_params(
        layers: Vec<LayerSpec>,
        input_shape: Vec<usize>,
        params: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if layers.last() != Some(&LayerSpec::Tanh) {
            return Err(Error::param("the last decoder layer must be tanh"));
        }
        if params.len() != layers.len() {
            return Err(Error::shape("one parameter list per layer is required"));
        }
        let mut shapes = vec![input_shape.clone()];
        for l in &layers {
            let next = l.output_shape(shapes.last().expect("non-empty"))?;
            shapes.push(next);
        }
        match shapes.last().map(|s| s.as_slice()) {
            Some([1, _, _]) => {}
            other => {
                return Err(Error::shape(format!(
                    "decoder must emit one image channel, got {other:?}"
                )))
            }
        }
        for (l, p) in layers.iter().zip(&params) {
            let want = l.param_shapes();
            let ok = want.len() == p.len()
                && want.iter().zip(p).all(|(s, v)| s.iter().product::<usize>() == v.len());
            if !ok {
                return Err(Error::shape(format!("parameters do not fit layer {}", l.name())));
            }
        }
        let grads = params
            .iter()
            .map(|ps: &Vec<Vec<f64>>| ps.iter().map(|p| vec![0.0; p.len()]).collect())
            .collect();
        let running = layers
            .iter()
            .map(|l| match l {
                LayerSpec::BatchNorm { channels } => Some(RunningStats {
                    mean: vec![0.0; *channels],
                    var: vec![1.0; *channels],
                }),
                _ => None,
            })
            .collect();
        Ok(Self {
            caches: vec![Cache::Nothing; layers.len()],
            layers,
            input_shape,
            shapes,
            params,
            grads,
            running,
            momentum: BN_MOMENTUM,
            cached_batch: None,
            mode: Mode::Train,
            frozen_relu: None,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().expect("non-empty")
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn params(&self) -> &[Vec<Vec<f64>>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Vec<Vec<f64>>] {
        &mut self.params
    }

    pub fn grads(&self) -> &[Vec<Vec<f64>>] {
        &self.grads
    }

    pub fn running_stats(&self) -> &[Option<RunningStats>] {
        &self.running
    }

    pub fn running_stats_mut(&mut self) -> &mut [Option<RunningStats>] {
        &mut self.running
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().flatten().map(Vec::len).sum()
    }

    /// Mutable parameter slices alongside their gradients, in a fixed order.
    pub fn params_and_grads(&mut self) -> (Vec<&mut [f64]>, Vec<&[f64]>) {
        let p = self.params.iter_mut().flatten().map(|v| v.as_mut_slice()).collect();
        let g = self.grads.iter().flatten().map(|v| v.as_slice()).collect();
        (p, g)
    }

    fn batch_of(&self, x: &DenseTensor<f64>) -> Result<usize> {
        let n = *x.shape().first().ok_or_else(|| Error::shape("empty input shape"))?;
        let per: usize = self.input_shape.iter().product();
        let matches = x.shape()[1..] == self.input_shape[..]
            || (self.input_shape.len() == 1 && x.shape()[1..].iter().product::<usize>() == per);
        if !matches {
            return Err(Error::shape(format!(
                "input {:?} does not match per-sample shape {:?}",
                x.shape(),
                self.input_shape
            )));
        }
        Ok(n)
    }

    /// Runs the network. Train mode uses batch statistics, updates the
    /// running statistics and caches activations for `backward`.
    pub fn forward(&mut self, x: &DenseTensor<f64>, mode: Mode) -> Result<DenseTensor<f64>> {
        let n = self.batch_of(x)?;
        if mode == Mode::Train && n < 2 && self.layers.iter().any(|l| matches!(l, LayerSpec::BatchNorm { .. })) {
            return Err(Error::shape("batch-norm training needs a batch of at least 2"));
        }
        self.mode = mode;
        let mut act = x.data().to_vec();
        let mut mask_at = 0;
        for i in 0..self.layers.len() {
            let d = Dims::from_sample(n, &self.shapes[i]);
            if let (LayerSpec::Relu, Some(mask)) = (&self.layers[i], &self.frozen_relu) {
                let mask = mask
                    .get(mask_at..mask_at + act.len())
                    .ok_or_else(|| Error::shape("frozen relu pattern is too short"))?;
                mask_at += act.len();
                let y: Vec<f64> = act.iter().zip(mask).map(|(v, &on)| if on { *v } else { 0.0 }).collect();
                // Record the pattern itself so backward uses the same mask.
                let marks = mask.iter().map(|&on| if on { 1.0 } else { 0.0 }).collect();
                self.caches[i] = Cache::Output(marks);
                act = y;
                continue;
            }
            let stats = match (&mut self.running[i], mode) {
                (Some(s), Mode::Train) => Stats::Batch(s, self.momentum),
                (Some(s), Mode::Eval) => Stats::Running(s),
                (None, _) => Stats::None,
            };
            let (next, cache) = layer_forward(&self.layers[i], &self.params[i], stats, act, d);
            self.caches[i] = cache;
            act = next;
        }
        self.cached_batch = Some((n, mode));
        let mut shape = vec![n];
        shape.extend_from_slice(self.output_shape());
        DenseTensor::new(shape, act)
    }

    /// Eval-mode forward that leaves the model untouched.
    pub fn predict(&self, x: &DenseTensor<f64>) -> Result<DenseTensor<f64>> {
        let n = self.batch_of(x)?;
        let mut act = x.data().to_vec();
        for i in 0..self.layers.len() {
            let d = Dims::from_sample(n, &self.shapes[i]);
            let stats = self.running[i].as_ref().map_or(Stats::None, Stats::Running);
            act = layer_forward(&self.layers[i], &self.params[i], stats, act, d).0;
        }
        let mut shape = vec![n];
        shape.extend_from_slice(self.output_shape());
        DenseTensor::new(shape, act)
    }

    /// On/off state of every relu unit in the last forward pass. Finite
    /// difference checks use it to detect steps that cross a kink.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.layers
            .iter()
            .zip(&self.caches)
            .filter(|(l, _)| matches!(l, LayerSpec::Relu))
            .flat_map(|(_, c)| match c {
                Cache::Output(y) => y.iter().map(|&v| v > 0.0).collect::<Vec<_>>(),
                _ => Vec::new(),
            })
            .collect()
    }

    /// Makes every relu unit follow a fixed on/off pattern (as returned by
    /// `relu_pattern`) instead of the sign of its input. Finite-difference
    /// checks use this to differentiate the network on one linear piece.
    pub fn freeze_relu(&mut self, pattern: Option<Vec<bool>>) {
        self.frozen_relu = pattern;
    }

    /// Backpropagates `upstream` (the loss gradient with respect to the last
    /// output) through the cached forward pass. Parameter gradients are
    /// overwritten; the input gradient is returned.
    pub fn backward(&mut self, upstream: &DenseTensor<f64>) -> Result<DenseTensor<f64>> {
        let (n, mode) = self
            .cached_batch
            .ok_or_else(|| Error::param("backward called without a cached forward pass"))?;
        let mut want = vec![n];
        want.extend_from_slice(self.output_shape());
        if upstream.shape() != want.as_slice() {
            return Err(Error::shape(format!(
                "upstream gradient {:?} does not match output {want:?}",
                upstream.shape()
            )));
        }
        for g in self.grads.iter_mut().flatten() {
            g.fill(0.0);
        }
        let mut dy = upstream.data().to_vec();
        for i in (0..self.layers.len()).rev() {
            let d = Dims::from_sample(n, &self.shapes[i]);
            dy = self.layer_backward(i, dy, d, mode);
        }
        let mut shape = vec![n];
        shape.extend_from_slice(&self.input_shape);
        DenseTensor::new(shape, dy)
    }

    fn layer_backward(&mut self, i: usize, dy: Vec<f64>, d: Dims, mode: Mode) -> Vec<f64> {
        let p = &self.params[i];
        let g = &mut self.grads[i];
        let cache = &self.caches[i];
        match (&self.layers[i], cache) {
            (LayerSpec::FullyConnected { inputs, channels, side }, Cache::Input(x)) => {
                let (dw, rest) = g.split_at_mut(1);
                layers::fc_backward(x, d.n, *inputs, channels * side * side, &p[0], &dy, &mut dw[0], &mut rest[0])
            }
            (LayerSpec::BilinearUpsampleX2, _) => layers::upsample_backward(&dy, d),
            (LayerSpec::BatchNorm { .. }, Cache::Norm { xhat, inv_std }) => {
                let (dgamma, dbeta) = g.split_at_mut(1);
                layers::bn_backward(
                    &dy,
                    d,
                    xhat,
                    inv_std,
                    &p[0],
                    mode == Mode::Train,
                    &mut dgamma[0],
                    &mut dbeta[0],
                )
            }
            (LayerSpec::Relu, Cache::Output(y)) => {
                dy.iter().zip(y).map(|(g, y)| if *y > 0.0 { *g } else { 0.0 }).collect()
            }
            (LayerSpec::Tanh, Cache::Output(y)) => dy.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect(),
            (conv, Cache::Input(x)) => {
                let (_, co, k) = conv.conv_dims().expect("convolution");
                let (dw, rest) = g.split_at_mut(1);
                layers::conv_backward(x, d, co, k, &p[0], &dy, &mut dw[0], &mut rest[0])
            }
            (l, _) => unreachable!("missing cache for {}", l.name()),
        }
    }
}

fn block_count(from: usize, to: usize) -> Result<usize> {
    if from == 0 || to < from || !to.is_multiple_of(from) || !(to / from).is_power_of_two() {
        return Err(Error::param(format!(
            "target side {to} is not a power-of-two multiple of input side {from}"
        )));
    }
    Ok((to / from).trailing_zeros() as usize)
}

/// Channel width of upsampling block `b`.
pub fn block_width(base_width: usize, b: usize) -> usize {
    (base_width >> b.min(usize::BITS as usize - 1)).max(16).min(base_width.max(1))
}

/// Layer list of the tensor-input generator: a 1×1 head, `B` blocks of
/// `[up, conv3, bn, relu, conv3, bn, relu]`, then `conv3 → 1` and tanh.
pub fn g2_layers(in_channels: usize, in_hw: usize, target_hw: usize, base_width: usize) -> Result<Vec<LayerSpec>> {
    let blocks = block_count(in_hw, target_hw)?;
    if in_channels == 0 || base_width == 0 {
        return Err(Error::param("channel counts must be positive"));
    }
    let mut l = vec![LayerSpec::FullyConv {
        in_channels,
        out_channels: base_width,
    }];
    let mut c = base_width;
    for b in 0..blocks {
        let w = block_width(base_width, b);
        l.extend([
            LayerSpec::BilinearUpsampleX2,
            LayerSpec::Conv3x3 { in_channels: c, out_channels: w },
            LayerSpec::BatchNorm { channels: w },
            LayerSpec::Relu,
            LayerSpec::Conv3x3 { in_channels: w, out_channels: w },
            LayerSpec::BatchNorm { channels: w },
            LayerSpec::Relu,
        ]);
        c = w;
    }
    l.push(LayerSpec::Conv3x3 { in_channels: c, out_channels: 1 });
    l.push(LayerSpec::Tanh);
    Ok(l)
}

/// Layer list of the vector-input generator: FC to `base × 4 × 4` with
/// batch-norm and relu, blocks of `[up, conv7, bn, relu]`, then
/// `conv7 → 1` and tanh.
pub fn g1_layers(z_dim: usize, target_hw: usize, base_width: usize) -> Result<Vec<LayerSpec>> {
    let blocks = block_count(4, target_hw)?;
    if z_dim == 0 || base_width == 0 {
        return Err(Error::param("z_dim and base width must be positive"));
    }
    let mut l = vec![
        LayerSpec::FullyConnected {
            inputs: z_dim,
            channels: base_width,
            side: 4,
        },
        LayerSpec::BatchNorm { channels: base_width },
        LayerSpec::Relu,
    ];
    let mut c = base_width;
    for b in 0..blocks {
        let w = block_width(base_width, b);
        l.extend([
            LayerSpec::BilinearUpsampleX2,
            LayerSpec::Conv7x7 { in_channels: c, out_channels: w },
            LayerSpec::BatchNorm { channels: w },
            LayerSpec::Relu,
        ]);
        c = w;
    }
    l.push(LayerSpec::Conv7x7 { in_channels: c, out_channels: 1 });
    l.push(LayerSpec::Tanh);
    Ok(l)
}

pub fn g2_build(
    in_channels: usize,
    in_hw: usize,
    target_hw: usize,
    base_width: usize,
    rng: &mut SeededRng,
) -> Result<DecoderModel> {
    let layers = g2_layers(in_channels, in_hw, target_hw, base_width)?;
    DecoderModel::new(layers, vec![in_channels, in_hw, in_hw], rng)
}

pub fn g1_build(z_dim: usize, target_hw: usize, base_width: usize, rng: &mut SeededRng) -> Result<DecoderModel> {
    let layers = g1_layers(z_dim, target_hw, base_width)?;
    DecoderModel::new(layers, vec![z_dim], rng)
}

enum Stats<'a> {
    Batch(&'a mut RunningStats, f64),
    Running(&'a RunningStats),
    None,
}

fn layer_forward(spec: &LayerSpec, p: &[Vec<f64>], stats: Stats<'_>, x: Vec<f64>, d: Dims) -> (Vec<f64>, Cache) {
    match spec {
        LayerSpec::FullyConnected { inputs, channels, side } => {
            let y = layers::fc_forward(&x, d.n, *inputs, channels * side * side, &p[0], &p[1]);
            (y, Cache::Input(x))
        }
        LayerSpec::BilinearUpsampleX2 => (layers::upsample_forward(&x, d), Cache::Nothing),
        LayerSpec::BatchNorm { .. } => {
            let (gamma, beta) = (&p[0], &p[1]);
            match stats {
                Stats::Batch(running, m) => {
                    let out = layers::bn_forward_train(&x, d, gamma, beta);
                    for c in 0..d.c {
                        running.mean[c] = (1.0 - m) * running.mean[c] + m * out.batch_mean[c];
                        running.var[c] = (1.0 - m) * running.var[c] + m * out.batch_var_unbiased[c];
                    }
                    (out.y, Cache::Norm { xhat: out.xhat, inv_std: out.inv_std })
                }
                Stats::Running(running) => {
                    let (y, xhat, inv_std) =
                        layers::bn_forward_eval(&x, d, gamma, beta, &running.mean, &running.var);
                    (y, Cache::Norm { xhat, inv_std })
                }
                Stats::None => unreachable!("batch-norm without statistics"),
            }
        }
        LayerSpec::Relu => {
            let y: Vec<f64> = x.into_iter().map(|v| v.max(0.0)).collect();
            (y.clone(), Cache::Output(y))
        }
        LayerSpec::Tanh => {
            let y: Vec<f64> = x.into_iter().map(f64::tanh).collect();
            (y.clone(), Cache::Output(y))
        }
        conv => {
            let (_, co, k) = conv.conv_dims().expect("convolution");
            let y = layers::conv_forward(&x, d, co, k, &p[0], &p[1]);
            (y, Cache::Input(x))
        }
    }
}
