use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::checkpoint::save_checkpoint;
use super::layers::Mode;
use super::model::DecoderModel;
use crate::error::{Error, Result};
use crate::metrics::evaluate_split;
use crate::rng::SeededRng;
use crate::tensor::DenseTensor;

/// Mean absolute difference over all samples and pixels.
pub fn l1_loss(x: &DenseTensor<f64>, generated: &DenseTensor<f64>) -> Result<f64> {
    if x.shape() != generated.shape() {
        return Err(Error::shape(format!(
            "loss inputs differ: {:?} vs {:?}",
            x.shape(),
            generated.shape()
        )));
    }
    if x.is_empty() {
        return Err(Error::shape("loss of an empty batch"));
    }
    let s: f64 = x.data().iter().zip(generated.data()).map(|(a, b)| (a - b).abs()).sum();
    Ok(s / x.len() as f64)
}

/// Gradient of `l1_loss` with respect to `generated`.
pub fn l1_grad(x: &DenseTensor<f64>, generated: &DenseTensor<f64>) -> Result<DenseTensor<f64>> {
    if x.shape() != generated.shape() {
        return Err(Error::shape("loss inputs differ"));
    }
    let inv = 1.0 / x.len() as f64;
    let g = x
        .data()
        .iter()
        .zip(generated.data())
        .map(|(a, b)| {
            let d = b - a;
            if d > 0.0 {
                inv
            } else if d < 0.0 {
                -inv
            } else {
                0.0
            }
        })
        .collect();
    DenseTensor::new(x.shape().to_vec(), g)
}

/// `[0, 1]` pixels to the `[−1, 1]` range of the tanh output.
pub fn to_signed(images: &DenseTensor<f64>) -> DenseTensor<f64> {
    images.map(|v| 2.0 * v - 1.0)
}

/// `[−1, 1]` generator output back to `[0, 1]` pixels.
pub fn to_unit(images: &DenseTensor<f64>) -> DenseTensor<f64> {
    images.map(|v| ((v + 1.0) / 2.0).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_steps: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Steps between checkpoints; 0 keeps only the final one.
    pub checkpoint_every: usize,
    /// Steps between train/test evaluations; 0 evaluates only at the end.
    pub eval_every: usize,
    /// Images per split used for curve evaluations.
    pub eval_samples: usize,
    pub checkpoint_dir: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub images: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            max_steps: 20_000,
            seed: 0,
            adam: AdamConfig::default(),
            checkpoint_every: 0,
            eval_every: 500,
            eval_samples: 256,
            checkpoint_dir: None,
            embeddings: None,
            images: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_steps == 0 {
            return Err(Error::param("batch_size and max_steps must be at least 1"));
        }
        Ok(())
    }
}

/// Decoder inputs paired with their target images (`N × 1 × H × W` in
/// `[0, 1]`).
#[derive(Debug, Clone)]
pub struct Split {
    pub inputs: DenseTensor<f64>,
    pub images: DenseTensor<f64>,
}

impl Split {
    pub fn new(inputs: DenseTensor<f64>, images: DenseTensor<f64>) -> Result<Self> {
        let n = inputs.shape().first().copied().unwrap_or(0);
        let m = images.shape().first().copied().unwrap_or(0);
        if n != m {
            return Err(Error::shape(format!("{n} inputs but {m} images")));
        }
        images.dims4()?;
        Ok(Self { inputs, images })
    }

    pub fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        Self {
            inputs: self.inputs.select(&idx),
            images: self.images.select(&idx),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub loss: f64,
    pub train_psnr: Option<f64>,
    pub train_ssim: Option<f64>,
    pub test_psnr: Option<f64>,
    pub test_ssim: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub curve: Vec<CurvePoint>,
    pub optimizer: AdamState,
}

impl TrainOutcome {
    pub fn first_loss(&self) -> f64 {
        self.curve.first().map_or(f64::NAN, |p| p.loss)
    }

    pub fn last_loss(&self) -> f64 {
        self.curve.last().map_or(f64::NAN, |p| p.loss)
    }
}

/// Writes `step,loss,train_psnr,train_ssim,test_psnr,test_ssim`, leaving
/// unevaluated cells empty.
pub fn write_curve_csv(curve: &[CurvePoint], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["step", "loss", "train_psnr", "train_ssim", "test_psnr", "test_ssim"])?;
    let cell = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for p in curve {
        w.write_record([
            p.step.to_string(),
            p.loss.to_string(),
            cell(p.train_psnr),
            cell(p.train_ssim),
            cell(p.test_psnr),
            cell(p.test_ssim),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Eval-mode generation in `[0, 1]`, `chunk` samples at a time.
pub fn generate(model: &DecoderModel, inputs: &DenseTensor<f64>, chunk: usize) -> Result<DenseTensor<f64>> {
    let n = inputs.shape().first().copied().unwrap_or(0);
    let chunk = chunk.max(1);
    let mut parts = Vec::new();
    for start in (0..n).step_by(chunk) {
        let idx: Vec<usize> = (start..(start + chunk).min(n)).collect();
        parts.push(to_unit(&model.predict(&inputs.select(&idx))?));
    }
    if parts.is_empty() {
        let mut shape = vec![0];
        shape.extend_from_slice(model.output_shape());
        return Ok(DenseTensor::zeros(shape));
    }
    DenseTensor::stack(&parts)
}

fn evaluate(model: &DecoderModel, split: &Split, samples: usize) -> Result<(f64, f64)> {
    let head = split.head(samples);
    let gen = generate(model, &head.inputs, 64)?;
    let r = evaluate_split(&head.images, &gen)?;
    Ok((r.mean_psnr, r.mean_ssim))
}

/// Mini-batch Adam on the L1 loss. Batches are drawn from a seeded
/// per-epoch permutation with the remainder dropped; the curve records the
/// training-batch loss of every step and eval-mode metrics periodically.
pub fn train(model: &mut DecoderModel, data: &Split, test: Option<&Split>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    let n = data.len();
    let batch = cfg.batch_size.min(n);
    let per_epoch = n / batch;
    let mut rng = SeededRng::new(cfg.seed);
    let mut adam = AdamState::new(cfg.adam);
    let targets = to_signed(&data.images);
    let mut order = rng.permutation(n);
    let mut cursor = 0;
    let mut curve = Vec::with_capacity(cfg.max_steps);
    for step in 0..cfg.max_steps {
        if cursor == per_epoch {
            order = rng.permutation(n);
            cursor = 0;
        }
        let idx = &order[cursor * batch..(cursor + 1) * batch];
        cursor += 1;
        let x = data.inputs.select(idx);
        let y = targets.select(idx);
        let out = model.forward(&x, Mode::Train)?;
        let loss = l1_loss(&y, &out)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite { step, loss });
        }
        model.backward(&l1_grad(&y, &out)?)?;
        let (mut params, grads) = model.params_and_grads();
        adam_step(&mut params, &grads, &mut adam)?;

        let last = step + 1 == cfg.max_steps;
        let mut point = CurvePoint {
            step,
            loss,
            train_psnr: None,
            train_ssim: None,
            test_psnr: None,
            test_ssim: None,
        };
        if last || (cfg.eval_every > 0 && step % cfg.eval_every == 0) {
            let (p, s) = evaluate(model, data, cfg.eval_samples)?;
            point.train_psnr = Some(p);
            point.train_ssim = Some(s);
            if let Some(t) = test.filter(|t| !t.is_empty()) {
                let (p, s) = evaluate(model, t, cfg.eval_samples)?;
                point.test_psnr = Some(p);
                point.test_ssim = Some(s);
            }
            match point.test_psnr {
                Some(tp) => log::info!("step {step}: loss {loss:.5}, train psnr {p:.3} dB, test psnr {tp:.3} dB"),
                None => log::info!("step {step}: loss {loss:.5}, train psnr {p:.3} dB"),
            }
        }
        curve.push(point);
        if let Some(dir) = &cfg.checkpoint_dir {
            if last || (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) {
                save_checkpoint(model, dir.join(format!("step_{:06}", step + 1)))?;
            }
        }
    }
    Ok(TrainOutcome { curve, optimizer: adam })
}
