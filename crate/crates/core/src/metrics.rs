//! Image-quality metrics and average image fusion.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;

fn same_shape(a: &DenseTensor<f64>, b: &DenseTensor<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "shape mismatch: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// `10·log10(peak² / MSE)` over two equal-length pixel buffers.
pub fn psnr_slice(x: &[f64], y: &[f64], peak: f64) -> f64 {
    assert_eq!(x.len(), y.len());
    let mse = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64;
    if mse == 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB)
    }
}

pub fn psnr(x: &DenseTensor<f64>, y: &DenseTensor<f64>, peak: f64) -> Result<f64> {
    same_shape(x, y)?;
    Ok(psnr_slice(x.data(), y.data(), peak))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub peak: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            peak: 1.0,
        }
    }
}

impl SsimParams {
    /// Normalised 1-D Gaussian taps; the 2-D window is their outer product.
    pub fn taps(&self) -> Vec<f64> {
        let c = (self.window as f64 - 1.0) / 2.0;
        let raw: Vec<f64> = (0..self.window)
            .map(|i| (-(i as f64 - c).powi(2) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }
}

/// Valid-mode separable filtering of an `h × w` image.
fn filter_valid(img: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = taps.iter().enumerate().map(|(t, g)| g * img[r * w + c + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = taps.iter().enumerate().map(|(t, g)| g * rows[(r + t) * ow + c]).sum();
        }
    }
    out
}

/// Mean SSIM of two `h × w` images over all fully-contained windows.
pub fn ssim_slice(x: &[f64], y: &[f64], h: usize, w: usize, p: &SsimParams) -> Result<f64> {
    if h < p.window || w < p.window {
        return Err(Error::shape(format!(
            "image {h}x{w} is smaller than the {0}x{0} SSIM window",
            p.window
        )));
    }
    let taps = p.taps();
    let prod = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(u, v)| u * v).collect() };
    let mx = filter_valid(x, h, w, &taps);
    let my = filter_valid(y, h, w, &taps);
    let sxx = filter_valid(&prod(x, x), h, w, &taps);
    let syy = filter_valid(&prod(y, y), h, w, &taps);
    let sxy = filter_valid(&prod(x, y), h, w, &taps);
    let c1 = (p.k1 * p.peak).powi(2);
    let c2 = (p.k2 * p.peak).powi(2);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = sxx[i] - ux * ux;
        let vy = syy[i] - uy * uy;
        let cxy = sxy[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    Ok(total / mx.len() as f64)
}

fn plane(t: &DenseTensor<f64>) -> Result<(usize, usize)> {
    match t.shape() {
        [h, w] | [1, h, w] | [1, 1, h, w] => Ok((*h, *w)),
        s => Err(Error::shape(format!("expected a single-channel image, got {s:?}"))),
    }
}

pub fn ssim(x: &DenseTensor<f64>, y: &DenseTensor<f64>, p: &SsimParams) -> Result<f64> {
    same_shape(x, y)?;
    let (h, w) = plane(x)?;
    ssim_slice(x.data(), y.data(), h, w, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub fusion_weight: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { fusion_weight: 0.5 }
    }
}

impl FusionConfig {
    pub fn new(fusion_weight: f64) -> Result<Self> {
        let cfg = Self { fusion_weight };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fusion_weight) {
            return Err(Error::OutOfRange(format!(
                "fusion weight {} is outside [0, 1]",
                self.fusion_weight
            )));
        }
        Ok(())
    }
}

/// Pixelwise `λ·x1 + (1−λ)·x2`.
pub fn fuse(x1: &DenseTensor<f64>, x2: &DenseTensor<f64>, cfg: &FusionConfig) -> Result<DenseTensor<f64>> {
    same_shape(x1, x2)?;
    cfg.validate()?;
    let l = cfg.fusion_weight;
    let data = x1
        .data()
        .iter()
        .zip(x2.data())
        .map(|(a, b)| if l == 1.0 { *a } else if l == 0.0 { *b } else { l * a + (1.0 - l) * b })
        .collect();
    DenseTensor::new(x1.shape().to_vec(), data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub psnr: Vec<f64>,
    pub ssim: Vec<f64>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

impl EvalReport {
    pub fn len(&self) -> usize {
        self.psnr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psnr.is_empty()
    }

    /// Columns `index,psnr_db,ssim`, with a final `mean` row.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(["index", "psnr_db", "ssim"])?;
        for (i, (p, s)) in self.psnr.iter().zip(&self.ssim).enumerate() {
            w.write_record([i.to_string(), p.to_string(), s.to_string()])?;
        }
        w.write_record(["mean".to_string(), self.mean_psnr.to_string(), self.mean_ssim.to_string()])?;
        w.flush()?;
        Ok(())
    }
}

/// Per-image PSNR and SSIM of aligned `N × 1 × H × W` batches in `[0, 1]`.
pub fn evaluate_split(images: &DenseTensor<f64>, generated: &DenseTensor<f64>) -> Result<EvalReport> {
    let (n, c, h, w) = images.dims4()?;
    let (gn, ..) = generated.dims4()?;
    if gn != n {
        return Err(Error::shape(format!("{n} references but {gn} generated images")));
    }
    same_shape(images, generated)?;
    if c != 1 {
        return Err(Error::shape(format!("expected one channel, got {c}")));
    }
    let p = SsimParams::default();
    let mut psnr = Vec::with_capacity(n);
    let mut ssim = Vec::with_capacity(n);
    for i in 0..n {
        psnr.push(psnr_slice(images.item(i), generated.item(i), 1.0));
        ssim.push(ssim_slice(images.item(i), generated.item(i), h, w, &p)?);
    }
    let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    Ok(EvalReport {
        mean_psnr: mean(&psnr),
        mean_ssim: mean(&ssim),
        psnr,
        ssim,
    })
}
