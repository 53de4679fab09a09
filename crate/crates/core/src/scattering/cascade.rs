//! The scattering cascade: fractional wavelet-modulus layers followed by
//! fractional low-pass averaging and `2^J` decimation.

use num_complex::Complex64;
use rayon::prelude::*;

use super::fractional::{FracOrderPair, FractionalConv};
use super::paths::PathTable;
use crate::error::{Error, Result};
use crate::fft::Fft2d;
use crate::filters::FilterBank;
use crate::tensor::DenseTensor;

/// Scattering coefficients for a batch: an `N × P × H/2^J × W/2^J` tensor
/// whose channel `c` holds path `path_table.paths()[c]`.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub tensor: DenseTensor<f64>,
    pub path_table: PathTable,
    pub alpha: FracOrderPair,
}

/// Reusable state for scattering many images of one geometry.
#[derive(Debug, Clone)]
pub struct Scatterer<'a> {
    bank: &'a FilterBank,
    table: &'a PathTable,
    conv: FractionalConv,
    small: Fft2d,
    stride: usize,
}

impl<'a> Scatterer<'a> {
    pub fn new(bank: &'a FilterBank, alpha: FracOrderPair, table: &'a PathTable) -> Result<Self> {
        if table.octaves != bank.params.octaves || table.angles != bank.params.angles {
            return Err(Error::shape(format!(
                "path table (J={}, L={}) does not match filter bank (J={}, L={})",
                table.octaves, table.angles, bank.params.octaves, bank.params.angles
            )));
        }
        let stride = bank.params.stride();
        if !bank.height.is_multiple_of(stride) || !bank.width.is_multiple_of(stride) {
            return Err(Error::shape(format!(
                "image {}x{} is not divisible by 2^J = {stride}",
                bank.height, bank.width
            )));
        }
        Ok(Self {
            bank,
            table,
            conv: FractionalConv::new(alpha, bank.height, bank.width)?,
            small: Fft2d::new(bank.height / stride, bank.width / stride),
            stride,
        })
    }

    pub fn output_side(&self) -> (usize, usize) {
        (self.bank.height / self.stride, self.bank.width / self.stride)
    }

    pub fn channel_len(&self) -> usize {
        let (h, w) = self.output_side();
        h * w
    }

    /// Values per image: `P · (H/2^J) · (W/2^J)`.
    pub fn output_len(&self) -> usize {
        self.table.len() * self.channel_len()
    }

    /// Low-passes a signal given by the spectrum of `C · u` and returns the
    /// modulus at every `2^J`-th sample.
    ///
    /// Decimating `IFFT(Y)` by `s` equals `IFFT_small(Σ_q Y[k + q·M]) / s` per
    /// axis, where `M` is the decimated length; the outer conjugate chirp has
    /// unit modulus and drops out of the result.
    fn average(&self, spectrum: &[Complex64], out: &mut [f64]) {
        let (w, phi) = (self.bank.width, self.bank.phi());
        let (sh, sw) = self.output_side();
        let mut folded = vec![Complex64::default(); sh * sw];
        for (i, (y, f)) in spectrum.iter().zip(phi).enumerate() {
            let (r, c) = (i / w, i % w);
            folded[(r % sh) * sw + c % sw] += y * f;
        }
        self.small.inverse(&mut folded);
        let scale = 1.0 / (self.stride * self.stride) as f64;
        for (o, v) in out.iter_mut().zip(&folded) {
            *o = v.norm() * scale;
        }
    }

    /// Scatters one `H × W` image into `out`, laid out channel-major.
    pub fn scatter_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.channel_len();
        let l = self.table.angles;
        let octaves = self.table.octaves;
        debug_assert_eq!(out.len(), self.output_len());

        let x_spec = self.conv.spectrum_real(x);
        self.average(&x_spec, &mut out[..n]);

        // First-layer spectra of C·U[λ1]x, kept for the second layer.
        let mut first = Vec::with_capacity(octaves * l);
        for j1 in 0..octaves {
            for k1 in 0..l {
                let u1 = self.conv.modulus_from_spectrum(&x_spec, self.bank.psi(j1, k1));
                let spec = self.conv.spectrum_real(&u1);
                let ch = self.table.order1_index(j1, k1);
                self.average(&spec, &mut out[ch * n..(ch + 1) * n]);
                first.push(spec);
            }
        }

        let mut ch = self.table.order2_start();
        for j1 in 0..octaves {
            for k1 in 0..l {
                let parent = &first[j1 * l + k1];
                for j2 in j1 + 1..octaves {
                    for k2 in 0..l {
                        let u2 = self.conv.modulus_from_spectrum(parent, self.bank.psi(j2, k2));
                        let spec = self.conv.spectrum_real(&u2);
                        self.average(&spec, &mut out[ch * n..(ch + 1) * n]);
                        ch += 1;
                    }
                }
            }
        }
        debug_assert_eq!(ch, self.table.len());
    }

    pub fn scatter_one(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.output_len()];
        self.scatter_into(x, &mut out);
        out
    }
}

fn image_geometry(shape: &[usize]) -> Option<(usize, usize)> {
    match shape {
        [h, w] | [1, h, w] | [1, 1, h, w] => Some((*h, *w)),
        _ => None,
    }
}

/// Scatters a single real image (shape `H × W`) into a `1 × P × H/2^J × W/2^J`
/// embedding.
pub fn scatter(
    x: &DenseTensor<f64>,
    bank: &FilterBank,
    alpha: FracOrderPair,
    table: &PathTable,
) -> Result<Embedding> {
    let (h, w) = image_geometry(x.shape())
        .ok_or_else(|| Error::shape(format!("expected one image, got shape {:?}", x.shape())))?;
    if (h, w) != (bank.height, bank.width) {
        return Err(Error::shape(format!(
            "image {h}x{w} does not match filter bank {}x{}",
            bank.height, bank.width
        )));
    }
    let s = Scatterer::new(bank, alpha, table)?;
    let (oh, ow) = s.output_side();
    let tensor = DenseTensor::new(vec![1, table.len(), oh, ow], s.scatter_one(x.data()))?;
    Ok(Embedding {
        tensor,
        path_table: table.clone(),
        alpha,
    })
}

/// Scatters an `N × 1 × H × W` batch on `workers` threads. Output order and
/// values do not depend on the worker count.
pub fn scatter_batch(
    images: &DenseTensor<f64>,
    bank: &FilterBank,
    alpha: FracOrderPair,
    table: &PathTable,
    workers: usize,
) -> Result<Embedding> {
    let (n, c, h, w) = images.dims4()?;
    if c != 1 || (h, w) != (bank.height, bank.width) {
        return Err(Error::shape(format!(
            "batch {:?} does not match filter bank 1x{}x{}",
            images.shape(),
            bank.height,
            bank.width
        )));
    }
    let s = Scatterer::new(bank, alpha, table)?;
    let (oh, ow) = s.output_side();
    let per = s.output_len();
    let mut data = vec![0.0; n * per];
    if n > 0 {
        if workers <= 1 {
            for (i, out) in data.chunks_mut(per).enumerate() {
                s.scatter_into(images.item(i), out);
            }
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::param(format!("thread pool: {e}")))?;
            pool.install(|| {
                data.par_chunks_mut(per)
                    .enumerate()
                    .for_each(|(i, out)| s.scatter_into(images.item(i), out));
            });
        }
    }
    Ok(Embedding {
        tensor: DenseTensor::new(vec![n, table.len(), oh, ow], data)?,
        path_table: table.clone(),
        alpha,
    })
}
