//! Fractional convolution: circular convolution conjugated by quadratic chirps.
//!
//! For orders `(α1, α2)` with `θ_i = α_i·π/2`, the chirp on an `H × W` grid is
//!
//! ```text
//! C(t1, t2) = exp(i/2 · (t1²·cot θ1 + t2²·cot θ2)),   t = (index − size/2) / size
//! ```
//!
//! and `x Θ ψ = conj(C) · ((C · x) ⊛ ψ)`. At `α = (1, 1)` the chirp is
//! identically one and this is plain circular convolution.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::Fft2d;
use crate::tensor::DenseTensor;

/// Fractional orders for the row and column axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FracOrderPair {
    pub alpha1: f64,
    pub alpha2: f64,
}

impl FracOrderPair {
    pub const ONE: Self = Self {
        alpha1: 1.0,
        alpha2: 1.0,
    };

    pub fn new(alpha1: f64, alpha2: f64) -> Result<Self> {
        let pair = Self { alpha1, alpha2 };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        for a in [self.alpha1, self.alpha2] {
            if !(a > 0.0 && a < 2.0) || a.rem_euclid(2.0) <= 1e-6 {
                return Err(Error::param(format!(
                    "fractional order {a} must lie strictly inside (0, 2)"
                )));
            }
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.alpha1 == 1.0 && self.alpha2 == 1.0
    }

    /// `cot(α·π/2)` per axis, exactly zero at `α = 1`.
    pub fn cotangents(&self) -> (f64, f64) {
        (cot_of_order(self.alpha1), cot_of_order(self.alpha2))
    }
}

impl std::fmt::Display for FracOrderPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({:.2},{:.2})", self.alpha1, self.alpha2)
    }
}

fn cot_of_order(alpha: f64) -> f64 {
    if alpha == 1.0 {
        0.0
    } else {
        1.0 / (alpha * FRAC_PI_2).tan()
    }
}

/// Centered, normalized coordinate of `index` on an axis of length `n`.
pub fn chirp_coordinate(index: usize, n: usize) -> f64 {
    (index as f64 - n as f64 / 2.0) / n as f64
}

/// The chirp `C` as a row-major `rows × cols` grid.
pub fn chirp_values(alpha: &FracOrderPair, rows: usize, cols: usize) -> Result<Vec<Complex64>> {
    alpha.validate()?;
    let (cot1, cot2) = alpha.cotangents();
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let tr = chirp_coordinate(r, rows);
        for c in 0..cols {
            let tc = chirp_coordinate(c, cols);
            let phase = 0.5 * (tr * tr * cot1 + tc * tc * cot2);
            out.push(if phase == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::from_polar(1.0, phase)
            });
        }
    }
    Ok(out)
}

/// The chirp as a `rows × cols` complex tensor.
pub fn chirp(alpha: &FracOrderPair, rows: usize, cols: usize) -> Result<DenseTensor<Complex64>> {
    DenseTensor::new(vec![rows, cols], chirp_values(alpha, rows, cols)?)
}

/// Fractional convolution with precomputed FFT plan and chirp for one
/// geometry and order pair.
#[derive(Debug, Clone)]
pub struct FractionalConv {
    fft: Fft2d,
    alpha: FracOrderPair,
    /// `None` when the chirp is identically one.
    chirp: Option<Vec<Complex64>>,
}

impl FractionalConv {
    pub fn new(alpha: FracOrderPair, height: usize, width: usize) -> Result<Self> {
        let chirp = if alpha.is_identity() {
            alpha.validate()?;
            None
        } else {
            Some(chirp_values(&alpha, height, width)?)
        };
        Ok(Self {
            fft: Fft2d::new(height, width),
            alpha,
            chirp,
        })
    }

    pub fn alpha(&self) -> FracOrderPair {
        self.alpha
    }

    pub fn fft(&self) -> &Fft2d {
        &self.fft
    }

    pub fn len(&self) -> usize {
        self.fft.height() * self.fft.width()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Spectrum of `C · x` for a real input.
    pub fn spectrum_real(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = match &self.chirp {
            Some(c) => x.iter().zip(c).map(|(&v, &c)| c * v).collect(),
            None => x.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        };
        self.fft.forward(&mut buf);
        buf
    }

    /// Spectrum of `C · x` for a complex input.
    pub fn spectrum(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = match &self.chirp {
            Some(c) => x.iter().zip(c).map(|(&v, &c)| c * v).collect(),
            None => x.to_vec(),
        };
        self.fft.forward(&mut buf);
        buf
    }

    /// `IFFT(spectrum · filter)` without the outer conjugate chirp. Its
    /// modulus equals the modulus of the full fractional convolution.
    pub fn filtered(&self, spectrum: &[Complex64], filter: &[Complex64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = spectrum.iter().zip(filter).map(|(a, b)| a * b).collect();
        self.fft.inverse(&mut buf);
        buf
    }

    /// `conj(C) · IFFT(FFT(C · x) · filter)`.
    pub fn apply(&self, x: &[Complex64], filter: &[Complex64]) -> Vec<Complex64> {
        let spec = self.spectrum(x);
        let mut out = self.filtered(&spec, filter);
        if let Some(c) = &self.chirp {
            for (v, c) in out.iter_mut().zip(c) {
                *v *= c.conj();
            }
        }
        out
    }

    /// `|x Θ ψ|` from a precomputed spectrum of `C · x`.
    pub fn modulus_from_spectrum(&self, spectrum: &[Complex64], filter: &[Complex64]) -> Vec<f64> {
        self.filtered(spectrum, filter)
            .iter()
            .map(|v| v.norm())
            .collect()
    }
}

fn check_geometry(x: &[usize], filter: &[usize]) -> Result<(usize, usize)> {
    match (x, filter) {
        ([h, w], [fh, fw]) if h == fh && w == fw => Ok((*h, *w)),
        _ => Err(Error::shape(format!(
            "image {x:?} and filter {filter:?} must share one 2-D geometry"
        ))),
    }
}

/// Fractional convolution of an `H × W` complex image with a frequency-domain
/// filter of the same geometry.
pub fn frconv2(
    x: &DenseTensor<Complex64>,
    psi_hat: &DenseTensor<Complex64>,
    alpha: &FracOrderPair,
) -> Result<DenseTensor<Complex64>> {
    let (h, w) = check_geometry(x.shape(), psi_hat.shape())?;
    let conv = FractionalConv::new(*alpha, h, w)?;
    DenseTensor::new(vec![h, w], conv.apply(x.data(), psi_hat.data()))
}

/// Elementwise modulus of [`frconv2`].
pub fn wavelet_modulus(
    x: &DenseTensor<Complex64>,
    psi_hat: &DenseTensor<Complex64>,
    alpha: &FracOrderPair,
) -> Result<DenseTensor<f64>> {
    Ok(frconv2(x, psi_hat, alpha)?.map(|v| v.norm()))
}
