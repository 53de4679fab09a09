//! Morlet band-pass filters and the Gaussian low-pass, built directly in the
//! frequency domain for one image geometry.
//!
//! Frequencies are laid out on the FFT grid: bin `(u, v)` of an `H × W` image
//! is the angular frequency `(2π·u'/H, 2π·v'/W)` with `u', v'` the signed bin
//! indices. Every response is periodized over neighbouring `2π` cells, so the
//! discrete filters are exactly periodic and a 90° rotation of the grid maps
//! the filters of angle `k` onto those of angle `k + L/2`.
//!
//! Orientation `δ = kπ/L` is measured from the column (horizontal) frequency
//! axis toward the row axis.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::signed_bin;

/// Number of `2π` cells summed on each side when periodizing a response.
const PERIODS: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    /// Number of octaves; scales run over `0..J`.
    #[serde(rename = "J")]
    pub octaves: usize,
    /// Number of orientations over `[0, π)`.
    #[serde(rename = "L")]
    pub angles: usize,
    pub sigma0: f64,
    pub xi0: f64,
    pub slant: f64,
}

impl FilterParams {
    /// Standard Morlet parameters: `sigma0 = 0.8`, `xi0 = 3π/4`, `slant = 4/L`.
    pub fn new(octaves: usize, angles: usize) -> Self {
        Self {
            octaves,
            angles,
            sigma0: 0.8,
            xi0: 3.0 * PI / 4.0,
            slant: 4.0 / angles.max(1) as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.octaves < 1 {
            return Err(Error::param("J must be at least 1"));
        }
        if self.angles < 1 {
            return Err(Error::param("L must be at least 1"));
        }
        if !(self.sigma0 > 0.0) {
            return Err(Error::param(format!("sigma0 must be positive, got {}", self.sigma0)));
        }
        if !(self.xi0 > 0.0 && self.xi0 < PI) {
            return Err(Error::param(format!("xi0 must lie in (0, π), got {}", self.xi0)));
        }
        if !(self.slant > 0.0) {
            return Err(Error::param(format!("slant must be positive, got {}", self.slant)));
        }
        Ok(())
    }

    /// Subsampling stride `2^J`.
    pub fn stride(&self) -> usize {
        1 << self.octaves
    }
}

impl Default for FilterParams {
    fn default() -> Self {
        Self::new(3, 8)
    }
}

/// Angular frequency of each bin along an axis of length `n`.
fn axis_frequencies(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 2.0 * PI * signed_bin(k, n) as f64 / n as f64)
        .collect()
}

/// Anisotropic Gaussian bump in frequency, centred at `center`, periodized.
struct Bump {
    /// Unit vector of the wave direction, in (column, row) coordinates.
    dir: (f64, f64),
    sigma: f64,
    slant: f64,
}

impl Bump {
    fn raw(&self, wc: f64, wr: f64) -> f64 {
        let along = wc * self.dir.0 + wr * self.dir.1;
        let across = -wc * self.dir.1 + wr * self.dir.0;
        let s2 = self.sigma * self.sigma;
        (-0.5 * s2 * (along * along + across * across / (self.slant * self.slant))).exp()
    }

    fn periodized(&self, wc: f64, wr: f64) -> f64 {
        let mut acc = 0.0;
        for mr in -PERIODS..=PERIODS {
            for mc in -PERIODS..=PERIODS {
                acc += self.raw(wc + 2.0 * PI * mc as f64, wr + 2.0 * PI * mr as f64);
            }
        }
        acc
    }
}

/// Frequency response of the Morlet filter at scale `j` and angle index `k`,
/// as a row-major `height × width` grid.
///
/// The response is a Gaussian centred at `xi0 / 2^j` in direction `kπ/L`
/// minus a scaled Gaussian at the origin, so that the DC bin is zero. It is
/// then scaled to unit peak magnitude.
pub fn build_morlet(
    params: &FilterParams,
    j: usize,
    k: usize,
    height: usize,
    width: usize,
) -> Result<Vec<Complex64>> {
    params.validate()?;
    if j >= params.octaves {
        return Err(Error::OutOfRange(format!(
            "scale {j} with J = {}",
            params.octaves
        )));
    }
    if k >= params.angles {
        return Err(Error::OutOfRange(format!(
            "angle {k} with L = {}",
            params.angles
        )));
    }
    let theta = k as f64 * PI / params.angles as f64;
    let scale = (1u64 << j) as f64;
    let bump = Bump {
        dir: (theta.cos(), theta.sin()),
        sigma: params.sigma0 * scale,
        slant: params.slant,
    };
    let xi = params.xi0 / scale;
    let (xc, xr) = (xi * bump.dir.0, xi * bump.dir.1);
    let kappa = bump.periodized(-xc, -xr) / bump.periodized(0.0, 0.0);

    let wrow = axis_frequencies(height);
    let wcol = axis_frequencies(width);
    let mut out = Vec::with_capacity(height * width);
    for &wr in &wrow {
        for &wc in &wcol {
            let v = bump.periodized(wc - xc, wr - xr) - kappa * bump.periodized(wc, wr);
            out.push(Complex64::new(v, 0.0));
        }
    }
    // The DC bin cancels up to rounding; pin it.
    out[0] = Complex64::new(0.0, 0.0);
    let peak = out.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
    if peak > 0.0 {
        for v in &mut out {
            *v /= peak;
        }
    }
    Ok(out)
}

/// Gaussian low-pass with spatial standard deviation `sigma0 · 2^(J-1)`
/// and a DC gain of exactly one.
pub fn build_lowpass(params: &FilterParams, height: usize, width: usize) -> Result<Vec<Complex64>> {
    params.validate()?;
    let stride = params.stride();
    if height < stride || width < stride {
        return Err(Error::param(format!(
            "image {height}x{width} is smaller than 2^J = {stride}"
        )));
    }
    let bump = Bump {
        dir: (1.0, 0.0),
        sigma: params.sigma0 * (stride / 2) as f64,
        slant: 1.0,
    };
    let dc = bump.periodized(0.0, 0.0);
    let wrow = axis_frequencies(height);
    let wcol = axis_frequencies(width);
    let mut out = Vec::with_capacity(height * width);
    for &wr in &wrow {
        for &wc in &wcol {
            out.push(Complex64::new(bump.periodized(wc, wr) / dc, 0.0));
        }
    }
    out[0] = Complex64::new(1.0, 0.0);
    Ok(out)
}

/// All band-pass filters of one geometry plus the low-pass.
#[derive(Debug, Clone)]
pub struct FilterBank {
    pub params: FilterParams,
    pub height: usize,
    pub width: usize,
    /// Band-pass responses, indexed by `j * L + k`.
    psi_hat: Vec<Vec<Complex64>>,
    phi_hat: Vec<Complex64>,
    /// Common gain applied to every band-pass filter (see [`build_bank`]).
    pub bandpass_gain: f64,
}

impl FilterBank {
    pub fn psi(&self, j: usize, k: usize) -> &[Complex64] {
        &self.psi_hat[j * self.params.angles + k]
    }

    pub fn phi(&self) -> &[Complex64] {
        &self.phi_hat
    }

    pub fn bandpass_count(&self) -> usize {
        self.psi_hat.len()
    }

    /// Iterates `(j, k, response)` in scale-major order.
    pub fn bandpass(&self) -> impl Iterator<Item = (usize, usize, &[Complex64])> {
        let l = self.params.angles;
        self.psi_hat
            .iter()
            .enumerate()
            .map(move |(i, f)| (i / l, i % l, f.as_slice()))
    }
}

/// Builds the `J·L` band-pass filters and the low-pass for an image geometry.
///
/// Each Morlet has unit peak; all of them are then multiplied by one common
/// gain `c ≤ 1`, the largest for which `c²·Σ|ψ̂|² + |φ̂|² ≤ 1` everywhere.
pub fn build_bank(params: &FilterParams, height: usize, width: usize) -> Result<FilterBank> {
    let phi_hat = build_lowpass(params, height, width)?;
    let mut psi_hat = Vec::with_capacity(params.octaves * params.angles);
    for j in 0..params.octaves {
        for k in 0..params.angles {
            psi_hat.push(build_morlet(params, j, k, height, width)?);
        }
    }

    let mut gain2 = 1.0f64;
    for (i, phi) in phi_hat.iter().enumerate() {
        let band: f64 = psi_hat.iter().map(|f| f[i].norm_sqr()).sum();
        if band > 1e-300 {
            let room = (1.0 - phi.norm_sqr()).max(0.0);
            gain2 = gain2.min(room / band);
        }
    }
    let gain = gain2.sqrt();
    for f in &mut psi_hat {
        for v in f.iter_mut() {
            *v *= gain;
        }
    }
    Ok(FilterBank {
        params: *params,
        height,
        width,
        psi_hat,
        phi_hat,
        bandpass_gain: gain,
    })
}

/// Minimum and maximum over all frequencies of `Σ_{j,k} |ψ̂_{j,k}|² + |φ̂|²`.
pub fn littlewood_paley_report(bank: &FilterBank) -> (f64, f64) {
    let n = bank.height * bank.width;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let s: f64 = bank.psi_hat.iter().map(|f| f[i].norm_sqr()).sum::<f64>()
            + bank.phi_hat[i].norm_sqr();
        lo = lo.min(s);
        hi = hi.max(s);
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::Fft2d;

    fn peak_bin(f: &[Complex64], h: usize, w: usize) -> (f64, f64) {
        let (i, _) = f
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
            .unwrap();
        let r = signed_bin(i / w, h) as f64 * 2.0 * PI / h as f64;
        let c = signed_bin(i % w, w) as f64 * 2.0 * PI / w as f64;
        (c, r)
    }

    #[test]
    fn morlet_has_zero_dc_and_unit_peak() {
        let p = FilterParams::default();
        for j in 0..3 {
            for k in 0..8 {
                let f = build_morlet(&p, j, k, 32, 32).unwrap();
                assert!(f[0].norm() < 1e-10);
                let peak = f.iter().map(|v| v.norm()).fold(0.0, f64::max);
                assert!((peak - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spatial_sum_of_bandpass_vanishes() {
        let p = FilterParams::default();
        let bank = build_bank(&p, 32, 32).unwrap();
        let fft = Fft2d::new(32, 32);
        for (_, _, f) in bank.bandpass() {
            let mut spatial = f.to_vec();
            fft.inverse(&mut spatial);
            let sum: Complex64 = spatial.iter().sum();
            assert!(sum.norm() < 1e-10, "spatial sum {sum}");
        }
    }

    #[test]
    fn out_of_range_indices_are_rejected() {
        let p = FilterParams::default();
        assert!(build_morlet(&p, 3, 0, 32, 32).is_err());
        assert!(build_morlet(&p, 0, 8, 32, 32).is_err());
    }

    #[test]
    fn invalid_params_are_rejected() {
        let p = FilterParams { octaves: 0, ..Default::default() };
        assert!(p.validate().is_err());
        let p = FilterParams { xi0: PI, ..Default::default() };
        assert!(p.validate().is_err());
        let p = FilterParams { sigma0: 0.0, ..Default::default() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn peak_frequency_halves_per_octave() {
        let p = FilterParams::new(2, 8);
        let bin = 2.0 * PI / 64.0;
        for k in 0..8 {
            let f0 = build_morlet(&p, 0, k, 64, 64).unwrap();
            let f1 = build_morlet(&p, 1, k, 64, 64).unwrap();
            let (c0, r0) = peak_bin(&f0, 64, 64);
            let (c1, r1) = peak_bin(&f1, 64, 64);
            let m0 = c0.hypot(r0);
            let m1 = c1.hypot(r1);
            // Off-axis peaks snap to the grid in both coordinates.
            assert!((m1 - m0 / 2.0).abs() <= 1.5 * bin, "k={k}: {m0} vs {m1}");
        }
    }

    #[test]
    fn quarter_turn_maps_angle_k_to_k_plus_half() {
        let p = FilterParams::new(2, 8);
        let n = 32;
        for j in 0..2 {
            for k in 0..4 {
                let a = build_morlet(&p, j, k, n, n).unwrap();
                let b = build_morlet(&p, j, k + 4, n, n).unwrap();
                // psi_{k+4}(c, r) = psi_k(r, -c) on the periodic grid.
                for r in 0..n {
                    for c in 0..n {
                        let rotated = a[((n - c) % n) * n + r].norm_sqr();
                        let here = b[r * n + c].norm_sqr();
                        assert!((rotated - here).abs() < 1e-8, "j={j} k={k} at ({r},{c})");
                    }
                }
            }
        }
    }

    #[test]
    fn lowpass_keeps_constants() {
        let p = FilterParams::default();
        let phi = build_lowpass(&p, 32, 32).unwrap();
        let fft = Fft2d::new(32, 32);
        let mut x = vec![Complex64::new(0.37, 0.0); 32 * 32];
        fft.forward(&mut x);
        for (v, f) in x.iter_mut().zip(&phi) {
            *v *= f;
        }
        fft.inverse(&mut x);
        assert!(x.iter().all(|v| (v.re - 0.37).abs() < 1e-10 && v.im.abs() < 1e-10));
    }

    #[test]
    fn lowpass_reduces_noise_variance() {
        let p = FilterParams::default();
        let phi = build_lowpass(&p, 32, 32).unwrap();
        let fft = Fft2d::new(32, 32);
        let mut rng = crate::rng::SeededRng::new(5);
        let noise: Vec<f64> = (0..1024).map(|_| rng.next_f64() - 0.5).collect();
        let mut x: Vec<Complex64> = noise.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft.forward(&mut x);
        for (v, f) in x.iter_mut().zip(&phi) {
            *v *= f;
        }
        fft.inverse(&mut x);
        let var = |v: &mut dyn Iterator<Item = f64>| {
            let vals: Vec<f64> = v.collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            vals.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / vals.len() as f64
        };
        let before = var(&mut noise.iter().cloned());
        let after = var(&mut x.iter().map(|c| c.re));
        assert!(after < before * 0.1, "{after} vs {before}");
    }

    #[test]
    fn lowpass_matches_closed_form_gaussian() {
        // J=3, sigma0=0.8: spatial std 3.2 px.
        let p = FilterParams::default();
        let sigma = 3.2f64;
        let phi = build_lowpass(&p, 32, 32).unwrap();
        let fft = Fft2d::new(32, 32);
        let mut kernel = phi.clone();
        fft.inverse(&mut kernel);
        let k0 = kernel[0].re;
        for d in 1..=8usize {
            let expected = (-((d * d) as f64) / (2.0 * sigma * sigma)).exp();
            assert!((kernel[d].re / k0 - expected).abs() < 1e-6, "d={d}");
            assert!((kernel[d * 32].re / k0 - expected).abs() < 1e-6, "d={d}");
        }
        // Two impulse responses 8 px apart: normalized overlap exp(-64 / (4σ²)).
        let mut dot = 0.0;
        let mut norm = 0.0;
        for r in 0..32 {
            for c in 0..32 {
                let a = kernel[r * 32 + c].re;
                let b = kernel[r * 32 + (c + 32 - 8) % 32].re;
                dot += a * b;
                norm += a * a;
            }
        }
        let overlap = dot / norm;
        let expected = (-64.0 / (4.0 * sigma * sigma)).exp();
        assert!((overlap - expected).abs() < 1e-6, "{overlap} vs {expected}");
        assert!(overlap > 0.2);
    }

    #[test]
    fn lowpass_rejects_small_geometry() {
        let p = FilterParams::default();
        assert!(build_lowpass(&p, 4, 32).is_err());
    }

    #[test]
    fn bank_sizes() {
        let b = build_bank(&FilterParams::new(3, 8), 32, 32).unwrap();
        assert_eq!(b.bandpass_count(), 24);
        assert_eq!(b.phi().len(), 32 * 32);
        let b = build_bank(&FilterParams::new(4, 8), 128, 128).unwrap();
        assert_eq!(b.bandpass_count(), 32);
        let b = build_bank(&FilterParams::new(1, 1), 8, 8).unwrap();
        assert_eq!(b.bandpass_count(), 1);
    }

    #[test]
    fn frame_bounds() {
        let b = build_bank(&FilterParams::default(), 32, 32).unwrap();
        let (lo, hi) = littlewood_paley_report(&b);
        assert!(hi <= 1.0 + 1e-6, "upper {hi}");
        assert!(lo > 0.0, "lower {lo}");
        assert!(b.bandpass_gain > 0.0 && b.bandpass_gain <= 1.0);
    }
}
