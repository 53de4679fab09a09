//! 2-D FFTs over row-major complex images, built from 1-D `rustfft` plans.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward and inverse plans for one image geometry.
///
/// The inverse transform is normalized by `1 / (height · width)`, so
/// `inverse(forward(x)) == x`.
#[derive(Clone)]
pub struct Fft2d {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2d {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2d")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

impl Fft2d {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_inv, &self.col_inv);
        let scale = 1.0 / (self.height * self.width) as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn run(&self, data: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        let (h, w) = (self.height, self.width);
        assert_eq!(data.len(), h * w, "buffer does not match FFT geometry");
        rows.process(data);
        let mut column = vec![Complex64::default(); h];
        let mut scratch = vec![Complex64::default(); cols.get_inplace_scratch_len()];
        for x in 0..w {
            for y in 0..h {
                column[y] = data[y * w + x];
            }
            cols.process_with_scratch(&mut column, &mut scratch);
            for y in 0..h {
                data[y * w + x] = column[y];
            }
        }
    }
}

/// Signed frequency index of bin `k` on an axis of length `n`: bins at or
/// above `n / 2` wrap to negative frequencies.
pub fn signed_bin(k: usize, n: usize) -> isize {
    if k < n.div_ceil(2) {
        k as isize
    } else {
        k as isize - n as isize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn naive_dft(x: &[Complex64], h: usize, w: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); h * w];
        for u in 0..h {
            for v in 0..w {
                let mut acc = Complex64::default();
                for y in 0..h {
                    for xx in 0..w {
                        let ph = -2.0 * PI * ((u * y) as f64 / h as f64 + (v * xx) as f64 / w as f64);
                        acc += x[y * w + xx] * Complex64::from_polar(1.0, ph);
                    }
                }
                out[u * w + v] = acc;
            }
        }
        out
    }

    #[test]
    fn matches_naive_dft_on_rectangle() {
        let (h, w) = (6, 4);
        let x: Vec<Complex64> = (0..h * w)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let mut y = x.clone();
        let fft = Fft2d::new(h, w);
        fft.forward(&mut y);
        let reference = naive_dft(&x, h, w);
        for (a, b) in y.iter().zip(&reference) {
            assert!((a - b).norm() < 1e-10);
        }
        fft.inverse(&mut y);
        for (a, b) in y.iter().zip(&x) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn signed_bins() {
        assert_eq!(signed_bin(0, 8), 0);
        assert_eq!(signed_bin(3, 8), 3);
        assert_eq!(signed_bin(4, 8), -4);
        assert_eq!(signed_bin(7, 8), -1);
        assert_eq!(signed_bin(2, 5), 2);
        assert_eq!(signed_bin(3, 5), -2);
    }
}
