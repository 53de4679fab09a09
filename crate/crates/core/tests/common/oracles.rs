//! Slow, direct implementations used to check the fast paths.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

/// `e^{i/2 · t² · cot(απ/2)}` on one axis, with `t = (idx − n/2)/n`.
fn axis_chirp(alpha: f64, n: usize) -> Vec<Complex64> {
    let cot = if alpha == 1.0 { 0.0 } else { (alpha * PI / 2.0).cos() / (alpha * PI / 2.0).sin() };
    (0..n)
        .map(|i| {
            let t = (i as f64 - n as f64 / 2.0) / n as f64;
            Complex64::from_polar(1.0, 0.5 * t * t * cot)
        })
        .collect()
}

/// The 2-D chirp as a row-major grid.
pub fn chirp2(alpha: [f64; 2], h: usize, w: usize) -> Vec<Complex64> {
    let (r, c) = (axis_chirp(alpha[0], h), axis_chirp(alpha[1], w));
    (0..h * w).map(|i| r[i / w] * c[i % w]).collect()
}

/// Spatial kernel of a frequency response by the inverse DFT sum.
pub fn spatial_kernel(hat: &[Complex64], h: usize, w: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); h * w];
    for p in 0..h {
        for q in 0..w {
            let mut acc = Complex64::default();
            for k in 0..h {
                for l in 0..w {
                    let phase = 2.0 * PI * ((k * p) as f64 / h as f64 + (l * q) as f64 / w as f64);
                    acc += hat[k * w + l] * Complex64::from_polar(1.0, phase);
                }
            }
            out[p * w + q] = acc / (h * w) as f64;
        }
    }
    out
}

/// `conj(C)·((C·x) ⊛ g)` by direct circular summation.
pub fn frconv_direct(x: &[Complex64], g: &[Complex64], alpha: [f64; 2], h: usize, w: usize) -> Vec<Complex64> {
    let c = chirp2(alpha, h, w);
    let cx: Vec<Complex64> = x.iter().zip(&c).map(|(a, b)| a * b).collect();
    let mut out = vec![Complex64::default(); h * w];
    for n1 in 0..h {
        for n2 in 0..w {
            let mut acc = Complex64::default();
            for m1 in 0..h {
                for m2 in 0..w {
                    let d = ((n1 + h - m1) % h) * w + (n2 + w - m2) % w;
                    acc += cx[m1 * w + m2] * g[d];
                }
            }
            out[n1 * w + n2] = c[n1 * w + n2].conj() * acc;
        }
    }
    out
}

fn real(x: &[f64]) -> Vec<Complex64> {
    x.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}

/// Scattering of one image with spatial-domain summations only. `psi[j][k]`
/// and `phi` are spatial kernels. Output is channel-major in the canonical
/// path order.
pub fn scatter_direct(
    x: &[f64],
    psi: &[Vec<Vec<Complex64>>],
    phi: &[Complex64],
    alpha: [f64; 2],
    h: usize,
    w: usize,
    stride: usize,
) -> Vec<f64> {
    let avg = |u: &[f64]| -> Vec<f64> {
        let full = frconv_direct(&real(u), phi, alpha, h, w);
        let mut out = Vec::new();
        for r in (0..h).step_by(stride) {
            for c in (0..w).step_by(stride) {
                out.push(full[r * w + c].norm());
            }
        }
        out
    };
    let modulus = |u: &[f64], g: &[Complex64]| -> Vec<f64> {
        frconv_direct(&real(u), g, alpha, h, w).iter().map(|v| v.norm()).collect()
    };
    let (octaves, angles) = (psi.len(), psi[0].len());
    let mut out = avg(x);
    let mut first = Vec::new();
    for row in psi {
        for g in row {
            let u1 = modulus(x, g);
            out.extend(avg(&u1));
            first.push(u1);
        }
    }
    for j1 in 0..octaves {
        for k1 in 0..angles {
            for row in psi.iter().skip(j1 + 1) {
                for g in row {
                    out.extend(avg(&modulus(&first[j1 * angles + k1], g)));
                }
            }
        }
    }
    out
}

/// In-place 2-D FFT (forward or unnormalised inverse) with rustfft.
fn fft2(data: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (fr, fc) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    for row in data.chunks_mut(w) {
        fr.process(row);
    }
    let mut col = vec![Complex64::default(); h];
    for c in 0..w {
        for r in 0..h {
            col[r] = data[r * w + c];
        }
        fc.process(&mut col);
        for r in 0..h {
            data[r * w + c] = col[r];
        }
    }
}

/// Circular convolution of a real signal with a frequency response.
fn conv_plain(u: &[f64], hat: &[Complex64], h: usize, w: usize) -> Vec<Complex64> {
    let mut s = real(u);
    fft2(&mut s, h, w, false);
    for (v, f) in s.iter_mut().zip(hat) {
        *v *= f;
    }
    fft2(&mut s, h, w, true);
    let n = (h * w) as f64;
    s.iter().map(|v| v / n).collect()
}

/// Classical scattering: plain convolutions, no chirps, full-resolution
/// averaging followed by subsampling.
pub fn scatnet_plain(
    x: &[f64],
    psi: &[Vec<Vec<Complex64>>],
    phi: &[Complex64],
    h: usize,
    w: usize,
    stride: usize,
) -> Vec<f64> {
    let avg = |u: &[f64]| -> Vec<f64> {
        let full = conv_plain(u, phi, h, w);
        let mut out = Vec::new();
        for r in (0..h).step_by(stride) {
            for c in (0..w).step_by(stride) {
                out.push(full[r * w + c].norm());
            }
        }
        out
    };
    let modulus = |u: &[f64], g: &[Complex64]| -> Vec<f64> { conv_plain(u, g, h, w).iter().map(|v| v.norm()).collect() };
    let (octaves, angles) = (psi.len(), psi[0].len());
    let mut out = avg(x);
    let mut first = Vec::new();
    for row in psi {
        for g in row {
            let u1 = modulus(x, g);
            out.extend(avg(&u1));
            first.push(u1);
        }
    }
    for j1 in 0..octaves {
        for k1 in 0..angles {
            for row in psi.iter().skip(j1 + 1) {
                for g in row {
                    out.extend(avg(&modulus(&first[j1 * angles + k1], g)));
                }
            }
        }
    }
    out
}

/// Mean SSIM from the textbook formula: a full 2-D Gaussian window placed
/// at every fully-contained position, with weighted moments summed directly.
pub fn ssim_direct(x: &[f64], y: &[f64], h: usize, w: usize) -> f64 {
    const WIN: usize = 11;
    const SIGMA: f64 = 1.5;
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let centre = (WIN as f64 - 1.0) / 2.0;
    let mut kernel = vec![0.0; WIN * WIN];
    for a in 0..WIN {
        for b in 0..WIN {
            let d2 = (a as f64 - centre).powi(2) + (b as f64 - centre).powi(2);
            kernel[a * WIN + b] = (-d2 / (2.0 * SIGMA * SIGMA)).exp();
        }
    }
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let mut acc = 0.0;
    let mut count = 0;
    for r in 0..=h - WIN {
        for c in 0..=w - WIN {
            let (mut mx, mut my) = (0.0, 0.0);
            for a in 0..WIN {
                for b in 0..WIN {
                    let k = kernel[a * WIN + b];
                    mx += k * x[(r + a) * w + c + b];
                    my += k * y[(r + a) * w + c + b];
                }
            }
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for a in 0..WIN {
                for b in 0..WIN {
                    let k = kernel[a * WIN + b];
                    let dx = x[(r + a) * w + c + b] - mx;
                    let dy = y[(r + a) * w + c + b] - my;
                    vx += k * dx * dx;
                    vy += k * dy * dy;
                    cov += k * dx * dy;
                }
            }
            acc += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    acc / count as f64
}
