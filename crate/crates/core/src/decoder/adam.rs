use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for every parameter tensor. Allocated on the first step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub hyper: AdamConfig,
}

impl AdamState {
    pub fn new(hyper: AdamConfig) -> Self {
        Self {
            hyper,
            ..Self::default()
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.len() != g.len()) {
        return Err(Error::shape("parameters and gradients do not align"));
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
        state.v = state.m.clone();
    }
    if state.m.len() != params.len() || state.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len()) {
        return Err(Error::shape("optimizer state does not match the parameters"));
    }
    state.t += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.hyper;
    let c1 = 1.0 - beta1.powi(state.t as i32);
    let c2 = 1.0 - beta2.powi(state.t as i32);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for i in 0..p.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            p[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut w = [0.5];
        let mut s = AdamState::default();
        adam_step(&mut [&mut w], &[&[1.0]], &mut s).unwrap();
        assert!((w[0] - (0.5 - 0.001)).abs() < 1e-6);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut w = [1.0, -2.0, 3.0];
        let mut s = AdamState::default();
        for _ in 0..50 {
            adam_step(&mut [&mut w], &[&[0.0; 3]], &mut s).unwrap();
        }
        assert_eq!(w, [1.0, -2.0, 3.0]);
        assert!(s.v.iter().flatten().all(|&v| v >= 0.0));
    }

    #[test]
    fn minimises_absolute_deviation() {
        // At the default rate 200 steps move at most 0.2, so the scalar probe
        // runs at 0.05.
        let mut w = [0.0];
        let mut s = AdamState::new(AdamConfig {
            lr: 0.05,
            ..AdamConfig::default()
        });
        for _ in 0..200 {
            let g = if w[0] > 3.0 { 1.0 } else if w[0] < 3.0 { -1.0 } else { 0.0 };
            adam_step(&mut [&mut w], &[&[g]], &mut s).unwrap();
        }
        assert!((w[0] - 3.0).abs() < 0.15, "w = {}", w[0]);
    }

    #[test]
    fn misaligned_inputs() {
        let mut w = [0.0; 2];
        let mut s = AdamState::default();
        assert!(adam_step(&mut [&mut w], &[&[0.0]], &mut s).is_err());
    }
}
