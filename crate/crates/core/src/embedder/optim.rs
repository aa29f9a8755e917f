//! Adam and global-norm gradient clipping over any flat parameter set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A fixed, ordered list of contiguous parameter tensors.
pub trait ParamSet {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new<P: ParamSet>(params: &P) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

pub fn adam_step<P: ParamSet>(params: &mut P, grads: &P, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    let grads = grads.tensors();
    let mut params = params.tensors_mut();
    let shapes_agree = params.len() == grads.len()
        && params.len() == state.m.len()
        && params
            .iter()
            .zip(&grads)
            .zip(&state.m)
            .all(|((p, g), m)| p.len() == g.len() && p.len() == m.len());
    if !shapes_agree {
        return Err(Error::Config("parameter, gradient and optimizer shapes disagree".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (k, (p, g)) in params.iter_mut().zip(&grads).enumerate() {
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for j in 0..p.len() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p[j] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

pub fn global_norm<P: ParamSet>(grads: &P) -> f64 {
    grads
        .tensors()
        .iter()
        .flat_map(|t| t.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grads` to norm `max_norm` when larger; returns the original
/// norm when clipping happened.
pub fn clip_global_norm<P: ParamSet>(grads: &mut P, max_norm: f64) -> Option<f64> {
    let norm = global_norm(grads);
    if norm > max_norm {
        let scale = max_norm / norm;
        for t in grads.tensors_mut() {
            t.iter_mut().for_each(|g| *g *= scale);
        }
        Some(norm)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone, Debug, PartialEq)]
    struct Flat(Vec<f64>, Vec<f64>);

    impl ParamSet for Flat {
        fn tensors(&self) -> Vec<&[f64]> {
            vec![&self.0, &self.1]
        }
        fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0, &mut self.1]
        }
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = Flat(vec![1.0, -2.0], vec![3.0]);
        let g = Flat(vec![0.0, 0.0], vec![0.0]);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, &AdamConfig::default()).unwrap();
        assert_eq!(p, Flat(vec![1.0, -2.0], vec![3.0]));
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let mut p = Flat(vec![1.0, 1.0], vec![1.0]);
        let g = Flat(vec![0.3, -40.0], vec![1e-3]);
        let mut s = AdamState::new(&p);
        let cfg = AdamConfig::default();
        adam_step(&mut p, &g, &mut s, &cfg).unwrap();
        assert!((p.0[0] - (1.0 - 0.01)).abs() < 1e-9);
        assert!((p.0[1] - (1.0 + 0.01)).abs() < 1e-9);
        assert!((p.1[0] - (1.0 - 0.01)).abs() < 1e-7);
    }

    #[test]
    fn pure_transition() {
        let p0 = Flat(vec![0.5, 0.1], vec![-1.0]);
        let g = Flat(vec![0.2, -0.7], vec![3.0]);
        let cfg = AdamConfig::default();
        let run = || {
            let mut p = p0.clone();
            let mut s = AdamState::new(&p);
            adam_step(&mut p, &g, &mut s, &cfg).unwrap();
            adam_step(&mut p, &g, &mut s, &cfg).unwrap();
            (p, s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_error() {
        let mut p = Flat(vec![0.0], vec![0.0]);
        let g = Flat(vec![0.0, 1.0], vec![0.0]);
        let mut s = AdamState::new(&p);
        assert!(adam_step(&mut p, &g, &mut s, &AdamConfig::default()).is_err());
    }

    #[test]
    fn clipping() {
        let mut g = Flat(vec![3.0, 0.0], vec![4.0]);
        assert_eq!(clip_global_norm(&mut g, 10.0), None);
        assert_eq!(clip_global_norm(&mut g, 1.0), Some(5.0));
        assert!((global_norm(&g) - 1.0).abs() < 1e-15);
        assert!((g.0[0] - 0.6).abs() < 1e-15);
    }
}
