#![allow(dead_code)]

use std::collections::BTreeMap;

use excon_core::embedder::{batch_loss, dropout_mask, model_backward, CellKind, EmbedderModel, ParamSet};
use excon_core::extremes::{Extreme, ExtremeSet};
use excon_core::rng::stream_rng;
use ndarray::Array3;
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;
/// Below this magnitude gradients are compared on an absolute scale.
pub const FD_FLOOR: f64 = 1e-6;

/// Largest relative error between analytic and central-difference
/// gradients over every parameter of a random small model.
pub fn gradient_check(kind: CellKind, seed: u64) -> f64 {
    let mut rng = stream_rng(seed, 99, 0);
    let n = rng.random_range(1..=4);
    let h = rng.random_range(1..=6);
    let tau = rng.random_range(1..=6);
    let d = rng.random_range(1..=8);
    let batch = rng.random_range(2..=4);
    let p = if seed.is_multiple_of(2) { 0.0 } else { 0.3 };
    let mut model = EmbedderModel::new(kind, n, h, d, p, seed);
    for t in model.params.tensors_mut() {
        t.iter_mut().for_each(|v| *v = rng.random_range(-0.8..0.8));
    }
    let x = Array3::from_shape_fn((batch, tau, n), |_| rng.random_range(-2.0..2.0));
    let labels: Vec<&str> = (0..batch).map(|m| if m % 2 == 0 { "A" } else { "B" }).collect();
    let mut ex = BTreeMap::new();
    for c in ["A", "B"] {
        let vector = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        ex.insert(c.to_string(), Extreme { id: c.into(), distance: 1.0, vector });
    }
    let extremes = ExtremeSet { by_class: ex };
    if !seed.is_multiple_of(3) {
        let mut orng = stream_rng(seed, 98, 0);
        model.out_scale = orng.random_range(0.5..3.0);
        model.out_center = (0..d).map(|_| orng.random_range(-2.0..2.0)).collect();
    }
    let sizes = BTreeMap::from([("A".to_string(), 3), ("B".to_string(), 2)]);
    let mask = dropout_mask(&mut stream_rng(seed, 7, 0), batch, h, p);

    let cache = model.forward_batch(&x, Some(&mask)).unwrap();
    let (_, grads) = model_backward(&model, &cache, &labels, &extremes, &sizes).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();

    let loss_at = |m: &EmbedderModel| {
        let c = m.forward_batch(&x, Some(&mask)).unwrap();
        batch_loss(&c, &labels, &extremes, &sizes).unwrap()
    };
    let mut worst: f64 = 0.0;
    for (k, tensor) in analytic.iter().enumerate() {
        for (j, &a) in tensor.iter().enumerate() {
            let orig = model.params.tensors()[k][j];
            model.params.tensors_mut()[k][j] = orig + FD_STEP;
            let lp = loss_at(&model);
            model.params.tensors_mut()[k][j] = orig - FD_STEP;
            let lm = loss_at(&model);
            model.params.tensors_mut()[k][j] = orig;
            let num = (lp - lm) / (2.0 * FD_STEP);
            let rel = (a - num).abs() / a.abs().max(num.abs()).max(FD_FLOOR);
            worst = worst.max(rel);
        }
    }
    worst
}
