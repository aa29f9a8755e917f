//! End-to-end recurrent classifier: the last hidden state feeds a softmax
//! layer, trained with class-weighted cross-entropy (weights 1/|C_c|).
//! Minibatch losses are scaled by M/B so they estimate the full-dataset
//! loss and gradient clipping acts on that scale.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, MvtsInstance};
use crate::embedder::{
    adam_step, class_sizes, clip_global_norm, stack_instances, AdamState, CellParams, ParamSet, TrainConfig,
};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

const INIT_STREAM: u64 = 0x5345;
const SHUFFLE_STREAM: u64 = 0x5346;
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct SeqParams {
    pub cell: CellParams,
    /// C × H
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
}

impl ParamSet for SeqParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.cell.tensors();
        t.push(self.head_w.as_slice().expect("standard layout"));
        t.push(self.head_b.as_slice().expect("standard layout"));
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.cell.tensors_mut();
        t.push(self.head_w.as_slice_mut().expect("standard layout"));
        t.push(self.head_b.as_slice_mut().expect("standard layout"));
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqClassifier {
    pub params: SeqParams,
    pub classes: Vec<String>,
    /// Weighted training cross-entropy; index 0 before training.
    pub training_log: Vec<f64>,
}

/// Serialized form with row-major arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqFile {
    pub cell_kind: crate::embedder::CellKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub classes: Vec<String>,
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub b: Vec<f64>,
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
    pub training_log: Vec<f64>,
}

impl SeqClassifier {
    pub fn to_file(&self) -> SeqFile {
        let t = self.params.tensors();
        SeqFile {
            cell_kind: self.params.cell.kind,
            input_dim: self.params.cell.input_dim(),
            hidden_dim: self.params.cell.hidden_dim(),
            classes: self.classes.clone(),
            w: t[0].to_vec(),
            u: t[1].to_vec(),
            b: t[2].to_vec(),
            head_w: t[3].to_vec(),
            head_b: t[4].to_vec(),
            training_log: self.training_log.clone(),
        }
    }

    fn logits(&self, x: &ndarray::Array3<f64>) -> Result<Array2<f64>> {
        let cache = self.params.cell.forward(x)?;
        Ok(cache.h_final().dot(&self.params.head_w.t()) + &self.params.head_b)
    }

    /// Softmax rows in `classes` order.
    pub fn predict_proba(&self, instances: &[MvtsInstance]) -> Result<Vec<Vec<f64>>> {
        let chunks = instances
            .par_chunks(EVAL_CHUNK)
            .map(|chunk| Ok(softmax_rows(&self.logits(&stack_instances(chunk)?)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(chunks
            .into_iter()
            .flat_map(|p| p.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>())
            .collect())
    }
}

fn softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    let mut p = z.clone();
    for mut row in p.rows_mut() {
        let mx = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - mx).exp());
        let s = row.sum();
        row /= s;
    }
    p
}

/// Σ_m w_m·(−log p_{y_m}) with w_m = 1/|C_{y_m}|, and ∂/∂logits.
fn weighted_ce(logits: &Array2<f64>, y: &[usize], weights: &[f64]) -> (f64, Array2<f64>) {
    let p = softmax_rows(logits);
    let mut grad = p.clone();
    let mut loss = 0.0;
    for (m, &c) in y.iter().enumerate() {
        let w = weights[c];
        loss -= w * p[[m, c]].max(f64::MIN_POSITIVE).ln();
        grad[[m, c]] -= 1.0;
        grad.row_mut(m).mapv_inplace(|g| g * w);
    }
    (loss, grad)
}

pub fn train_seq_classifier(data: &LabeledDataset, cfg: &TrainConfig) -> Result<SeqClassifier> {
    cfg.validate()?;
    if let Some(bad) = data.instances().iter().find(|i| !i.is_complete()) {
        return Err(Error::InvalidDataset(format!(
            "instance `{}` has missing values; impute before training",
            bad.id
        )));
    }
    let classes = data.classes().to_vec();
    if classes.len() < 2 {
        return Err(Error::Labeling("sequence classifier needs at least two classes".into()));
    }
    let instances = data.instances();
    let y: Vec<usize> = instances
        .iter()
        .map(|i| classes.binary_search(&i.label).expect("dataset class"))
        .collect();
    let sizes: BTreeMap<String, usize> = class_sizes(instances.iter().map(|i| i.label.as_str()));
    let weights: Vec<f64> = classes.iter().map(|c| 1.0 / sizes[c] as f64).collect();
    let (_, n) = data.shape();
    let h = cfg.hidden_dim;
    let mut rng = stream_rng(cfg.seed, INIT_STREAM, 0);
    let cell = CellParams::init(cfg.cell_kind, n, h, &mut rng);
    let bound = 1.0 / (h as f64).sqrt();
    let head_w = Array2::from_shape_fn((classes.len(), h), |_| rng.random_range(-bound..bound));
    let mut model = SeqClassifier {
        params: SeqParams {
            cell,
            head_w,
            head_b: Array1::zeros(classes.len()),
        },
        classes,
        training_log: Vec::new(),
    };
    let full_loss = |model: &SeqClassifier, epoch: usize| -> Result<f64> {
        let p = model.predict_proba(instances)?;
        let loss: f64 = p
            .iter()
            .zip(&y)
            .map(|(row, &c)| -weights[c] * row[c].max(f64::MIN_POSITIVE).ln())
            .sum();
        if !loss.is_finite() {
            return Err(Error::TrainingFailure {
                epoch,
                message: format!("loss is {loss}"),
            });
        }
        Ok(loss)
    };
    model.training_log.push(full_loss(&model, 0)?);
    let mut state = AdamState::new(&model.params);
    let adam = cfg.adam();
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut shuffle_rng = stream_rng(cfg.seed, SHUFFLE_STREAM, 0);
    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let x = stack_instances(idx.iter().map(|&i| &instances[i]))?;
            let cache = model.params.cell.forward(&x)?;
            let hid = cache.h_final();
            let logits = hid.dot(&model.params.head_w.t()) + &model.params.head_b;
            let yb: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
            let (loss, dlogits) = weighted_ce(&logits, &yb, &weights);
            let scale = instances.len() as f64 / idx.len() as f64;
            let (loss, dlogits) = (loss * scale, dlogits * scale);
            let dh = dlogits.dot(&model.params.head_w);
            let mut grads = SeqParams {
                cell: model.params.cell.backward(&cache, &dh)?,
                head_w: dlogits.t().dot(hid),
                head_b: dlogits.sum_axis(Axis(0)),
            };
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Numeric {
                    epoch,
                    batch,
                    message: format!("non-finite loss or gradient (loss = {loss})"),
                });
            }
            clip_global_norm(&mut grads, cfg.clip_norm);
            adam_step(&mut model.params, &grads, &mut state, &adam)?;
        }
        model.training_log.push(full_loss(&model, epoch)?);
    }
    Ok(model)
}
