//! Temporal feature embedding: a recurrent cell reads the τ timestamp
//! vectors, the final hidden state goes through inverted dropout and a
//! linear projection to d dimensions, and training pulls each embedding
//! onto its class extreme (class-size weighted squared error) with Adam.

pub mod cell;
pub mod optim;

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cell::{CellCache, CellKind, CellParams};
pub use optim::{adam_step, clip_global_norm, global_norm, AdamConfig, AdamState, ParamSet};

use crate::data::{LabeledDataset, MvtsInstance};
use crate::error::{Error, Result};
use crate::extremes::{squared_distance, ExtremeSet};
use crate::features::FeatureVector;
use crate::ingest::{read_json, write_json};
use crate::rng::stream_rng;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

/// Instances per chunk for eval-mode passes.
const EVAL_CHUNK: usize = 64;

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM_BASE: u64 = 2;

impl ParamSet for CellParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![
            self.w.as_slice().expect("standard layout"),
            self.u.as_slice().expect("standard layout"),
            self.b.as_slice().expect("standard layout"),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w.as_slice_mut().expect("standard layout"),
            self.u.as_slice_mut().expect("standard layout"),
            self.b.as_slice_mut().expect("standard layout"),
        ]
    }
}

/// Cell parameters plus the d × H projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub cell: CellParams,
    pub proj_w: Array2<f64>,
    pub proj_b: Array1<f64>,
}

impl ModelParams {
    pub fn zeros(kind: CellKind, input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        ModelParams {
            cell: CellParams::zeros(kind, input_dim, hidden_dim),
            proj_w: Array2::zeros((output_dim, hidden_dim)),
            proj_b: Array1::zeros(output_dim),
        }
    }
}

impl ParamSet for ModelParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.cell.tensors();
        t.push(self.proj_w.as_slice().expect("standard layout"));
        t.push(self.proj_b.as_slice().expect("standard layout"));
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.cell.tensors_mut();
        t.push(self.proj_w.as_slice_mut().expect("standard layout"));
        t.push(self.proj_b.as_slice_mut().expect("standard layout"));
        t
    }
}

/// A step whose gradient norm exceeded the clipping threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipEvent {
    pub epoch: usize,
    pub batch: usize,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedderModel {
    pub params: ModelParams,
    /// Fixed output map e = center + scale·(P·h̃ + b), set from the
    /// extremes before training so the trainable layer works at unit scale.
    pub out_center: Array1<f64>,
    pub out_scale: f64,
    pub dropout: f64,
    pub seed: u64,
    /// Eval-mode loss on the training set; index 0 is before the first
    /// epoch, index e after epoch e.
    pub training_log: Vec<f64>,
    pub clip_events: Vec<ClipEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub dropout: f64,
    pub hidden_dim: usize,
    pub cell_kind: CellKind,
    pub seed: u64,
    pub shuffle: bool,
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            learning_rate: 1e-2,
            batch_size: 64,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            dropout: 0.5,
            hidden_dim: 128,
            cell_kind: CellKind::Lstm,
            seed: 42,
            shuffle: true,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be > 0");
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.hidden_dim == 0 {
            return bad("hidden dimension must be >= 1");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0) {
            return bad("Adam requires 0 <= beta < 1 and eps > 0");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip norm must be > 0");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// Inverted-dropout mask: each unit is 0 with probability `p`, otherwise
/// `1/(1−p)`.
pub fn dropout_mask<R: Rng>(rng: &mut R, batch: usize, hidden: usize, p: f64) -> Array2<f64> {
    if p == 0.0 {
        return Array2::ones((batch, hidden));
    }
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_fn((batch, hidden), |_| if rng.random::<f64>() < p { 0.0 } else { keep })
}

/// Stacks instances into a B × τ × N tensor.
pub fn stack_instances<'a, I>(instances: I) -> Result<Array3<f64>>
where
    I: IntoIterator<Item = &'a MvtsInstance>,
{
    let views: Vec<ArrayView2<f64>> = instances.into_iter().map(|i| i.values.view()).collect();
    if views.is_empty() {
        return Err(Error::EmptyDataset("empty batch".into()));
    }
    ndarray::stack(Axis(0), &views).map_err(|_| Error::InvalidDataset("instances in a batch differ in shape".into()))
}

/// Everything the backward pass needs from one batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    cell: CellCache,
    mask: Option<Array2<f64>>,
    h_tilde: Array2<f64>,
    pub embeddings: Array2<f64>,
}

impl EmbedderModel {
    pub fn new(kind: CellKind, input_dim: usize, hidden_dim: usize, output_dim: usize, dropout: f64, seed: u64) -> Self {
        let mut rng = stream_rng(seed, INIT_STREAM, 0);
        let cell = CellParams::init(kind, input_dim, hidden_dim, &mut rng);
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        let proj_w = Array2::from_shape_fn((output_dim, hidden_dim), |_| rng.random_range(-bound..bound));
        EmbedderModel {
            params: ModelParams {
                cell,
                proj_w,
                proj_b: Array1::zeros(output_dim),
            },
            out_center: Array1::zeros(output_dim),
            out_scale: 1.0,
            dropout,
            seed,
            training_log: Vec::new(),
            clip_events: Vec::new(),
        }
    }

    pub fn cell_kind(&self) -> CellKind {
        self.params.cell.kind
    }

    pub fn input_dim(&self) -> usize {
        self.params.cell.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.params.cell.hidden_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.params.proj_w.nrows()
    }

    /// `mask = None` is eval mode; otherwise the B × H dropout mask.
    pub fn forward_batch(&self, x: &Array3<f64>, mask: Option<&Array2<f64>>) -> Result<ForwardCache> {
        let cell = self.params.cell.forward(x)?;
        let h = cell.h_final();
        let h_tilde = match mask {
            Some(m) if m.dim() != h.dim() => {
                return Err(Error::Config(format!("dropout mask {:?} does not match {:?}", m.dim(), h.dim())));
            }
            Some(m) => h * m,
            None => h.clone(),
        };
        let embeddings = (h_tilde.dot(&self.params.proj_w.t()) + &self.params.proj_b) * self.out_scale + &self.out_center;
        Ok(ForwardCache {
            cell,
            mask: mask.cloned(),
            h_tilde,
            embeddings,
        })
    }

    /// Embedding of one τ × N instance.
    pub fn model_forward(&self, instance: ArrayView2<f64>, mask: Option<&Array2<f64>>) -> Result<Array1<f64>> {
        if instance.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                id: String::new(),
                expected: (instance.nrows(), self.input_dim()),
                found: instance.dim(),
            });
        }
        let x = instance.insert_axis(Axis(0)).to_owned();
        Ok(self.forward_batch(&x, mask)?.embeddings.row(0).to_owned())
    }

    /// Eval-mode embeddings, one row per instance, chunked in parallel.
    pub fn embed_matrix(&self, instances: &[MvtsInstance]) -> Result<Array2<f64>> {
        let chunks = instances
            .par_chunks(EVAL_CHUNK)
            .enumerate()
            .map(|(k, chunk)| {
                if let Some(bad) = chunk.iter().find(|i| i.values.ncols() != self.input_dim()) {
                    return Err(Error::ShapeMismatch {
                        id: bad.id.clone(),
                        expected: (bad.values.nrows(), self.input_dim()),
                        found: bad.values.dim(),
                    });
                }
                let e = self.forward_batch(&stack_instances(chunk)?, None)?.embeddings;
                if e.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric {
                        epoch: 0,
                        batch: k,
                        message: "non-finite embedding".into(),
                    });
                }
                Ok(e)
            })
            .collect::<Result<Vec<_>>>()?;
        let views: Vec<_> = chunks.iter().map(|c| c.view()).collect();
        ndarray::concatenate(Axis(0), &views).map_err(|_| Error::EmptyDataset("nothing to embed".into()))
    }
}

pub fn class_sizes<'a, I: IntoIterator<Item = &'a str>>(labels: I) -> BTreeMap<String, usize> {
    let mut sizes = BTreeMap::new();
    for l in labels {
        *sizes.entry(l.to_string()).or_insert(0) += 1;
    }
    sizes
}

/// Correctly rounded sum of finite values (Shewchuk's algorithm), so a
/// class term is independent of member order and of duplication.
fn exact_sum(values: &[f64]) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for &v in values {
        let mut x = v;
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    let Some(mut n) = partials.len().checked_sub(1) else {
        return 0.0;
    };
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

/// Σ_c (1/n_c) Σ_{m∈c} ‖e_m − E_c‖², summed class by class in label order,
/// with `n_c` taken from `sizes`. Also returns ∂L/∂e.
fn grouped_loss(
    rows: ArrayView2<f64>,
    labels: &[&str],
    extremes: &ExtremeSet,
    sizes: &BTreeMap<String, usize>,
) -> Result<(f64, Array2<f64>)> {
    if rows.nrows() != labels.len() {
        return Err(Error::LengthMismatch {
            left: rows.nrows(),
            right: labels.len(),
        });
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (m, l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(m);
    }
    let mut grad = Array2::zeros(rows.raw_dim());
    let mut loss = 0.0;
    for (label, members) in groups {
        let target = &extremes.get(label)?.vector;
        if target.len() != rows.ncols() {
            return Err(Error::LengthMismatch {
                left: rows.ncols(),
                right: target.len(),
            });
        }
        let n_c = *sizes
            .get(label)
            .ok_or_else(|| Error::Labeling(format!("no class size for `{label}`")))? as f64;
        let mut terms = Vec::with_capacity(members.len());
        for &m in &members {
            let row = rows.row(m);
            let e = row.as_slice().map_or_else(|| row.to_vec(), <[f64]>::to_vec);
            terms.push(squared_distance(&e, target));
            for (j, g) in grad.row_mut(m).iter_mut().enumerate() {
                *g = 2.0 * (e[j] - target[j]) / n_c;
            }
        }
        loss += exact_sum(&terms) / n_c;
    }
    Ok((loss, grad))
}

/// Eq. 2 over a list of labelled embeddings, normalized by the class
/// counts within that list.
pub fn extreme_reconstruction_loss(embeddings: &[FeatureVector], extremes: &ExtremeSet) -> Result<f64> {
    if embeddings.is_empty() {
        return Ok(0.0);
    }
    let d = embeddings[0].dim();
    let mut rows = Array2::zeros((embeddings.len(), d));
    for (m, e) in embeddings.iter().enumerate() {
        if e.dim() != d {
            return Err(Error::LengthMismatch { left: d, right: e.dim() });
        }
        rows.row_mut(m).assign(&ndarray::aview1(&e.values));
    }
    let labels: Vec<&str> = embeddings.iter().map(|e| e.label.as_str()).collect();
    let sizes = class_sizes(labels.iter().copied());
    Ok(grouped_loss(rows.view(), &labels, extremes, &sizes)?.0)
}

/// Batch loss Σ_m (1/|C_c(m)|)·‖e_m − E_c(m)‖² for a cached forward pass.
pub fn batch_loss(
    cache: &ForwardCache,
    labels: &[&str],
    extremes: &ExtremeSet,
    sizes: &BTreeMap<String, usize>,
) -> Result<f64> {
    Ok(grouped_loss(cache.embeddings.view(), labels, extremes, sizes)?.0)
}

/// Batch loss and its exact gradient for every parameter tensor.
pub fn model_backward(
    model: &EmbedderModel,
    cache: &ForwardCache,
    labels: &[&str],
    extremes: &ExtremeSet,
    sizes: &BTreeMap<String, usize>,
) -> Result<(f64, ModelParams)> {
    if labels.len() != cache.cell.batch_size() {
        return Err(Error::Config(format!(
            "cache/batch mismatch: {} cached instances, {} labels",
            cache.cell.batch_size(),
            labels.len()
        )));
    }
    let (loss, de) = grouped_loss(cache.embeddings.view(), labels, extremes, sizes)?;
    let de = de * model.out_scale;
    let proj_w = de.t().dot(&cache.h_tilde);
    let proj_b = de.sum_axis(Axis(0));
    let mut dh = de.dot(&model.params.proj_w);
    if let Some(mask) = &cache.mask {
        dh *= mask;
    }
    let cell = model.params.cell.backward(&cache.cell, &dh)?;
    Ok((loss, ModelParams { cell, proj_w, proj_b }))
}

fn check_training_inputs(data: &LabeledDataset, extremes: &ExtremeSet) -> Result<()> {
    for class in data.classes() {
        extremes.get(class)?;
    }
    if extremes.dim() == 0 {
        return Err(Error::Config("extremes have dimension 0".into()));
    }
    if let Some(bad) = data.instances().iter().find(|i| !i.is_complete()) {
        return Err(Error::InvalidDataset(format!(
            "instance `{}` has missing values; impute before training",
            bad.id
        )));
    }
    Ok(())
}

/// Centroid of the class extremes and their RMS distance to it (1 when
/// the extremes coincide).
pub fn output_normalization(extremes: &ExtremeSet) -> (Array1<f64>, f64) {
    let mut center = Array1::zeros(extremes.dim());
    for e in extremes.by_class.values() {
        center += &ArrayView1::from(e.vector.as_slice());
    }
    center /= extremes.len() as f64;
    let spread = extremes
        .by_class
        .values()
        .map(|e| squared_distance(&e.vector, center.as_slice().expect("standard layout")))
        .sum::<f64>()
        / extremes.len() as f64;
    let scale = spread.sqrt();
    (center, if scale > 0.0 && scale.is_finite() { scale } else { 1.0 })
}

pub fn train_embedder(data: &LabeledDataset, extremes: &ExtremeSet, cfg: &TrainConfig) -> Result<EmbedderModel> {
    cfg.validate()?;
    check_training_inputs(data, extremes)?;
    let instances = data.instances();
    let labels: Vec<&str> = instances.iter().map(|i| i.label.as_str()).collect();
    let sizes = class_sizes(labels.iter().copied());
    let (_, n) = data.shape();
    let mut model = EmbedderModel::new(cfg.cell_kind, n, cfg.hidden_dim, extremes.dim(), cfg.dropout, cfg.seed);
    (model.out_center, model.out_scale) = output_normalization(extremes);
    let eval_loss = |model: &EmbedderModel, epoch: usize| -> Result<f64> {
        let e = model.embed_matrix(instances)?;
        let loss = grouped_loss(e.view(), &labels, extremes, &sizes)?.0;
        if !loss.is_finite() {
            return Err(Error::TrainingFailure {
                epoch,
                message: format!("loss is {loss}"),
            });
        }
        Ok(loss)
    };
    model.training_log.push(eval_loss(&model, 0)?);
    let adam = cfg.adam();
    let mut state = AdamState::new(&model.params);
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut shuffle_rng = stream_rng(cfg.seed, SHUFFLE_STREAM, 0);
    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let x = stack_instances(idx.iter().map(|&i| &instances[i]))?;
            let mut mask_rng = stream_rng(cfg.seed, DROPOUT_STREAM_BASE + epoch as u64, batch as u64);
            let mask = dropout_mask(&mut mask_rng, idx.len(), cfg.hidden_dim, cfg.dropout);
            let cache = model.forward_batch(&x, Some(&mask))?;
            let batch_labels: Vec<&str> = idx.iter().map(|&i| labels[i]).collect();
            let (loss, mut grads) = model_backward(&model, &cache, &batch_labels, extremes, &sizes)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Numeric {
                    epoch,
                    batch,
                    message: format!("non-finite loss or gradient (loss = {loss})"),
                });
            }
            if let Some(norm) = clip_global_norm(&mut grads, cfg.clip_norm) {
                model.clip_events.push(ClipEvent { epoch, batch, norm });
            }
            adam_step(&mut model.params, &grads, &mut state, &adam)?;
        }
        model.training_log.push(eval_loss(&model, epoch)?);
    }
    Ok(model)
}

/// Eval-mode embedding of every instance, in dataset order.
pub fn embed_dataset(model: &EmbedderModel, data: &LabeledDataset) -> Result<Vec<FeatureVector>> {
    let e = model.embed_matrix(data.instances())?;
    Ok(data
        .instances()
        .iter()
        .zip(e.rows())
        .map(|(inst, row)| FeatureVector::new(inst.id.clone(), inst.label.clone(), row.to_vec()))
        .collect())
}

/// JSON checkpoint; parameter arrays are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub cell_kind: CellKind,
    pub gate_order: Vec<String>,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub b: Vec<f64>,
    pub proj_w: Vec<f64>,
    pub proj_b: Vec<f64>,
    pub out_center: Vec<f64>,
    pub out_scale: f64,
    pub dropout: f64,
    pub seed: u64,
    pub training_log: Vec<f64>,
    pub clip_events: Vec<ClipEvent>,
    pub extremes: ExtremeSet,
}

impl Checkpoint {
    pub fn new(model: &EmbedderModel, extremes: &ExtremeSet) -> Self {
        let t = model.params.tensors();
        Checkpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            cell_kind: model.cell_kind(),
            gate_order: model.cell_kind().gate_names().iter().map(|s| s.to_string()).collect(),
            input_dim: model.input_dim(),
            hidden_dim: model.hidden_dim(),
            output_dim: model.output_dim(),
            w: t[0].to_vec(),
            u: t[1].to_vec(),
            b: t[2].to_vec(),
            proj_w: t[3].to_vec(),
            proj_b: t[4].to_vec(),
            out_center: model.out_center.to_vec(),
            out_scale: model.out_scale,
            dropout: model.dropout,
            seed: model.seed,
            training_log: model.training_log.clone(),
            clip_events: model.clip_events.clone(),
            extremes: extremes.clone(),
        }
    }

    pub fn into_model(self) -> Result<(EmbedderModel, ExtremeSet)> {
        if self.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint schema_version {}",
                self.schema_version
            )));
        }
        let (n, h, d) = (self.input_dim, self.hidden_dim, self.output_dim);
        let g = self.cell_kind.gate_count() * h;
        let shape_err = |what: &str| Error::InvalidDataset(format!("checkpoint tensor `{what}` has the wrong size"));
        let mat = |v: Vec<f64>, r: usize, c: usize, what: &str| {
            Array2::from_shape_vec((r, c), v).map_err(|_| shape_err(what))
        };
        if self.b.len() != g || self.proj_b.len() != d || self.out_center.len() != d {
            return Err(shape_err("bias"));
        }
        let params = ModelParams {
            cell: CellParams {
                kind: self.cell_kind,
                w: mat(self.w, g, n, "w")?,
                u: mat(self.u, g, h, "u")?,
                b: Array1::from(self.b),
            },
            proj_w: mat(self.proj_w, d, h, "proj_w")?,
            proj_b: Array1::from(self.proj_b),
        };
        if !params.is_finite() || !self.out_scale.is_finite() || self.out_center.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("checkpoint holds non-finite parameters".into()));
        }
        let model = EmbedderModel {
            params,
            out_center: Array1::from(self.out_center),
            out_scale: self.out_scale,
            dropout: self.dropout,
            seed: self.seed,
            training_log: self.training_log,
            clip_events: self.clip_events,
        };
        Ok((model, self.extremes))
    }
}

pub fn save_checkpoint(model: &EmbedderModel, extremes: &ExtremeSet, path: &Path) -> Result<()> {
    write_json(path, &Checkpoint::new(model, extremes))
}

pub fn load_checkpoint(path: &Path) -> Result<(EmbedderModel, ExtremeSet)> {
    read_json::<Checkpoint>(path)?.into_model()
}

/// Mean distance of each embedding to its own class extreme and to the
/// nearest other class extreme, per class.
pub fn extreme_distances(embeddings: &[FeatureVector], extremes: &ExtremeSet) -> Result<BTreeMap<String, (f64, f64)>> {
    let mut acc: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
    for e in embeddings {
        let own = squared_distance(&e.values, &extremes.get(&e.label)?.vector).sqrt();
        let other = extremes
            .by_class
            .iter()
            .filter(|(c, _)| **c != e.label)
            .map(|(_, x)| squared_distance(&e.values, &x.vector).sqrt())
            .fold(f64::INFINITY, f64::min);
        let slot = acc.entry(e.label.clone()).or_insert((0.0, 0.0, 0));
        slot.0 += own;
        slot.1 += other;
        slot.2 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|(c, (own, other, k))| (c, (own / k as f64, other / k as f64)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extremes::Extreme;

    fn extremes(pairs: &[(&str, &[f64])]) -> ExtremeSet {
        ExtremeSet {
            by_class: pairs
                .iter()
                .map(|(c, v)| {
                    (
                        c.to_string(),
                        Extreme {
                            id: format!("x{c}"),
                            distance: 1.0,
                            vector: v.to_vec(),
                        },
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn exact_sum_is_correctly_rounded() {
        assert_eq!(exact_sum(&[1e16, 1.0, -1e16]), 1.0);
        assert_eq!(exact_sum(&[0.1; 10]), 1.0);
        assert_eq!(exact_sum(&[]), 0.0);
        let v = [0.3, 1e-17, 2.5, 7.1];
        let twice: Vec<f64> = v.iter().chain(&v).copied().collect();
        assert_eq!(exact_sum(&twice), 2.0 * exact_sum(&v));
    }

    #[test]
    fn loss_hand_fixture() {
        let ex = extremes(&[("1", &[0.0, 0.0]), ("2", &[2.0, 2.0])]);
        let emb = [
            FeatureVector::new("a", "1", vec![1.0, 0.0]),
            FeatureVector::new("b", "1", vec![0.0, 1.0]),
            FeatureVector::new("c", "2", vec![2.0, 2.0]),
        ];
        assert_eq!(extreme_reconstruction_loss(&emb, &ex).unwrap(), 1.0);
        let mut doubled = emb.to_vec();
        doubled.extend(emb[..2].iter().cloned());
        assert_eq!(extreme_reconstruction_loss(&doubled, &ex).unwrap(), 1.0);
        let at = [FeatureVector::new("a", "1", vec![0.0, 0.0])];
        assert_eq!(extreme_reconstruction_loss(&at, &ex).unwrap(), 0.0);
        let unknown = [FeatureVector::new("a", "3", vec![0.0, 0.0])];
        assert!(extreme_reconstruction_loss(&unknown, &ex).is_err());
    }

    #[test]
    fn eval_zero_cell_gives_bias() {
        let mut m = EmbedderModel::new(CellKind::Lstm, 3, 4, 5, 0.5, 1);
        m.params.cell = CellParams::zeros(CellKind::Lstm, 3, 4);
        m.params.proj_b = Array1::from(vec![0.1, 0.2, 0.3, 0.4, 0.5]);
        let x = Array2::from_elem((7, 3), 2.0);
        assert_eq!(m.model_forward(x.view(), None).unwrap(), m.params.proj_b);
    }

    #[test]
    fn no_dropout_train_equals_eval() {
        let m = EmbedderModel::new(CellKind::Gru, 2, 3, 4, 0.0, 9);
        let x = Array2::from_shape_fn((5, 2), |(t, n)| (t as f64 * 0.3 - n as f64).sin());
        let mask = dropout_mask(&mut stream_rng(1, 2, 3), 1, 3, 0.0);
        assert_eq!(
            m.model_forward(x.view(), Some(&mask)).unwrap(),
            m.model_forward(x.view(), None).unwrap()
        );
    }

    #[test]
    fn dropout_mask_is_reproducible() {
        let a = dropout_mask(&mut stream_rng(5, 2, 0), 4, 16, 0.5);
        let b = dropout_mask(&mut stream_rng(5, 2, 0), 4, 16, 0.5);
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| v == 0.0 || v == 2.0));
        assert!(a.iter().any(|&v| v == 0.0) && a.iter().any(|&v| v == 2.0));
    }

    #[test]
    fn projection_bias_gradient_by_hand() {
        let m = EmbedderModel::new(CellKind::Rnn, 2, 3, 2, 0.0, 4);
        let x = Array3::from_shape_fn((1, 4, 2), |(_, t, n)| (t + n) as f64 * 0.1);
        let ex = extremes(&[("A", &[1.0, -1.0]), ("B", &[0.0, 0.0])]);
        let sizes = BTreeMap::from([("A".to_string(), 2), ("B".to_string(), 5)]);
        let cache = m.forward_batch(&x, None).unwrap();
        let (_, g) = model_backward(&m, &cache, &["A"], &ex, &sizes).unwrap();
        let e = cache.embeddings.row(0);
        assert!((g.proj_b[0] - 2.0 * 0.5 * (e[0] - 1.0)).abs() < 1e-15);
        assert!((g.proj_b[1] - 2.0 * 0.5 * (e[1] + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn zero_loss_gives_zero_gradients() {
        for kind in CellKind::ALL {
            let m = EmbedderModel::new(kind, 2, 3, 2, 0.0, 4);
            let x = Array3::from_shape_fn((2, 4, 2), |(b, t, n)| (b + t + n) as f64 * 0.1);
            let cache = m.forward_batch(&x, None).unwrap();
            let e = &cache.embeddings;
            let ex = extremes(&[("A", &e.row(0).to_vec()), ("B", &e.row(1).to_vec())]);
            let sizes = class_sizes(["A", "B"]);
            let (loss, g) = model_backward(&m, &cache, &["A", "B"], &ex, &sizes).unwrap();
            assert_eq!(loss, 0.0);
            assert!(g.tensors().iter().all(|t| t.iter().all(|v| v.abs() < 1e-12)));
        }
    }

    #[test]
    fn backward_rejects_mismatched_labels() {
        let m = EmbedderModel::new(CellKind::Rnn, 2, 3, 2, 0.0, 4);
        let cache = m.forward_batch(&Array3::zeros((2, 3, 2)), None).unwrap();
        let ex = extremes(&[("A", &[0.0, 0.0])]);
        assert!(model_backward(&m, &cache, &["A"], &ex, &class_sizes(["A"])).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { dropout: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
