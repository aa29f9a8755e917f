//! Downstream classifiers on learned embeddings, the baseline
//! representations they are compared against, and the shared head and
//! prediction file formats.

pub mod knn;
pub mod logistic;
pub mod rocket;
pub mod seq;

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

pub use knn::{fit_knn, knn_predict, KnnModel};
pub use logistic::{fit_logistic, predict_logistic, LogisticConfig, LogisticMode, LogisticModel};
pub use rocket::{ppv_and_max, RocketKernel, RocketTransform};
pub use seq::{train_seq_classifier, SeqClassifier};

use crate::data::MvtsInstance;
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::ingest::{format_f64, read_json, write_json};

pub const HEAD_SCHEMA_VERSION: u32 = 1;

/// Row-major (time-major) flattening: length τ·N.
pub fn flatten_mvts(instance: &MvtsInstance) -> Vec<f64> {
    instance.values.iter().copied().collect()
}

/// Inverse of [`flatten_mvts`].
pub fn unflatten_mvts(flat: &[f64], shape: (usize, usize)) -> Result<Array2<f64>> {
    Array2::from_shape_vec(shape, flat.to_vec()).map_err(|_| Error::LengthMismatch {
        left: shape.0 * shape.1,
        right: flat.len(),
    })
}

/// Row τ−1.
pub fn last_timestamp(instance: &MvtsInstance) -> Vec<f64> {
    let tau = instance.values.nrows();
    instance.values.row(tau - 1).to_vec()
}

/// Per-dimension z-scoring with training statistics (population std);
/// zero-variance dimensions map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Array2<f64>) -> Self {
        let m = x.nrows() as f64;
        let mean: Array1<f64> = x.sum_axis(ndarray::Axis(0)) / m;
        let std = x
            .columns()
            .into_iter()
            .zip(mean.iter())
            .map(|(col, mu)| (col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / m).sqrt())
            .collect();
        Standardizer {
            mean: mean.to_vec(),
            std,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::LengthMismatch {
                left: self.dim(),
                right: x.ncols(),
            });
        }
        let mut out = x.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (mu, sd) = (self.mean[j], self.std[j]);
            col.mapv_inplace(|v| if sd > 0.0 { (v - mu) / sd } else { 0.0 });
        }
        Ok(out)
    }
}

/// Stacks equal-length rows into a matrix.
pub fn to_matrix<R: AsRef<[f64]>>(rows: &[R]) -> Result<Array2<f64>> {
    let Some(first) = rows.first() else {
        return Err(Error::EmptyDataset("no input vectors".into()));
    };
    let d = first.as_ref().len();
    let mut out = Array2::zeros((rows.len(), d));
    for (i, r) in rows.iter().enumerate() {
        let r = r.as_ref();
        if r.len() != d {
            return Err(Error::LengthMismatch { left: d, right: r.len() });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!("input row {i} is not finite")));
        }
        out.row_mut(i).assign(&ndarray::aview1(r));
    }
    Ok(out)
}

/// Index of the largest entry; ties go to the smallest index, which is the
/// lexicographically smallest label because classes are kept sorted.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// A fitted downstream classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Head {
    Lr(LogisticModel),
    Knn(KnnModel),
}

impl Head {
    pub fn classes(&self) -> &[String] {
        match self {
            Head::Lr(m) => &m.classes,
            Head::Knn(m) => &m.classes,
        }
    }

    /// Per-class scores in `classes()` order: probabilities for LR, vote
    /// fractions for kNN.
    pub fn scores(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        match self {
            Head::Lr(m) => predict_logistic(m, x),
            Head::Knn(m) => Ok(knn_predict(m, x)?.1),
        }
    }

    pub fn predict(&self, vectors: &[FeatureVector]) -> Result<Vec<Prediction>> {
        let x: Vec<Vec<f64>> = vectors.iter().map(|v| v.values.clone()).collect();
        let scores = self.scores(&x)?;
        Ok(vectors
            .iter()
            .zip(scores)
            .map(|(v, s)| Prediction {
                id: v.id.clone(),
                true_label: v.label.clone(),
                pred_label: self.classes()[argmax(&s)].clone(),
                scores: s,
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HeadFile {
    schema_version: u32,
    #[serde(flatten)]
    head: Head,
}

pub fn save_head(head: &Head, path: &Path) -> Result<()> {
    write_json(
        path,
        &HeadFile {
            schema_version: HEAD_SCHEMA_VERSION,
            head: head.clone(),
        },
    )
}

pub fn load_head(path: &Path) -> Result<Head> {
    let file: HeadFile = read_json(path)?;
    if file.schema_version != HEAD_SCHEMA_VERSION {
        return Err(Error::Config(format!("unsupported head schema_version {}", file.schema_version)));
    }
    Ok(file.head)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub true_label: String,
    pub pred_label: String,
    /// One score per class, in class order.
    pub scores: Vec<f64>,
}

/// Predictions with their class order.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub classes: Vec<String>,
    pub rows: Vec<Prediction>,
}

impl PredictionSet {
    pub fn truths(&self) -> Vec<&str> {
        self.rows.iter().map(|p| p.true_label.as_str()).collect()
    }

    pub fn preds(&self) -> Vec<&str> {
        self.rows.iter().map(|p| p.pred_label.as_str()).collect()
    }

    /// Scores of `class`, or an error if the class is unknown to the head.
    pub fn class_scores(&self, class: &str) -> Result<Vec<f64>> {
        let k = self
            .classes
            .iter()
            .position(|c| c == class)
            .ok_or_else(|| Error::Labeling(format!("class `{class}` is not scored by this head")))?;
        Ok(self.rows.iter().map(|p| p.scores[k]).collect())
    }

    pub fn score_matrix(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|p| p.scores.clone()).collect()
    }
}

/// Header `id,true_label,pred_label,score_<class>...`.
pub fn write_predictions_csv(set: &PredictionSet, path: &Path) -> Result<()> {
    let mut text = String::from("id,true_label,pred_label");
    for c in &set.classes {
        text.push_str(",score_");
        text.push_str(c);
    }
    text.push('\n');
    for p in &set.rows {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let row = [p.id.clone(), p.true_label.clone(), p.pred_label.clone()]
            .into_iter()
            .chain(p.scores.iter().map(|&s| format_f64(s)));
        w.write_record(row).expect("in-memory write");
        text.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields"));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_predictions_csv(path: &Path) -> Result<PredictionSet> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    if header.len() < 3 || &header[0] != "id" || &header[1] != "true_label" || &header[2] != "pred_label" {
        return Err(Error::parse(path, 1, "header must start with `id,true_label,pred_label`"));
    }
    let classes = header
        .iter()
        .skip(3)
        .map(|h| {
            h.strip_prefix("score_")
                .map(String::from)
                .ok_or_else(|| Error::parse(path, 1, format!("unexpected column `{h}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(Error::parse(path, line, "wrong number of fields"));
        }
        let scores = record
            .iter()
            .skip(3)
            .map(|f| f.parse::<f64>().map_err(|_| Error::parse(path, line, format!("`{f}` is not a number"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(Prediction {
            id: record[0].to_string(),
            true_label: record[1].to_string(),
            pred_label: record[2].to_string(),
            scores,
        });
    }
    Ok(PredictionSet { classes, rows })
}
