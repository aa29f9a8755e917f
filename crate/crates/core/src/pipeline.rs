//! End-to-end runs: preprocess → features → extremes → embedder → embed →
//! head → predict → metrics, and the baseline runs sharing the same
//! preprocessing and evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{filter_label_categories, preprocess, LabelScheme, LabeledDataset, DEFAULT_IMPUTE_K};
use crate::embedder::{embed_dataset, save_checkpoint, train_embedder, TrainConfig};
use crate::error::{Error, Result};
use crate::extremes::derive_extremes;
use crate::features::{bank_by_name, extract_dataset_features, FeatureVector};
use crate::heads::rocket::DEFAULT_NUM_KERNELS;
use crate::heads::{
    fit_knn, fit_logistic, flatten_mvts, last_timestamp, save_head, train_seq_classifier, write_predictions_csv,
    Head, LogisticConfig, Prediction, PredictionSet, RocketTransform, argmax,
};
use crate::ingest::{write_features_csv, write_json};
use crate::metrics::{binary_report, macro_one_vs_rest, render_table, MacroReport, MetricReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum HeadConfig {
    Lr(LogisticConfig),
    Knn { k: usize },
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig::Lr(LogisticConfig::default())
    }
}

impl HeadConfig {
    pub fn fit(&self, train: &[FeatureVector]) -> Result<Head> {
        let x: Vec<&[f64]> = train.iter().map(|v| v.values.as_slice()).collect();
        let y: Vec<&str> = train.iter().map(|v| v.label.as_str()).collect();
        match self {
            HeadConfig::Lr(cfg) => Ok(Head::Lr(fit_logistic(&x, &y, cfg)?)),
            HeadConfig::Knn { k } => Ok(Head::Knn(fit_knn(&x, &y, *k)?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub bank: String,
    pub train: TrainConfig,
    pub head: HeadConfig,
    pub positive_class: String,
    /// Train-side category filter; `None` keeps everything.
    pub keep_categories: Option<BTreeSet<String>>,
    pub impute_k: usize,
    pub seed: u64,
    pub rocket_kernels: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            bank: "c22".into(),
            train: TrainConfig::default(),
            head: HeadConfig::default(),
            positive_class: "F".into(),
            keep_categories: None,
            impute_k: DEFAULT_IMPUTE_K,
            seed: 42,
            rocket_kernels: DEFAULT_NUM_KERNELS,
        }
    }
}

impl PipelineConfig {
    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train
        }
    }

    /// The category set applied to the training split: the configured
    /// categories plus every category the scheme maps to the positive
    /// class, so the filter can never remove the minority class.
    pub fn effective_keep(&self, scheme: Option<&LabelScheme>) -> Option<BTreeSet<String>> {
        let mut keep = self.keep_categories.clone()?;
        if let Some(s) = scheme {
            keep.extend(
                s.mapping
                    .iter()
                    .filter(|(_, label)| **label == self.positive_class)
                    .map(|(cat, _)| cat.clone()),
            );
        }
        Some(keep)
    }
}

/// Metrics for one evaluated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: MetricReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_report: Option<MacroReport>,
}

/// Binary report against `positive_class`, plus a macro one-vs-rest
/// report when the head scores more than two classes.
pub fn evaluate(predictions: &PredictionSet, positive_class: &str) -> Result<Evaluation> {
    let scores = predictions.class_scores(positive_class)?;
    let report = binary_report(&predictions.truths(), &predictions.preds(), &scores, positive_class)?;
    let macro_report = if predictions.classes.len() > 2 {
        Some(macro_one_vs_rest(
            &predictions.truths(),
            &predictions.preds(),
            &predictions.classes,
            &predictions.score_matrix(),
        )?)
    } else {
        None
    };
    Ok(Evaluation { report, macro_report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub status: String,
    pub completed_stages: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub artifacts: Vec<String>,
    pub config: PipelineConfig,
}

/// Writes artifacts when an output directory is set and keeps the run
/// manifest up to date.
struct Recorder<'a> {
    out: Option<&'a Path>,
    manifest: RunManifest,
}

impl<'a> Recorder<'a> {
    fn new(out: Option<&'a Path>, cfg: &PipelineConfig) -> Self {
        Recorder {
            out,
            manifest: RunManifest {
                status: "running".into(),
                completed_stages: Vec::new(),
                failed_stage: None,
                error: None,
                artifacts: Vec::new(),
                config: cfg.clone(),
            },
        }
    }

    fn stage<T>(&mut self, name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        match f() {
            Ok(v) => {
                self.manifest.completed_stages.push(name.to_string());
                Ok(v)
            }
            Err(e) => {
                self.manifest.status = "partial".into();
                self.manifest.failed_stage = Some(name.to_string());
                self.manifest.error = Some(e.to_string());
                self.flush()?;
                Err(Error::Stage {
                    stage: name,
                    source: Box::new(e),
                })
            }
        }
    }

    fn artifact(&mut self, name: &str, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        if let Some(dir) = self.out {
            write(&dir.join(name))?;
            self.manifest.artifacts.push(name.to_string());
        }
        Ok(())
    }

    fn flush(&self) -> Result<()> {
        match self.out {
            Some(dir) => write_json(&dir.join("run.json"), &self.manifest),
            None => Ok(()),
        }
    }

    fn finish(mut self) -> Result<()> {
        self.manifest.status = "complete".into();
        self.flush()
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub evaluation: Evaluation,
    pub predictions: PredictionSet,
    pub out_dir: Option<PathBuf>,
}

fn preprocess_pair(
    rec: &mut Recorder<'_>,
    train: &LabeledDataset,
    test: &LabeledDataset,
    cfg: &PipelineConfig,
    scheme: Option<&LabelScheme>,
) -> Result<(LabeledDataset, LabeledDataset)> {
    rec.stage("preprocess", || {
        if train.shape().1 != test.shape().1 {
            return Err(Error::ShapeMismatch {
                id: "test split".into(),
                expected: train.shape(),
                found: test.shape(),
            });
        }
        let filtered = match cfg.effective_keep(scheme) {
            Some(keep) => filter_label_categories(train, &keep)?,
            None => train.clone(),
        };
        Ok((preprocess(&filtered, cfg.impute_k)?, preprocess(test, cfg.impute_k)?))
    })
}

fn predictions_from_scores(head_classes: &[String], ids: &LabeledDataset, scores: Vec<Vec<f64>>) -> PredictionSet {
    PredictionSet {
        classes: head_classes.to_vec(),
        rows: ids
            .instances()
            .iter()
            .zip(scores)
            .map(|(inst, s)| Prediction {
                id: inst.id.clone(),
                true_label: inst.label.clone(),
                pred_label: head_classes[argmax(&s)].clone(),
                scores: s,
            })
            .collect(),
    }
}

fn finish_run(
    mut rec: Recorder<'_>,
    name: &str,
    predictions: PredictionSet,
    positive_class: &str,
) -> Result<PipelineOutcome> {
    let evaluation = rec.stage("eval", || evaluate(&predictions, positive_class))?;
    rec.artifact("predictions.csv", |p| write_predictions_csv(&predictions, p))?;
    rec.artifact("report.json", |p| write_json(p, &evaluation))?;
    rec.artifact("report.txt", |p| {
        std::fs::write(p, render_table(&[(name.to_string(), evaluation.report.clone())])).map_err(|e| Error::io(p, e))
    })?;
    let out_dir = rec.out.map(Path::to_path_buf);
    rec.finish()?;
    Ok(PipelineOutcome {
        evaluation,
        predictions,
        out_dir,
    })
}

/// The full method. Artifacts go to `out` when given.
pub fn run_pipeline(
    train: &LabeledDataset,
    test: &LabeledDataset,
    cfg: &PipelineConfig,
    scheme: Option<&LabelScheme>,
    out: Option<&Path>,
) -> Result<PipelineOutcome> {
    let mut rec = Recorder::new(out, cfg);
    let (train, test) = preprocess_pair(&mut rec, train, test, cfg, scheme)?;
    let features = rec.stage("features", || extract_dataset_features(&train, bank_by_name(&cfg.bank)?.as_ref()))?;
    rec.artifact("features_train.csv", |p| write_features_csv(&features, p))?;
    let extremes = rec.stage("extremes", || derive_extremes(&features))?;
    rec.artifact("extremes.json", |p| write_json(p, &extremes))?;
    let model = rec.stage("train", || train_embedder(&train, &extremes, &cfg.train_config()))?;
    rec.artifact("model.json", |p| save_checkpoint(&model, &extremes, p))?;
    let (emb_train, emb_test) = rec.stage("embed", || Ok((embed_dataset(&model, &train)?, embed_dataset(&model, &test)?)))?;
    rec.artifact("embeddings_train.csv", |p| write_features_csv(&emb_train, p))?;
    rec.artifact("embeddings_test.csv", |p| write_features_csv(&emb_test, p))?;
    let head = rec.stage("fit-head", || cfg.head.fit(&emb_train))?;
    rec.artifact("head.json", |p| save_head(&head, p))?;
    let predictions = rec.stage("predict", || {
        Ok(PredictionSet {
            classes: head.classes().to_vec(),
            rows: head.predict(&emb_test)?,
        })
    })?;
    finish_run(rec, "excon", predictions, &cfg.positive_class)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Mvts2v,
    Lpvv,
    Seq,
    Rocket,
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineKind::Mvts2v => "mvts2v",
            BaselineKind::Lpvv => "lpvv",
            BaselineKind::Seq => "seq",
            BaselineKind::Rocket => "rocket",
        })
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mvts2v" => Ok(BaselineKind::Mvts2v),
            "lpvv" => Ok(BaselineKind::Lpvv),
            "seq" => Ok(BaselineKind::Seq),
            "rocket" => Ok(BaselineKind::Rocket),
            other => Err(Error::Config(format!(
                "unknown baseline `{other}` (expected mvts2v, lpvv, seq or rocket)"
            ))),
        }
    }
}

fn vectors(data: &LabeledDataset, rows: Vec<Vec<f64>>) -> Vec<FeatureVector> {
    data.instances()
        .iter()
        .zip(rows)
        .map(|(i, v)| FeatureVector::new(i.id.clone(), i.label.clone(), v))
        .collect()
}

/// One of the comparison methods, with the same preprocessing and metrics
/// as [`run_pipeline`].
pub fn run_baseline(
    kind: BaselineKind,
    train: &LabeledDataset,
    test: &LabeledDataset,
    cfg: &PipelineConfig,
    scheme: Option<&LabelScheme>,
    out: Option<&Path>,
) -> Result<PipelineOutcome> {
    let mut rec = Recorder::new(out, cfg);
    let (train, test) = preprocess_pair(&mut rec, train, test, cfg, scheme)?;
    let represent = |data: &LabeledDataset, f: &dyn Fn(&crate::data::MvtsInstance) -> Vec<f64>| {
        vectors(data, data.instances().iter().map(f).collect())
    };
    let predictions = match kind {
        BaselineKind::Seq => {
            let model = rec.stage("train", || train_seq_classifier(&train, &cfg.train_config()))?;
            rec.artifact("model.json", |p| write_json(p, &model.to_file()))?;
            let scores = rec.stage("predict", || model.predict_proba(test.instances()))?;
            predictions_from_scores(&model.classes, &test, scores)
        }
        _ => {
            let (tr, te): (Vec<FeatureVector>, Vec<FeatureVector>) = rec.stage("features", || match kind {
                BaselineKind::Mvts2v => Ok((represent(&train, &flatten_mvts), represent(&test, &flatten_mvts))),
                BaselineKind::Lpvv => Ok((represent(&train, &last_timestamp), represent(&test, &last_timestamp))),
                _ => {
                    let (tau, n) = train.shape();
                    let rocket = RocketTransform::new(cfg.rocket_kernels, tau, n, cfg.seed)?;
                    let (a, _) = rocket.transform_all(train.instances())?;
                    let (b, _) = rocket.transform_all(test.instances())?;
                    Ok((vectors(&train, a), vectors(&test, b)))
                }
            })?;
            rec.artifact("features_train.csv", |p| write_features_csv(&tr, p))?;
            let head = rec.stage("fit-head", || cfg.head.fit(&tr))?;
            rec.artifact("head.json", |p| save_head(&head, p))?;
            rec.stage("predict", || {
                Ok(PredictionSet {
                    classes: head.classes().to_vec(),
                    rows: head.predict(&te)?,
                })
            })?
        }
    };
    finish_run(rec, &kind.to_string(), predictions, &cfg.positive_class)
}

/// Majority-class predictions with constant scores, the reference point
/// for skill scores.
pub fn majority_predictions(train: &LabeledDataset, test: &LabeledDataset) -> PredictionSet {
    let counts: BTreeMap<String, usize> = train.class_counts();
    let classes: Vec<String> = counts.keys().cloned().collect();
    let majority = counts
        .iter()
        .fold(None::<(&String, usize)>, |best, (c, &n)| match best {
            Some((_, m)) if m >= n => best,
            _ => Some((c, n)),
        })
        .map(|(c, _)| c.clone())
        .expect("non-empty dataset");
    let scores: Vec<f64> = classes.iter().map(|c| if *c == majority { 1.0 } else { 0.0 }).collect();
    predictions_from_scores(&classes, test, vec![scores; test.len()])
}
