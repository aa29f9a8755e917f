//! File formats (manifest JSON, per-instance CSV, feature CSV), window
//! slicing and the seeded synthetic imbalanced generator.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::{LabelScheme, LabeledDataset, MvtsInstance};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::rng::stream_rng;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    /// (τ, N)
    pub shape: (usize, usize),
    pub channel_names: Vec<String>,
    pub entries: Vec<ManifestEntry>,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line() as u64, e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    create_parent(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

/// 17 significant digits; NaN marks a missing entry.
pub fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn parse_cell(field: &str) -> std::result::Result<f64, std::num::ParseFloatError> {
    let f = field.trim();
    if f.is_empty() || f.eq_ignore_ascii_case("nan") {
        Ok(f64::NAN)
    } else {
        f.parse()
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    create_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .flexible(true)
        .from_writer(file))
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line());
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

fn csv_reader(path: &Path, has_headers: bool) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .flexible(true)
        .from_reader(file))
}

/// Reads one τ × N instance file (no header, one row per timestamp).
pub fn read_instance_csv(path: &Path, id: &str, shape: (usize, usize)) -> Result<Array2<f64>> {
    let mut reader = csv_reader(path, false)?;
    let mut rows: Vec<f64> = Vec::with_capacity(shape.0 * shape.1);
    let mut n_rows = 0;
    let mut width = shape.1;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != shape.1 {
            width = record.len();
        }
        for field in record.iter() {
            let v = parse_cell(field)
                .map_err(|_| Error::parse(path, line, format!("`{field}` is not a number")))?;
            rows.push(v);
        }
        n_rows += 1;
    }
    if n_rows != shape.0 || width != shape.1 || rows.len() != shape.0 * shape.1 {
        return Err(Error::ShapeMismatch {
            id: id.to_string(),
            expected: shape,
            found: (n_rows, width),
        });
    }
    Ok(Array2::from_shape_vec(shape, rows).expect("checked shape"))
}

pub fn write_instance_csv(path: &Path, values: &Array2<f64>) -> Result<()> {
    let mut w = csv_writer(path)?;
    for row in values.rows() {
        w.write_record(row.iter().map(|&v| format_f64(v)))
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads a manifest and every instance it references, in manifest order.
///
/// Labels come from the entry's explicit `label`, or from its `category`
/// through `scheme`. When both are present they must agree.
pub fn load_manifest_dataset(manifest_path: &Path, scheme: Option<&LabelScheme>) -> Result<LabeledDataset> {
    let manifest: DatasetManifest = read_json(manifest_path)?;
    if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(Error::parse(
            manifest_path,
            0,
            format!("unsupported schema_version {}", manifest.schema_version),
        ));
    }
    if manifest.entries.is_empty() {
        return Err(Error::EmptyDataset(format!("{} has no entries", manifest_path.display())));
    }
    if manifest.channel_names.len() != manifest.shape.1 {
        return Err(Error::InvalidDataset(format!(
            "{} channel names for N = {}",
            manifest.channel_names.len(),
            manifest.shape.1
        )));
    }
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let instances = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let label = resolve_label(entry, scheme)?;
            let path = base.join(&entry.path);
            let values = read_instance_csv(&path, &entry.id, manifest.shape)?;
            let mut inst = MvtsInstance::new(entry.id.clone(), values, label);
            inst.category = entry.category.clone();
            Ok(inst)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut meta = manifest.meta.clone();
    meta.insert("manifest".into(), manifest_path.display().to_string());
    meta.insert("channel_names".into(), manifest.channel_names.join(","));
    LabeledDataset::with_meta(instances, meta)
}

fn resolve_label(entry: &ManifestEntry, scheme: Option<&LabelScheme>) -> Result<String> {
    match (scheme, &entry.category, &entry.label) {
        (Some(s), Some(cat), explicit) => {
            let mapped = s.label_for(cat)?;
            if let Some(l) = explicit {
                if l != mapped {
                    return Err(Error::Labeling(format!(
                        "entry `{}` is labelled `{l}` but category `{cat}` maps to `{mapped}`",
                        entry.id
                    )));
                }
            }
            Ok(mapped.to_string())
        }
        (_, _, Some(l)) => Ok(l.clone()),
        _ => Err(Error::Labeling(format!(
            "entry `{}` has neither a label nor a category covered by the label scheme",
            entry.id
        ))),
    }
}

fn file_stem_for(index: usize, id: &str) -> String {
    let clean: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{index:05}_{clean}.csv")
}

/// Writes every instance as CSV under `dir/instances/` plus `dir/manifest.json`.
pub fn write_dataset(data: &LabeledDataset, dir: &Path, channel_names: Option<&[String]>) -> Result<PathBuf> {
    let (tau, n) = data.shape();
    let names: Vec<String> = match channel_names {
        Some(names) if names.len() == n => names.to_vec(),
        Some(names) => {
            return Err(Error::InvalidDataset(format!("{} channel names for N = {n}", names.len())));
        }
        None => (0..n).map(|c| format!("ch{c}")).collect(),
    };
    let entries = data
        .instances()
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let rel = PathBuf::from("instances").join(file_stem_for(i, &inst.id));
            write_instance_csv(&dir.join(&rel), &inst.values)?;
            Ok(ManifestEntry {
                id: inst.id.clone(),
                path: rel,
                category: inst.category.clone(),
                label: Some(inst.label.clone()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut meta = data.meta.clone();
    meta.remove("manifest");
    meta.remove("channel_names");
    let manifest = DatasetManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        shape: (tau, n),
        channel_names: names,
        entries,
        meta,
    };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

/// A fixed-length slice of a longer recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub start: usize,
    pub values: Array2<f64>,
}

/// Windows of `obs_len` rows starting at 0, step, 2·step, ...
pub fn slice_windows(long_series: &Array2<f64>, obs_len: usize, step: usize) -> Result<Vec<Window>> {
    let total = long_series.nrows();
    if step == 0 || obs_len == 0 {
        return Err(Error::Config("window length and step must be >= 1".into()));
    }
    if obs_len > total {
        return Err(Error::TooShort {
            len: total,
            min: obs_len,
        });
    }
    Ok((0..=total - obs_len)
        .step_by(step)
        .map(|start| Window {
            start,
            values: long_series.slice(s![start..start + obs_len, ..]).to_owned(),
        })
        .collect())
}

pub const POSITIVE_LABEL: &str = "F";
pub const NEGATIVE_LABEL: &str = "NF";

/// Two-class generator: negatives are AR(1) noise, positives are more
/// persistent AR(1) noise plus a sinusoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_instances: usize,
    /// Fraction of positive instances, in (0, 1).
    pub imbalance: f64,
    pub tau: usize,
    pub channels: usize,
    pub ar_neg: f64,
    pub ar_pos: f64,
    pub sin_amp_pos: f64,
    pub sin_period_pos: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_instances: 400,
            imbalance: 0.05,
            tau: 64,
            channels: 4,
            ar_neg: 0.2,
            ar_pos: 0.9,
            sin_amp_pos: 1.0,
            sin_period_pos: 20.0,
            noise_std: 1.0,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.imbalance > 0.0 && self.imbalance < 1.0) {
            return bad("imbalance must lie in (0, 1)");
        }
        if !(self.ar_neg.abs() < 1.0 && self.ar_pos.abs() < 1.0) {
            return bad("AR coefficients must satisfy |ar| < 1");
        }
        if !(self.sin_period_pos >= 2.0) {
            return bad("sin_period_pos must be >= 2");
        }
        if !(self.noise_std > 0.0) {
            return bad("noise_std must be > 0");
        }
        if self.tau == 0 || self.channels == 0 {
            return bad("tau and channels must be >= 1");
        }
        let pos = self.positive_count();
        if pos == 0 || pos >= self.n_instances {
            return Err(Error::Config(format!(
                "degenerate config: {pos} positive of {} instances",
                self.n_instances
            )));
        }
        Ok(())
    }

    pub fn positive_count(&self) -> usize {
        (self.n_instances as f64 * self.imbalance).round() as usize
    }

    /// Positives are spread evenly through the index range.
    fn is_positive(&self, index: usize) -> bool {
        let (p, n) = (self.positive_count(), self.n_instances);
        (index + 1) * p / n > index * p / n
    }
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<LabeledDataset> {
    cfg.validate()?;
    let instances: Vec<MvtsInstance> = (0..cfg.n_instances)
        .into_par_iter()
        .map(|i| {
            let positive = cfg.is_positive(i);
            let ar = if positive { cfg.ar_pos } else { cfg.ar_neg };
            let noise = Normal::new(0.0, cfg.noise_std).expect("validated std");
            let stationary = Normal::new(0.0, cfg.noise_std / (1.0 - ar * ar).sqrt()).expect("validated ar");
            let mut values = Array2::zeros((cfg.tau, cfg.channels));
            for c in 0..cfg.channels {
                let mut rng = stream_rng(cfg.seed, i as u64, c as u64);
                let mut x = stationary.sample(&mut rng);
                for t in 0..cfg.tau {
                    if t > 0 {
                        x = ar * x + noise.sample(&mut rng);
                    }
                    let signal = if positive {
                        cfg.sin_amp_pos * (2.0 * std::f64::consts::PI * t as f64 / cfg.sin_period_pos).sin()
                    } else {
                        0.0
                    };
                    values[[t, c]] = x + signal;
                }
            }
            let (label, category) = if positive {
                (POSITIVE_LABEL, "M")
            } else {
                (NEGATIVE_LABEL, "FQ")
            };
            MvtsInstance::new(format!("syn{}-{i:05}", cfg.seed), values, label).with_category(category)
        })
        .collect();
    let meta = BTreeMap::from([
        ("source".to_string(), "synthetic".to_string()),
        ("seed".to_string(), cfg.seed.to_string()),
    ]);
    LabeledDataset::with_meta(instances, meta)
}

/// Header `id,label,f0..f{d-1}`; every value with 17 significant digits.
pub fn write_features_csv(features: &[FeatureVector], path: &Path) -> Result<()> {
    let dims: BTreeSet<usize> = features.iter().map(FeatureVector::dim).collect();
    if dims.len() > 1 {
        return Err(Error::InvalidDataset(format!("feature vectors have mixed lengths {dims:?}")));
    }
    let d = dims.into_iter().next().unwrap_or(0);
    let mut w = csv_writer(path)?;
    let header = ["id".to_string(), "label".to_string()]
        .into_iter()
        .chain((0..d).map(|j| format!("f{j}")));
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for fv in features {
        let row = [fv.id.clone(), fv.label.clone()]
            .into_iter()
            .chain(fv.values.iter().map(|&v| format_f64(v)));
        w.write_record(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_features_csv(path: &Path) -> Result<Vec<FeatureVector>> {
    let mut reader = csv_reader(path, true)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() < 2 || &header[0] != "id" || &header[1] != "label" {
        return Err(Error::parse(path, 1, "header must start with `id,label`"));
    }
    let d = header.len() - 2;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != d + 2 {
            return Err(Error::parse(path, line, format!("expected {} fields, found {}", d + 2, record.len())));
        }
        let values = record
            .iter()
            .skip(2)
            .map(|f| parse_cell(f).map_err(|_| Error::parse(path, line, format!("`{f}` is not a number"))))
            .collect::<Result<Vec<_>>>()?;
        out.push(FeatureVector::new(&record[0], &record[1], values));
    }
    Ok(out)
}

/// Appends a line to a text file, creating it if needed.
pub fn append_line(path: &Path, line: &str) -> Result<()> {
    create_parent(path)?;
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}
