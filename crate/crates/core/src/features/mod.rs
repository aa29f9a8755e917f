//! Per-channel dynamical feature extraction and the channel-major
//! multi-feature vector (d = 22·N).

pub mod catch22;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, MvtsInstance};
use crate::error::{Error, Result};

/// Number of features every bank produces per channel.
pub const FEATURES_PER_CHANNEL: usize = 22;

/// A fixed, ordered set of 22 scalar summaries of a univariate series.
pub trait FeatureBank: Sync + Send {
    fn name(&self) -> &str;
    fn feature_names(&self) -> Vec<String>;
    /// Raw evaluation; outputs may be non-finite and are sanitized by the
    /// caller.
    fn evaluate(&self, series: &[f64]) -> [f64; FEATURES_PER_CHANNEL];
}

/// The canonical catch22 set.
#[derive(Debug, Clone, Copy, Default)]
pub struct Catch22Bank;

impl FeatureBank for Catch22Bank {
    fn name(&self) -> &str {
        "c22"
    }

    fn feature_names(&self) -> Vec<String> {
        catch22::FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn evaluate(&self, series: &[f64]) -> [f64; FEATURES_PER_CHANNEL] {
        catch22::catch22_all(series)
    }
}

/// Sample autocorrelation at lags 1..=22. Small enough to audit by hand,
/// used as a stand-in bank for oracle tests.
#[derive(Debug, Clone, Copy, Default)]
pub struct AcfBank;

impl FeatureBank for AcfBank {
    fn name(&self) -> &str {
        "acf22"
    }

    fn feature_names(&self) -> Vec<String> {
        (1..=FEATURES_PER_CHANNEL).map(|k| format!("acf_lag{k}")).collect()
    }

    fn evaluate(&self, series: &[f64]) -> [f64; FEATURES_PER_CHANNEL] {
        let n = series.len();
        let mean = series.iter().sum::<f64>() / n as f64;
        let denom: f64 = series.iter().map(|v| (v - mean).powi(2)).sum();
        let mut out = [0.0; FEATURES_PER_CHANNEL];
        for (k, slot) in out.iter_mut().enumerate() {
            let lag = k + 1;
            if lag >= n {
                break;
            }
            let num: f64 = (0..n - lag)
                .map(|t| (series[t] - mean) * (series[t + lag] - mean))
                .sum();
            *slot = num / denom;
        }
        out
    }
}

pub fn bank_by_name(name: &str) -> Result<Box<dyn FeatureBank>> {
    match name {
        "c22" | "catch22" => Ok(Box::new(Catch22Bank)),
        "acf22" => Ok(Box::new(AcfBank)),
        other => Err(Error::Config(format!("unknown feature bank `{other}` (expected c22 or acf22)"))),
    }
}

/// Flattened feature representation of one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub id: String,
    pub label: String,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(id: impl Into<String>, label: impl Into<String>, values: Vec<f64>) -> Self {
        FeatureVector {
            id: id.into(),
            label: label.into(),
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

/// Features of one channel. Constant channels map to all zeros and
/// non-finite outputs are replaced by 0.
pub fn extract_channel_features(series: &[f64], bank: &dyn FeatureBank) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return Err(Error::TooShort {
            len: series.len(),
            min: 2,
        });
    }
    if let Some(pos) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidDataset(format!("non-finite value at timestamp {pos}")));
    }
    if series.iter().all(|&v| v == series[0]) {
        return Ok(vec![0.0; FEATURES_PER_CHANNEL]);
    }
    Ok(bank.evaluate(series).into_iter().map(sanitize).collect())
}

/// Channel-major concatenation: feature `j` of channel `n` sits at `22n + j`.
pub fn extract_instance_features(instance: &MvtsInstance, bank: &dyn FeatureBank) -> Result<FeatureVector> {
    let (_, channels) = instance.shape();
    let mut values = Vec::with_capacity(channels * FEATURES_PER_CHANNEL);
    for (channel, column) in instance.values.columns().into_iter().enumerate() {
        let series = column.to_vec();
        let block = extract_channel_features(&series, bank).map_err(|e| Error::Channel {
            channel,
            source: Box::new(e),
        })?;
        values.extend(block);
    }
    Ok(FeatureVector::new(instance.id.clone(), instance.label.clone(), values))
}

/// One vector per instance in dataset order. Instances are processed in
/// parallel; each vector depends only on its own instance.
pub fn extract_dataset_features(data: &LabeledDataset, bank: &dyn FeatureBank) -> Result<Vec<FeatureVector>> {
    data.instances()
        .par_iter()
        .map(|inst| {
            extract_instance_features(inst, bank).map_err(|e| {
                Error::InvalidDataset(format!("feature extraction failed for `{}`: {e}", inst.id))
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn wavy(n: usize, phase: f64) -> Vec<f64> {
        (0..n)
            .map(|t| (0.37 * t as f64 + phase).sin() + 0.3 * (1.9 * t as f64).cos() + 0.01 * t as f64)
            .collect()
    }

    #[test]
    fn constant_series_is_all_zeros() {
        let out = extract_channel_features(&[3.0; 50], &Catch22Bank).unwrap();
        assert_eq!(out, vec![0.0; 22]);
    }

    #[test]
    fn output_has_22_finite_entries() {
        for n in [2, 3, 5, 10, 17, 64, 200] {
            let out = extract_channel_features(&wavy(n, 0.2), &Catch22Bank).unwrap();
            assert_eq!(out.len(), 22);
            assert!(out.iter().all(|v| v.is_finite()), "n={n}: {out:?}");
        }
    }

    #[test]
    fn too_short_is_error() {
        assert!(matches!(
            extract_channel_features(&[1.0], &Catch22Bank),
            Err(Error::TooShort { len: 1, min: 2 })
        ));
    }

    #[test]
    fn instance_layout_is_channel_major() {
        let a = wavy(40, 0.0);
        let b = wavy(40, 1.3);
        let mut values = Array2::zeros((40, 2));
        for t in 0..40 {
            values[[t, 0]] = a[t];
            values[[t, 1]] = b[t];
        }
        let inst = MvtsInstance::new("x", values.clone(), "F");
        let fv = extract_instance_features(&inst, &Catch22Bank).unwrap();
        assert_eq!(fv.dim(), 44);
        assert_eq!(&fv.values[..22], extract_channel_features(&a, &Catch22Bank).unwrap().as_slice());
        assert_eq!(&fv.values[22..], extract_channel_features(&b, &Catch22Bank).unwrap().as_slice());

        let mut swapped = values.clone();
        swapped.column_mut(0).assign(&values.column(1));
        swapped.column_mut(1).assign(&values.column(0));
        let fs = extract_instance_features(&MvtsInstance::new("x", swapped, "F"), &Catch22Bank).unwrap();
        assert_eq!(&fs.values[..22], &fv.values[22..]);
        assert_eq!(&fs.values[22..], &fv.values[..22]);
    }

    #[test]
    fn single_channel_instance_equals_channel_features() {
        let a = wavy(30, 0.5);
        let inst = MvtsInstance::new("x", Array2::from_shape_vec((30, 1), a.clone()).unwrap(), "F");
        let fv = extract_instance_features(&inst, &AcfBank).unwrap();
        assert_eq!(fv.values, extract_channel_features(&a, &AcfBank).unwrap());
    }

    #[test]
    fn channel_errors_carry_index() {
        let mut values = Array2::from_elem((10, 3), 1.0);
        values[[4, 2]] = f64::NAN;
        let err = extract_instance_features(&MvtsInstance::new("x", values, "F"), &Catch22Bank).unwrap_err();
        assert!(matches!(err, Error::Channel { channel: 2, .. }));
    }

    #[test]
    fn bank_lookup() {
        assert_eq!(bank_by_name("c22").unwrap().name(), "c22");
        assert_eq!(bank_by_name("acf22").unwrap().feature_names().len(), 22);
        assert!(bank_by_name("nope").is_err());
    }
}
