//! Dataset model and the per-instance preprocessing every stage assumes:
//! label taxonomy, missing-value imputation, instance-wise z-normalization
//! and category filtering.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use ndarray::{Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Neighbour count used by the pipeline when imputing gaps.
pub const DEFAULT_IMPUTE_K: usize = 3;

/// Minimum number of co-observed timestamps for a channel to act as an
/// imputation donor.
const MIN_CO_OBSERVED: usize = 3;

/// One multivariate time series: `values` is τ × N (rows are timestamps).
/// Missing entries are stored as NaN until [`impute_missing`] runs.
#[derive(Debug, Clone, PartialEq)]
pub struct MvtsInstance {
    pub id: String,
    pub values: Array2<f64>,
    pub label: String,
    pub category: Option<String>,
}

impl MvtsInstance {
    pub fn new(id: impl Into<String>, values: Array2<f64>, label: impl Into<String>) -> Self {
        MvtsInstance {
            id: id.into(),
            values,
            label: label.into(),
            category: None,
        }
    }

    pub fn with_category(mut self, category: impl Into<String>) -> Self {
        self.category = Some(category.into());
        self
    }

    /// (τ, N)
    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// An ordered collection of equally shaped instances.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    instances: Vec<MvtsInstance>,
    classes: Vec<String>,
    pub meta: BTreeMap<String, String>,
}

impl LabeledDataset {
    pub fn new(instances: Vec<MvtsInstance>) -> Result<Self> {
        Self::with_meta(instances, BTreeMap::new())
    }

    pub fn with_meta(instances: Vec<MvtsInstance>, meta: BTreeMap<String, String>) -> Result<Self> {
        let first = instances
            .first()
            .ok_or_else(|| Error::EmptyDataset("dataset has no instances".into()))?;
        let shape = first.shape();
        if shape.0 == 0 || shape.1 == 0 {
            return Err(Error::InvalidDataset(format!(
                "instance `{}` has degenerate shape {:?}",
                first.id, shape
            )));
        }
        let mut seen = HashSet::with_capacity(instances.len());
        for inst in &instances {
            if inst.shape() != shape {
                return Err(Error::ShapeMismatch {
                    id: inst.id.clone(),
                    expected: shape,
                    found: inst.shape(),
                });
            }
            if !seen.insert(inst.id.as_str()) {
                return Err(Error::InvalidDataset(format!("duplicate instance id `{}`", inst.id)));
            }
        }
        let classes = instances
            .iter()
            .map(|i| i.label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        Ok(LabeledDataset {
            instances,
            classes,
            meta,
        })
    }

    pub fn instances(&self) -> &[MvtsInstance] {
        &self.instances
    }

    pub fn into_instances(self) -> Vec<MvtsInstance> {
        self.instances
    }

    /// Distinct labels in lexicographic order.
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// (τ, N), shared by every instance.
    pub fn shape(&self) -> (usize, usize) {
        self.instances[0].shape()
    }

    pub fn class_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for inst in &self.instances {
            *counts.entry(inst.label.clone()).or_insert(0) += 1;
        }
        counts
    }

    /// Applies `f` to every instance in parallel, keeping order.
    pub fn try_map<F>(&self, f: F) -> Result<LabeledDataset>
    where
        F: Fn(&MvtsInstance) -> Result<MvtsInstance> + Sync + Send,
    {
        let mapped = self.instances.par_iter().map(f).collect::<Result<Vec<_>>>()?;
        LabeledDataset::with_meta(mapped, self.meta.clone())
    }
}

/// Maps fine-grained categories (FQ/A/B/C/M/X, ...) onto class labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelScheme {
    pub mapping: BTreeMap<String, String>,
    pub positive_class: String,
}

impl LabelScheme {
    pub fn new(mapping: BTreeMap<String, String>, positive_class: impl Into<String>) -> Result<Self> {
        let positive_class = positive_class.into();
        if !mapping.values().any(|l| *l == positive_class) {
            return Err(Error::Config(format!(
                "positive class `{positive_class}` is not produced by the label mapping"
            )));
        }
        Ok(LabelScheme {
            mapping,
            positive_class,
        })
    }

    /// Quiet/A/B/C windows are non-flare (`NF`), M/X windows are flare (`F`).
    pub fn flare() -> Self {
        let mapping = [
            ("FQ", "NF"),
            ("A", "NF"),
            ("B", "NF"),
            ("C", "NF"),
            ("M", "F"),
            ("X", "F"),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        LabelScheme {
            mapping,
            positive_class: "F".into(),
        }
    }

    /// Parses `CAT=LABEL,CAT=LABEL,...`.
    pub fn parse(spec: &str, positive_class: &str) -> Result<Self> {
        let mut mapping = BTreeMap::new();
        for pair in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (cat, label) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("label mapping entry `{pair}` is not CAT=LABEL")))?;
            mapping.insert(cat.trim().to_string(), label.trim().to_string());
        }
        if mapping.is_empty() {
            return Err(Error::Config("empty label mapping".into()));
        }
        LabelScheme::new(mapping, positive_class)
    }

    pub fn label_for(&self, category: &str) -> Result<&str> {
        self.mapping
            .get(category)
            .map(String::as_str)
            .ok_or_else(|| Error::Labeling(format!("category `{category}` is not covered by the label scheme")))
    }
}

/// Instance-wise z-normalization of every channel with the population
/// standard deviation. Constant channels become all zeros.
pub fn znormalize_instance(instance: &MvtsInstance) -> Result<MvtsInstance> {
    check_finite(instance)?;
    let mut values = instance.values.clone();
    for mut column in values.axis_iter_mut(Axis(1)) {
        let (mean, std) = population_moments(column.view());
        if std == 0.0 {
            column.fill(0.0);
        } else {
            column.mapv_inplace(|x| (x - mean) / std);
        }
    }
    Ok(MvtsInstance {
        values,
        ..instance.clone()
    })
}

fn check_finite(instance: &MvtsInstance) -> Result<()> {
    for ((t, n), v) in instance.values.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                id: instance.id.clone(),
                channel: n,
                timestamp: t,
            });
        }
    }
    Ok(())
}

fn population_moments(x: ArrayView1<'_, f64>) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.sum() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn moments_over(values: &[f64], idx: &[usize]) -> (f64, f64) {
    let n = idx.len() as f64;
    let mean = idx.iter().map(|&t| values[t]).sum::<f64>() / n;
    let var = idx.iter().map(|&t| (values[t] - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

struct Donor {
    channel: usize,
    r: f64,
    mean: f64,
    std: f64,
}

/// Fills missing (non-finite) entries.
///
/// Each missing entry of a channel is rebuilt from the `k` most correlated
/// donor channels observed at that timestamp: donors are ranked by absolute
/// Pearson correlation over co-observed timestamps (at least three), their
/// z-scored values are averaged with weights `r` / Σ|r|, and the result is
/// mapped back through the target channel's observed mean and std. Without a
/// usable donor the entry is linearly interpolated inside its own channel;
/// leading and trailing gaps copy the nearest observed value.
pub fn impute_missing(instance: &MvtsInstance, k: usize) -> Result<MvtsInstance> {
    if k == 0 {
        return Err(Error::Config("imputation neighbour count k must be >= 1".into()));
    }
    if instance.is_complete() {
        return Ok(instance.clone());
    }
    let (tau, n_channels) = instance.shape();
    let columns: Vec<Vec<f64>> = (0..n_channels)
        .map(|c| instance.values.column(c).to_vec())
        .collect();
    let observed: Vec<Vec<usize>> = columns
        .iter()
        .map(|col| (0..tau).filter(|&t| col[t].is_finite()).collect())
        .collect();
    if observed.iter().all(Vec::is_empty) {
        return Err(Error::Unimputable {
            id: instance.id.clone(),
            reason: "every channel is fully missing".into(),
        });
    }

    let mut values = instance.values.clone();
    for target in 0..n_channels {
        if observed[target].len() == tau {
            continue;
        }
        if observed[target].is_empty() {
            return Err(Error::Unimputable {
                id: instance.id.clone(),
                reason: format!("channel {target} has no observed values"),
            });
        }
        let col = &columns[target];
        let (target_mean, target_std) = moments_over(col, &observed[target]);

        let mut donors: Vec<Donor> = (0..n_channels)
            .filter(|&c| c != target)
            .filter_map(|c| {
                let co: Vec<usize> = observed[target]
                    .iter()
                    .copied()
                    .filter(|&t| columns[c][t].is_finite())
                    .collect();
                if co.len() < MIN_CO_OBSERVED {
                    return None;
                }
                let (mt, st) = moments_over(col, &co);
                let (md, sd) = moments_over(&columns[c], &co);
                if st == 0.0 || sd == 0.0 {
                    return None;
                }
                let cov = co
                    .iter()
                    .map(|&t| (col[t] - mt) * (columns[c][t] - md))
                    .sum::<f64>()
                    / co.len() as f64;
                let r = cov / (st * sd);
                (r.is_finite() && r != 0.0).then_some(Donor {
                    channel: c,
                    r,
                    mean: md,
                    std: sd,
                })
            })
            .collect();
        // Stable sort keeps the lower channel index first on ties.
        donors.sort_by(|a, b| b.r.abs().total_cmp(&a.r.abs()));

        for t in (0..tau).filter(|&t| !col[t].is_finite()) {
            let chosen: Vec<&Donor> = donors
                .iter()
                .filter(|d| columns[d.channel][t].is_finite())
                .take(k)
                .collect();
            let value = if chosen.is_empty() {
                interpolate(col, &observed[target], t)
            } else {
                let weight: f64 = chosen.iter().map(|d| d.r.abs()).sum();
                let z: f64 = chosen
                    .iter()
                    .map(|d| d.r * (columns[d.channel][t] - d.mean) / d.std)
                    .sum::<f64>()
                    / weight;
                target_mean + target_std * z
            };
            values[[t, target]] = value;
        }
    }
    Ok(MvtsInstance {
        values,
        ..instance.clone()
    })
}

fn interpolate(col: &[f64], observed: &[usize], t: usize) -> f64 {
    let pos = observed.partition_point(|&o| o < t);
    match (pos.checked_sub(1).map(|i| observed[i]), observed.get(pos).copied()) {
        (Some(lo), Some(hi)) => {
            let w = (t - lo) as f64 / (hi - lo) as f64;
            col[lo] + w * (col[hi] - col[lo])
        }
        (Some(lo), None) => col[lo],
        (None, Some(hi)) => col[hi],
        (None, None) => unreachable!("channel has at least one observation"),
    }
}

/// Keeps the instances whose category is in `keep`, preserving order.
pub fn filter_label_categories(data: &LabeledDataset, keep: &BTreeSet<String>) -> Result<LabeledDataset> {
    let kept: Vec<MvtsInstance> = data
        .instances()
        .iter()
        .filter(|i| i.category.as_ref().is_some_and(|c| keep.contains(c)))
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no instance has a category in {{{}}}",
            keep.iter().cloned().collect::<Vec<_>>().join(",")
        )));
    }
    LabeledDataset::with_meta(kept, data.meta.clone())
}

/// Imputation followed by z-normalization for every instance.
pub fn preprocess(data: &LabeledDataset, impute_k: usize) -> Result<LabeledDataset> {
    data.try_map(|inst| znormalize_instance(&impute_missing(inst, impute_k)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn inst(values: Array2<f64>) -> MvtsInstance {
        MvtsInstance::new("m0", values, "NF")
    }

    #[test]
    fn znormalize_hand_example() {
        let out = znormalize_instance(&inst(array![[1.0], [2.0], [3.0]])).unwrap();
        let expected = 1.224_744_871_391_589;
        assert!((out.values[[0, 0]] + expected).abs() < 1e-12);
        assert!(out.values[[1, 0]].abs() < 1e-15);
        assert!((out.values[[2, 0]] - expected).abs() < 1e-12);
    }

    #[test]
    fn znormalize_constant_channel_is_zero() {
        let out = znormalize_instance(&inst(array![[5.0], [5.0], [5.0], [5.0]])).unwrap();
        assert!(out.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn znormalize_standardized_input_unchanged() {
        let out = znormalize_instance(&inst(array![[-1.0], [1.0]])).unwrap();
        assert_eq!(out.values, array![[-1.0], [1.0]]);
    }

    #[test]
    fn znormalize_rejects_nan_with_location() {
        let err = znormalize_instance(&inst(array![[1.0, 2.0], [f64::NAN, 3.0]])).unwrap_err();
        match err {
            Error::NonFinite {
                id,
                channel,
                timestamp,
            } => {
                assert_eq!((id.as_str(), channel, timestamp), ("m0", 0, 1));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn impute_complete_is_identity() {
        let x = inst(array![[1.0, 4.0], [2.0, 3.0], [0.5, 9.0]]);
        assert_eq!(impute_missing(&x, 2).unwrap(), x);
    }

    #[test]
    fn impute_from_perfectly_correlated_donor() {
        let x = inst(array![[1.0, 2.0], [2.0, 4.0], [3.0, f64::NAN], [4.0, 8.0]]);
        let out = impute_missing(&x, 1).unwrap();
        assert!((out.values[[2, 1]] - 6.0).abs() < 1e-12, "{}", out.values[[2, 1]]);
    }

    #[test]
    fn impute_anticorrelated_donor_flips_sign() {
        let x = inst(array![[1.0, 8.0], [2.0, 6.0], [3.0, f64::NAN], [4.0, 2.0]]);
        let out = impute_missing(&x, 1).unwrap();
        assert!((out.values[[2, 1]] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn impute_single_channel_interpolates() {
        let out = impute_missing(&inst(array![[1.0], [f64::NAN], [3.0]]), 3).unwrap();
        assert_eq!(out.values, array![[1.0], [2.0], [3.0]]);
    }

    #[test]
    fn impute_boundary_gaps_copy_nearest() {
        let out = impute_missing(&inst(array![[f64::NAN], [2.0], [5.0], [f64::NAN]]), 1).unwrap();
        assert_eq!(out.values, array![[2.0], [2.0], [5.0], [5.0]]);
    }

    #[test]
    fn impute_all_missing_is_error() {
        let x = inst(Array2::from_elem((3, 2), f64::NAN));
        assert!(matches!(impute_missing(&x, 1), Err(Error::Unimputable { .. })));
    }

    fn categorized(cats: &[&str]) -> LabeledDataset {
        let scheme = LabelScheme::flare();
        let instances = cats
            .iter()
            .enumerate()
            .map(|(i, c)| {
                MvtsInstance::new(format!("i{i}"), Array2::zeros((2, 1)), scheme.label_for(c).unwrap())
                    .with_category(*c)
            })
            .collect();
        LabeledDataset::new(instances).unwrap()
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn filter_keeps_matching_in_order() {
        let data = categorized(&["FQ", "B", "FQ", "M", "B", "FQ"]);
        let out = filter_label_categories(&data, &set(&["FQ", "M", "X"])).unwrap();
        let ids: Vec<_> = out.instances().iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids, ["i0", "i2", "i3", "i5"]);
        assert_eq!(out.classes(), ["F", "NF"]);
    }

    #[test]
    fn filter_identity_and_empty() {
        let data = categorized(&["FQ", "B", "M"]);
        assert_eq!(filter_label_categories(&data, &set(&["FQ", "B", "M"])).unwrap(), data);
        assert!(matches!(
            filter_label_categories(&data, &set(&["X"])),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn dataset_rejects_mixed_shapes_and_duplicates() {
        let a = MvtsInstance::new("a", Array2::zeros((3, 2)), "NF");
        let b = MvtsInstance::new("b", Array2::zeros((2, 2)), "NF");
        assert!(matches!(
            LabeledDataset::new(vec![a.clone(), b]),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(LabeledDataset::new(vec![a.clone(), a]).is_err());
        assert!(matches!(LabeledDataset::new(vec![]), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn label_scheme_parse_and_unknown() {
        let s = LabelScheme::parse("FQ=NF, M=F", "F").unwrap();
        assert_eq!(s.label_for("M").unwrap(), "F");
        assert!(matches!(s.label_for("Z"), Err(Error::Labeling(_))));
        assert!(LabelScheme::parse("FQ=NF", "F").is_err());
    }

    fn channel() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, 2..40)
    }

    proptest! {
        #[test]
        fn znormalize_is_idempotent(col in channel()) {
            let x = inst(Array2::from_shape_vec((col.len(), 1), col).unwrap());
            let once = znormalize_instance(&x).unwrap();
            let twice = znormalize_instance(&once).unwrap();
            for (a, b) in once.values.iter().zip(twice.values.iter()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn znormalize_is_affine_invariant(col in channel(), a in -50.0f64..50.0, b in 0.1f64..20.0) {
            let x = inst(Array2::from_shape_vec((col.len(), 1), col.clone()).unwrap());
            let shifted: Vec<f64> = col.iter().map(|v| a + b * v).collect();
            let y = inst(Array2::from_shape_vec((col.len(), 1), shifted).unwrap());
            let nx = znormalize_instance(&x).unwrap();
            let ny = znormalize_instance(&y).unwrap();
            let (_, std) = population_moments(x.values.column(0));
            prop_assume!(std > 1e-6);
            for (p, q) in nx.values.iter().zip(ny.values.iter()) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }

        #[test]
        fn znormalize_moments(col in channel()) {
            let x = inst(Array2::from_shape_vec((col.len(), 1), col).unwrap());
            let (_, std) = population_moments(x.values.column(0));
            prop_assume!(std > 1e-6);
            let out = znormalize_instance(&x).unwrap();
            let (m, s) = population_moments(out.values.column(0));
            prop_assert!(m.abs() < 1e-9);
            prop_assert!((s - 1.0).abs() < 1e-9);
        }

        #[test]
        fn impute_never_touches_observed(
            vals in prop::collection::vec(-10.0f64..10.0, 24),
            holes in prop::collection::vec(any::<bool>(), 24),
        ) {
            let mut x = Array2::from_shape_vec((8, 3), vals).unwrap();
            for (v, h) in x.iter_mut().zip(&holes) {
                if *h { *v = f64::NAN; }
            }
            prop_assume!(x.columns().into_iter().all(|c| c.iter().any(|v| v.is_finite())));
            let input = inst(x.clone());
            let out = impute_missing(&input, 2).unwrap();
            prop_assert!(out.is_complete());
            for (a, b) in x.iter().zip(out.values.iter()) {
                if a.is_finite() { prop_assert_eq!(a.to_bits(), b.to_bits()); }
            }
        }
    }
}
