use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use excon_core::data::{filter_label_categories, impute_missing, znormalize_instance};
use excon_core::ingest::{
    generate_synthetic, load_manifest_dataset, read_features_csv, slice_windows, write_features_csv,
    write_instance_csv, write_json, DatasetManifest, ManifestEntry, SynthConfig, MANIFEST_SCHEMA_VERSION,
    NEGATIVE_LABEL, POSITIVE_LABEL,
};
use excon_core::{Error, ErrorKind, FeatureVector, LabeledDataset, MvtsInstance};
use ndarray::{array, Array2};
use proptest::prelude::*;

fn write_manifest(dir: &Path, shape: (usize, usize), entries: &[(&str, usize)]) -> std::path::PathBuf {
    let mut manifest_entries = Vec::new();
    for (i, &(id, rows)) in entries.iter().enumerate() {
        let values = Array2::from_shape_fn((rows, shape.1), |(t, n)| (t * 31 + n * 7 + i) as f64 * 0.25);
        let rel = format!("inst_{i}.csv");
        write_instance_csv(&dir.join(&rel), &values).unwrap();
        manifest_entries.push(ManifestEntry {
            id: id.to_string(),
            path: rel.into(),
            category: None,
            label: Some(if i % 2 == 0 { "NF" } else { "F" }.to_string()),
        });
    }
    let manifest = DatasetManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        shape,
        channel_names: (0..shape.1).map(|n| format!("c{n}")).collect(),
        entries: manifest_entries,
        meta: BTreeMap::new(),
    };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest).unwrap();
    path
}

#[test]
fn manifest_of_three_instances_loads() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_manifest(dir.path(), (60, 24), &[("a", 60), ("b", 60), ("c", 60)]);
    let data = load_manifest_dataset(&path, None).unwrap();
    assert_eq!(data.len(), 3);
    assert!(data.instances().iter().all(|x| x.shape() == (60, 24)));
    assert_eq!(data.instances()[1].values[[2, 3]], (2 * 31 + 3 * 7 + 1) as f64 * 0.25);
}

#[test]
fn short_instance_is_a_shape_error_naming_the_id() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_manifest(dir.path(), (60, 24), &[("a", 60), ("short-one", 59)]);
    let err = load_manifest_dataset(&path, None).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Data);
    match &err {
        Error::ShapeMismatch { id, .. } => assert_eq!(id, "short-one"),
        other => panic!("unexpected error {other}"),
    }
    assert!(err.to_string().contains("short-one"));
}

#[test]
fn empty_manifest_is_an_empty_dataset_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_manifest(dir.path(), (60, 24), &[]);
    assert!(matches!(load_manifest_dataset(&path, None), Err(Error::EmptyDataset(_))));
}

#[test]
fn slice_window_counts() {
    let series = Array2::from_shape_fn((10, 2), |(t, n)| (t + n) as f64);
    assert_eq!(slice_windows(&series, 5, 1).unwrap().len(), 6);
    assert_eq!(slice_windows(&series, 10, 3).unwrap().len(), 1);
    assert!(slice_windows(&Array2::zeros((4, 2)), 5, 1).is_err());
}

#[test]
fn core_data_examples() {
    let inst = MvtsInstance::new("z", array![[1.0], [2.0], [3.0]], "NF");
    let z = znormalize_instance(&inst).unwrap();
    let s = (2.0f64 / 3.0).sqrt();
    for (got, want) in z.values.iter().zip([-1.0 / s, 0.0, 1.0 / s]) {
        assert!((got - want).abs() < 1e-12);
    }

    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let mut values = Array2::zeros((5, 2));
    for t in 0..5 {
        values[[t, 0]] = a[t];
        values[[t, 1]] = 2.0 * a[t];
    }
    values[[2, 1]] = f64::NAN;
    let imputed = impute_missing(&MvtsInstance::new("i", values, "NF"), 1).unwrap();
    assert!((imputed.values[[2, 1]] - 6.0).abs() < 1e-12);

    let gap = MvtsInstance::new("g", array![[1.0], [f64::NAN], [3.0]], "NF");
    assert_eq!(impute_missing(&gap, 1).unwrap().values, array![[1.0], [2.0], [3.0]]);

    let mut instances = Vec::new();
    for (cat, count) in [("FQ", 3), ("B", 2), ("M", 1)] {
        for k in 0..count {
            let label = if cat == "M" { "F" } else { "NF" };
            instances.push(MvtsInstance::new(format!("{cat}{k}"), Array2::zeros((3, 1)), label).with_category(cat));
        }
    }
    let data = LabeledDataset::new(instances).unwrap();
    let keep: BTreeSet<String> = ["FQ", "M", "X"].iter().map(|s| s.to_string()).collect();
    assert_eq!(filter_label_categories(&data, &keep).unwrap().len(), 4);
}

fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn synthetic_classes_are_indistinguishable_without_signal() {
    let cfg = SynthConfig {
        n_instances: 200,
        imbalance: 0.25,
        tau: 64,
        channels: 2,
        ar_neg: 0.5,
        ar_pos: 0.5,
        sin_amp_pos: 0.0,
        seed: 11,
        ..SynthConfig::default()
    };
    let data = generate_synthetic(&cfg).unwrap();
    let pooled = |label: &str| -> Vec<f64> {
        data.instances()
            .iter()
            .filter(|x| x.label == label)
            .flat_map(|x| x.values.iter().copied())
            .collect()
    };
    let d = ks_statistic(pooled(POSITIVE_LABEL), pooled(NEGATIVE_LABEL));
    assert!(d < 0.05, "KS statistic {d}");
}

#[test]
fn synthetic_generation_is_reproducible() {
    let cfg = SynthConfig::default();
    let a = generate_synthetic(&cfg).unwrap();
    let b = generate_synthetic(&cfg).unwrap();
    assert_eq!(a.instances(), b.instances());
    assert_eq!(a.class_counts()[POSITIVE_LABEL], cfg.positive_count());
}

proptest! {
    #[test]
    fn feature_csv_round_trip_is_bit_exact(
        rows in prop::collection::vec(prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 5), 1..8)
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let features: Vec<FeatureVector> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| FeatureVector::new(format!("id{i}"), if i % 2 == 0 { "NF" } else { "F" }, r.clone()))
            .collect();
        write_features_csv(&features, &path).unwrap();
        let back = read_features_csv(&path).unwrap();
        prop_assert_eq!(back.len(), features.len());
        for (x, y) in features.iter().zip(&back) {
            prop_assert_eq!(&x.id, &y.id);
            prop_assert_eq!(&x.label, &y.label);
            for (u, v) in x.values.iter().zip(&y.values) {
                prop_assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }
}
