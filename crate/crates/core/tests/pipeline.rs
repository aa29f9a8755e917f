use std::path::Path;

use excon_core::data::{preprocess, DEFAULT_IMPUTE_K};
use excon_core::embedder::{embed_dataset, load_checkpoint, save_checkpoint, train_embedder, TrainConfig};
use excon_core::extremes::{derive_extremes, ExtremeSet};
use excon_core::heads::{load_head, read_predictions_csv};
use excon_core::ingest::{generate_synthetic, read_features_csv, read_json, SynthConfig};
use excon_core::pipeline::{run_baseline, run_pipeline, BaselineKind, PipelineConfig, RunManifest};
use excon_core::{Error, ErrorKind, LabeledDataset};

fn small_data(seed: u64, imbalance: f64) -> LabeledDataset {
    generate_synthetic(&SynthConfig {
        n_instances: 60,
        imbalance,
        tau: 24,
        channels: 2,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn small_config() -> PipelineConfig {
    PipelineConfig {
        train: TrainConfig {
            epochs: 3,
            hidden_dim: 8,
            batch_size: 16,
            ..TrainConfig::default()
        },
        ..PipelineConfig::default()
    }
}

fn manifest(dir: &Path) -> RunManifest {
    read_json(&dir.join("run.json")).unwrap()
}

#[test]
fn complete_run_writes_reloadable_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let (train, test) = (small_data(1, 0.2), small_data(2, 0.2));
    let cfg = small_config();
    let outcome = run_pipeline(&train, &test, &cfg, None, Some(out)).unwrap();

    let m = manifest(out);
    assert_eq!(m.status, "complete");
    assert_eq!(
        m.completed_stages,
        ["preprocess", "features", "extremes", "train", "embed", "fit-head", "predict", "eval"]
    );
    for a in &m.artifacts {
        assert!(out.join(a).is_file(), "{a} missing");
    }

    let features = read_features_csv(&out.join("features_train.csv")).unwrap();
    let extremes = derive_extremes(&features).unwrap();
    let saved: ExtremeSet = read_json(&out.join("extremes.json")).unwrap();
    assert_eq!(extremes, saved);

    let pre_train = preprocess(&train, DEFAULT_IMPUTE_K).unwrap();
    let tc = TrainConfig { seed: cfg.seed, ..cfg.train };
    let resumed = train_embedder(&pre_train, &saved, &tc).unwrap();
    let resumed_path = out.join("resumed.json");
    save_checkpoint(&resumed, &saved, &resumed_path).unwrap();
    assert_eq!(std::fs::read(&resumed_path).unwrap(), std::fs::read(out.join("model.json")).unwrap());

    let (model, _) = load_checkpoint(&out.join("model.json")).unwrap();
    let pre_test = preprocess(&test, DEFAULT_IMPUTE_K).unwrap();
    let emb = embed_dataset(&model, &pre_test).unwrap();
    let stored = read_features_csv(&out.join("embeddings_test.csv")).unwrap();
    for (a, b) in emb.iter().zip(&stored) {
        assert_eq!(a.values, b.values);
    }

    let head = load_head(&out.join("head.json")).unwrap();
    let rows = head.predict(&emb).unwrap();
    let preds = read_predictions_csv(&out.join("predictions.csv")).unwrap();
    assert_eq!(rows, preds.rows);
    assert_eq!(preds, outcome.predictions);
}

#[test]
fn stage_failure_is_named_and_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.train.epochs = 0;
    let err = run_pipeline(&small_data(1, 0.2), &small_data(2, 0.2), &cfg, None, Some(dir.path())).unwrap_err();
    match &err {
        Error::Stage { stage, .. } => assert_eq!(*stage, "train"),
        other => panic!("unexpected error {other}"),
    }
    assert_eq!(err.kind(), ErrorKind::Config);
    let m = manifest(dir.path());
    assert_eq!(m.status, "partial");
    assert_eq!(m.failed_stage.as_deref(), Some("train"));
    assert!(m.error.is_some());
    assert_eq!(m.completed_stages, ["preprocess", "features", "extremes"]);
    assert!(m.artifacts.contains(&"features_train.csv".to_string()));
    assert!(!m.artifacts.contains(&"model.json".to_string()));
}

#[test]
fn unknown_bank_fails_in_features_stage() {
    let cfg = PipelineConfig {
        bank: "nope".into(),
        ..small_config()
    };
    let err = run_pipeline(&small_data(1, 0.2), &small_data(2, 0.2), &cfg, None, None).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "features", .. }));
}

#[test]
fn test_set_without_positives_still_reports() {
    let train = small_data(1, 0.2);
    let test_all = small_data(2, 0.2);
    let negatives: Vec<_> = test_all.instances().iter().filter(|x| x.label == "NF").cloned().collect();
    let test = LabeledDataset::new(negatives).unwrap();
    let outcome = run_baseline(BaselineKind::Lpvv, &train, &test, &small_config(), None, None).unwrap();
    let r = &outcome.evaluation.report;
    assert_eq!(r.n as usize, test.len());
    assert!(r.accuracy.is_some());
    assert!(r.roc_auc.is_none());
    assert!(r.tss.is_none());
}

#[test]
fn baselines_are_deterministic() {
    let (train, test) = (small_data(1, 0.2), small_data(2, 0.2));
    let cfg = PipelineConfig {
        rocket_kernels: 50,
        ..small_config()
    };
    for kind in [BaselineKind::Mvts2v, BaselineKind::Lpvv, BaselineKind::Rocket, BaselineKind::Seq] {
        let a = run_baseline(kind, &train, &test, &cfg, None, None).unwrap();
        let b = run_baseline(kind, &train, &test, &cfg, None, None).unwrap();
        assert_eq!(a.predictions, b.predictions, "{kind}");
        assert_eq!(a.predictions.rows.len(), test.len());
    }
}

#[test]
fn baseline_names_parse() {
    for kind in [BaselineKind::Mvts2v, BaselineKind::Lpvv, BaselineKind::Seq, BaselineKind::Rocket] {
        assert_eq!(kind.to_string().parse::<BaselineKind>().unwrap(), kind);
    }
    assert_eq!("nope".parse::<BaselineKind>().unwrap_err().kind(), ErrorKind::Config);
}
