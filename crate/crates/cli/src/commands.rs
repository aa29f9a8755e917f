use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use excon_core::data::{filter_label_categories, preprocess};
use excon_core::embedder::{embed_dataset, load_checkpoint, save_checkpoint, train_embedder};
use excon_core::extremes::{derive_extremes, ExtremeSet};
use excon_core::features::{bank_by_name, extract_dataset_features};
use excon_core::heads::{load_head, read_predictions_csv, save_head, write_predictions_csv, PredictionSet};
use excon_core::ingest::{
    generate_synthetic, load_manifest_dataset, read_features_csv, read_json, write_dataset, write_features_csv,
    write_json, SynthConfig,
};
use excon_core::metrics::{aggregate, render_table};
use excon_core::pipeline::{evaluate, run_baseline, run_pipeline, PipelineConfig, PipelineOutcome};
use excon_core::projection::project_pca;
use excon_core::{Error, FeatureVector, LabeledDataset};
use serde_json::json;

use crate::args::*;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Extract(a) => extract(a),
        Command::Extremes(a) => extremes(a),
        Command::Train(a) => train(a),
        Command::Embed(a) => embed(a),
        Command::FitHead(a) => fit_head(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Baseline(a) => baseline(a),
        Command::Project(a) => project(a),
    }
}

/// Loads a manifest, applies the category filter when one is given, then
/// imputes and normalizes.
fn load_preprocessed(path: &Path, d: &DataArgs) -> Result<LabeledDataset> {
    let scheme = d.scheme()?;
    let data = load_manifest_dataset(path, scheme.as_ref())?;
    let cfg = PipelineConfig {
        positive_class: d.positive_class.clone(),
        keep_categories: d.keep(),
        ..PipelineConfig::default()
    };
    let data = match cfg.effective_keep(scheme.as_ref()) {
        Some(keep) => filter_label_categories(&data, &keep)?,
        None => data,
    };
    Ok(preprocess(&data, d.impute_k)?)
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_instances: a.n,
        imbalance: a.imbalance,
        tau: a.tau,
        channels: a.channels,
        ar_neg: a.ar_neg,
        ar_pos: a.ar_pos,
        sin_amp_pos: a.sin_amp,
        sin_period_pos: a.sin_period,
        noise_std: a.noise_std,
        seed: a.seed,
    };
    let data = generate_synthetic(&cfg)?;
    let manifest = write_dataset(&data, &a.out, None)?;
    println!(
        "wrote {} instances ({} positive) to {}",
        data.len(),
        cfg.positive_count(),
        manifest.display()
    );
    Ok(())
}

fn extract(a: ExtractArgs) -> Result<()> {
    let data = load_preprocessed(&a.data, &a.data_args)?;
    let bank = bank_by_name(&a.bank)?;
    let features = extract_dataset_features(&data, bank.as_ref())?;
    write_features_csv(&features, &a.out)?;
    println!(
        "wrote {} feature vectors of dimension {} to {}",
        features.len(),
        features.first().map_or(0, FeatureVector::dim),
        a.out.display()
    );
    Ok(())
}

fn extremes(a: ExtremesArgs) -> Result<()> {
    let features = read_features_csv(&a.features)?;
    let set = derive_extremes(&features)?;
    write_json(&a.out, &set)?;
    for (class, e) in &set.by_class {
        println!("{class}: {} (linkage distance {})", e.id, e.distance);
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let data = load_preprocessed(&a.data, &a.data_args)?;
    let set: ExtremeSet = read_json(&a.extremes)?;
    let model = train_embedder(&data, &set, &a.model.train_config())?;
    save_checkpoint(&model, &set, &a.out)?;
    let log = &model.training_log;
    println!(
        "trained {} epochs, loss {} -> {}; checkpoint {}",
        log.len().saturating_sub(1),
        log.first().copied().unwrap_or(f64::NAN),
        log.last().copied().unwrap_or(f64::NAN),
        a.out.display()
    );
    Ok(())
}

fn embed(a: EmbedArgs) -> Result<()> {
    let (model, _) = load_checkpoint(&a.model)?;
    let data = load_preprocessed(&a.data, &a.data_args)?;
    let emb = embed_dataset(&model, &data)?;
    write_features_csv(&emb, &a.out)?;
    println!("wrote {} embeddings to {}", emb.len(), a.out.display());
    Ok(())
}

fn fit_head(a: FitHeadArgs) -> Result<()> {
    let vectors = read_features_csv(&a.embeddings)?;
    let head = a.head.head_config().fit(&vectors)?;
    save_head(&head, &a.out)?;
    println!("fitted head on {} vectors; classes {:?}", vectors.len(), head.classes());
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let head = load_head(&a.head)?;
    let vectors = read_features_csv(&a.embeddings)?;
    let set = PredictionSet {
        classes: head.classes().to_vec(),
        rows: head.predict(&vectors)?,
    };
    write_predictions_csv(&set, &a.out)?;
    println!("wrote {} predictions to {}", set.rows.len(), a.out.display());
    Ok(())
}

fn named_path(spec: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
        _ => {
            let path = PathBuf::from(spec);
            let name = path
                .parent()
                .and_then(Path::file_name)
                .or_else(|| path.file_stem())
                .map_or_else(|| spec.to_string(), |n| n.to_string_lossy().into_owned());
            (name, path)
        }
    }
}

fn eval(a: EvalArgs) -> Result<()> {
    let mut rows = Vec::new();
    let mut reports = serde_json::Map::new();
    for spec in &a.predictions {
        let (name, path) = named_path(spec);
        let set = read_predictions_csv(&path)?;
        let evaluation = evaluate(&set, &a.positive_class).with_context(|| format!("evaluating {}", path.display()))?;
        if reports.contains_key(&name) {
            bail!(Error::Config(format!("duplicate report name `{name}`; use NAME=PATH")));
        }
        reports.insert(name.clone(), serde_json::to_value(&evaluation)?);
        rows.push((name, evaluation.report));
    }
    let table = render_table(&rows);
    print!("{table}");
    if let Some(dir) = &a.out {
        let metrics: Vec<_> = rows.iter().map(|(_, r)| r.clone()).collect();
        let doc = json!({ "runs": reports, "aggregate": aggregate(&metrics) });
        write_json(&dir.join("report.json"), &doc)?;
        let path = dir.join("report.txt");
        std::fs::write(&path, &table).map_err(|e| Error::Io { path, source: e })?;
    }
    Ok(())
}

fn print_outcome(name: &str, outcome: &PipelineOutcome) {
    print!("{}", render_table(&[(name.to_string(), outcome.evaluation.report.clone())]));
    if let Some(dir) = &outcome.out_dir {
        println!("artifacts in {}", dir.display());
    }
}

fn load_pair(r: &RunArgs) -> Result<(LabeledDataset, LabeledDataset, Option<excon_core::LabelScheme>)> {
    let scheme = r.data_args.scheme()?;
    let train = load_manifest_dataset(&r.train, scheme.as_ref())?;
    let test = load_manifest_dataset(&r.test, scheme.as_ref())?;
    Ok((train, test, scheme))
}

fn pipeline(a: PipelineArgs) -> Result<()> {
    let (train, test, scheme) = load_pair(&a.run)?;
    let cfg = a.run.pipeline_config(excon_core::heads::rocket::DEFAULT_NUM_KERNELS);
    let outcome = run_pipeline(&train, &test, &cfg, scheme.as_ref(), a.run.out.as_deref())?;
    print_outcome("excon", &outcome);
    Ok(())
}

fn baseline(a: BaselineArgs) -> Result<()> {
    let (train, test, scheme) = load_pair(&a.run)?;
    let cfg = a.run.pipeline_config(a.kernels);
    let kind = a.kind.into();
    let outcome = run_baseline(kind, &train, &test, &cfg, scheme.as_ref(), a.run.out.as_deref())?;
    print_outcome(&kind.to_string(), &outcome);
    Ok(())
}

fn project(a: ProjectArgs) -> Result<()> {
    let vectors = read_features_csv(&a.vectors)?;
    let values: Vec<&[f64]> = vectors.iter().map(|v| v.values.as_slice()).collect();
    let points = project_pca(&values, a.dim)?;
    let out: Vec<FeatureVector> = vectors
        .iter()
        .zip(points)
        .map(|(v, p)| FeatureVector::new(v.id.clone(), v.label.clone(), p))
        .collect();
    write_features_csv(&out, &a.out)?;
    println!("projected {} vectors to {} dimensions in {}", out.len(), a.dim, a.out.display());
    Ok(())
}
