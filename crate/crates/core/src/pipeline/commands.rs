//! The five commands, as library functions over a [`RunConfig`].

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::train::{train, write_log};
use super::PipelineError;
use crate::discovery::{
    cluster_relations, embed_observations, retrieve_task_graphs, write_embeddings_csv, KMeansConfig,
    RelationClustering, RetrievalReport, SceneEmbeddings,
};
use crate::model::CrGnn;
use crate::scene::{
    generate_dataset, read_dataset, read_training_records, write_dataset, Observation, RelationType,
};

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn prepare(config: &RunConfig) -> Result<(), PipelineError> {
    config.validate()?;
    fs::create_dir_all(&config.out)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenSummary {
    pub train: PathBuf,
    pub validation: PathBuf,
    pub train_records: usize,
    pub validation_records: usize,
}

/// Generates the training set with `seed` and the validation set with
/// `seed + 1`.
pub fn cmd_gen(config: &RunConfig) -> Result<GenSummary, PipelineError> {
    prepare(config)?;
    let family = config.family()?;
    let mut counts = [0; 2];
    for (i, (path, seed)) in [
        (config.train_path(), config.seed),
        (config.validation_path(), config.seed + 1),
    ]
    .into_iter()
    .enumerate()
    {
        let data = generate_dataset(&family, config.examples_per_task, config.distractors, seed, config.threads)?;
        write_dataset(&data, &path)?;
        counts[i] = data.len();
    }
    Ok(GenSummary {
        train: config.train_path(),
        validation: config.validation_path(),
        train_records: counts[0],
        validation_records: counts[1],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
}

/// Trains on `<out>/train.jsonl` (objects and edges are never read),
/// validates on `<out>/validation.jsonl`, and writes the best checkpoint and
/// the per-epoch CSV log.
pub fn cmd_train(config: &RunConfig, mut progress: impl FnMut(&str)) -> Result<TrainSummary, PipelineError> {
    prepare(config)?;
    let records = read_training_records(config.train_path())?;
    let validation = read_dataset(config.validation_path())?;
    let log_path = config.out.join("train_log.csv");
    let outcome = train(&records, &validation, &config.train_config(), config.threads, |row| {
        progress(&row.csv_row())
    })?;
    let checkpoint = config.out.join("checkpoint.bin");
    outcome.model.save(&checkpoint)?;
    write_log(BufWriter::new(File::create(&log_path)?), &outcome.log)?;
    let summary = TrainSummary {
        checkpoint,
        log: log_path,
        epochs_run: outcome.log.len(),
        best_epoch: outcome.best_epoch,
        best_val_accuracy: outcome.best_accuracy,
    };
    write_json(&config.out.join("train_summary.json"), &summary)?;
    Ok(summary)
}

fn load_for_eval(config: &RunConfig) -> Result<(CrGnn<f32>, Vec<Observation>, Vec<SceneEmbeddings>), PipelineError> {
    prepare(config)?;
    let model = CrGnn::<f32>::load(config.checkpoint_path())?;
    let data = read_dataset(config.eval_dataset_path())?;
    if data.is_empty() {
        return Err(PipelineError::Data("evaluation dataset is empty".into()));
    }
    let embeddings = embed_observations(&model, &data, config.threads)?;
    Ok((model, data, embeddings))
}

fn clustering(config: &RunConfig, data: &[Observation], emb: &[SceneEmbeddings]) -> Result<RelationClustering, PipelineError> {
    let km = KMeansConfig {
        k: config.k,
        seed: config.seed,
        ..KMeansConfig::default()
    };
    Ok(cluster_relations(data, emb, &km)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: PathBuf,
    pub checkpoint: PathBuf,
    pub k: usize,
    pub accuracy: f64,
    pub labeled_pairs: usize,
    pub inertia: f64,
    /// Relation type of each cluster, by cluster id.
    pub assignment: Vec<RelationType>,
}

/// Relation accuracy of the checkpoint on the evaluation dataset;
/// written to `<out>/eval.json`.
pub fn cmd_eval(config: &RunConfig) -> Result<EvalReport, PipelineError> {
    let (_, data, emb) = load_for_eval(config)?;
    let c = clustering(config, &data, &emb)?;
    let report = EvalReport {
        dataset: config.eval_dataset_path(),
        checkpoint: config.checkpoint_path(),
        k: config.k,
        accuracy: c.accuracy,
        labeled_pairs: c.labeled_pairs,
        inertia: c.clusters.inertia,
        assignment: c.assignment,
    };
    write_json(&config.out.join("eval.json"), &report)?;
    Ok(report)
}

/// Top MCS retrievals per task of the configured family, with clusters
/// fitted and matched on the evaluation dataset; written to
/// `<out>/retrieval.json`.
pub fn cmd_retrieve(config: &RunConfig) -> Result<RetrievalReport, PipelineError> {
    let family = config.family()?;
    let (_, data, emb) = load_for_eval(config)?;
    let c = clustering(config, &data, &emb)?;
    let report = retrieve_task_graphs(&data, &emb, &c, &family, config.group_size, config.top)?;
    write_json(&config.out.join("retrieval.json"), &report)?;
    Ok(report)
}

/// Writes `<out>/embeddings.csv`, one row per object pair.
pub fn cmd_export(config: &RunConfig) -> Result<PathBuf, PipelineError> {
    let (_, data, emb) = load_for_eval(config)?;
    let path = config.out.join("embeddings.csv");
    write_embeddings_csv(BufWriter::new(File::create(&path)?), &data, &emb)?;
    Ok(path)
}
