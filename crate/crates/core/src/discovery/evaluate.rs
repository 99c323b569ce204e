//! Model-dependent discovery steps: relation embeddings for a dataset,
//! cluster fitting and scoring, predicted scene graphs and retrieval.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::accuracy::permutation_accuracy;
use super::graph::RelGraph;
use super::kmeans::{fit_kmeans, ClusterModel, KMeansConfig};
use super::retrieval::{groups, tally_groups, ReportEntry, RetrievalReport, TaskRetrieval};
use super::DiscoveryError;
use crate::model::{object_pairs, CrGnn, SceneBatch};
use crate::scene::{Grid, Mask, Observation, RelationType, TaskFamily};

/// Scenes per forward pass during evaluation.
const EVAL_CHUNK: usize = 64;

/// Relation means of one scene: pairs in [`object_pairs`] order, `dim`
/// values each.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneEmbeddings {
    pub n_objects: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl SceneEmbeddings {
    pub fn pair(&self, index: usize) -> &[f64] {
        &self.values[index * self.dim..(index + 1) * self.dim]
    }
}

fn embed_chunk(model: &CrGnn<f32>, scenes: &[(&Grid, Vec<Mask>)]) -> Result<Vec<SceneEmbeddings>, DiscoveryError> {
    let batch = SceneBatch::<f32>::new(scenes.iter().map(|(g, m)| (*g, m.as_slice())))?;
    let per_scene = model.relation_embeddings(&batch)?;
    Ok(per_scene
        .into_iter()
        .zip(scenes)
        .map(|(t, (_, masks))| SceneEmbeddings {
            n_objects: masks.len(),
            dim: t.shape()[1],
            values: t.data().iter().map(|&v| v as f64).collect(),
        })
        .collect())
}

/// Relation embeddings of every object pair of every scene, evaluated with
/// up to `threads` workers. Results do not depend on `threads`.
pub fn embed_scenes(
    model: &CrGnn<f32>,
    scenes: &[(&Grid, Vec<Mask>)],
    threads: usize,
) -> Result<Vec<SceneEmbeddings>, DiscoveryError> {
    let chunks: Vec<&[(&Grid, Vec<Mask>)]> = scenes.chunks(EVAL_CHUNK).collect();
    let threads = threads.max(1).min(chunks.len().max(1));
    let results: Vec<Result<Vec<SceneEmbeddings>, DiscoveryError>> = if threads == 1 {
        chunks.iter().map(|c| embed_chunk(model, c)).collect()
    } else {
        let per = chunks.len().div_ceil(threads);
        std::thread::scope(|s| {
            let handles: Vec<_> = chunks
                .chunks(per)
                .map(|group| s.spawn(move || group.iter().map(|c| embed_chunk(model, c)).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("evaluation thread panicked"))
                .collect()
        })
    };
    let mut out = Vec::with_capacity(scenes.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

pub fn embed_observations(
    model: &CrGnn<f32>,
    observations: &[Observation],
    threads: usize,
) -> Result<Vec<SceneEmbeddings>, DiscoveryError> {
    let scenes: Vec<(&Grid, Vec<Mask>)> = observations.iter().map(|o| (&o.grid, o.masks())).collect();
    embed_scenes(model, &scenes, threads)
}

/// Clusters fitted to a labeled dataset and their best mapping to relation
/// types.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationClustering {
    pub clusters: ClusterModel,
    /// `assignment[c]` is the relation type of cluster `c`.
    pub assignment: Vec<RelationType>,
    /// Fraction of labeled pairs whose cluster maps to their label.
    pub accuracy: f64,
    pub labeled_pairs: usize,
}

/// Fits k-means on all pair embeddings and scores it on the pairs that
/// carry a relation label.
pub fn cluster_relations(
    observations: &[Observation],
    embeddings: &[SceneEmbeddings],
    config: &KMeansConfig,
) -> Result<RelationClustering, DiscoveryError> {
    if config.k < 4 {
        return Err(DiscoveryError::InvalidArgument(format!(
            "k = {} cannot separate the four relation labels",
            config.k
        )));
    }
    let dim = embeddings.first().map_or(0, |e| e.dim);
    let points: Vec<f64> = embeddings.iter().flat_map(|e| e.values.iter().copied()).collect();
    let clusters = fit_kmeans(&points, dim, config)?;
    let mut predicted = Vec::new();
    let mut truth = Vec::new();
    for (o, e) in observations.iter().zip(embeddings) {
        for (i, (k, l)) in object_pairs(e.n_objects).into_iter().enumerate() {
            if let Some(label) = o.label(k, l).filter(|&r| r != RelationType::None) {
                predicted.push(clusters.predict(e.pair(i)));
                truth.push(label.index());
            }
        }
    }
    let (accuracy, bijection) = permutation_accuracy(&predicted, &truth, config.k)?;
    let assignment = bijection
        .into_iter()
        .map(|l| RelationType::from_index(l).unwrap_or(RelationType::None))
        .collect();
    Ok(RelationClustering {
        clusters,
        assignment,
        accuracy,
        labeled_pairs: truth.len(),
    })
}

/// Every object pair labeled by its nearest cluster's relation; pairs in a
/// `None` cluster get no edge.
pub fn predict_observation_graph(
    embeddings: &SceneEmbeddings,
    clustering: &RelationClustering,
) -> RelGraph {
    let edges = object_pairs(embeddings.n_objects)
        .into_iter()
        .enumerate()
        .map(|(i, (k, l))| (k, l, clustering.assignment[clustering.clusters.predict(embeddings.pair(i))]))
        .filter(|e| e.2 != RelationType::None);
    RelGraph::new(embeddings.n_objects, edges).expect("one edge per pair")
}

/// Predicted graphs grouped per task of `family`, each in `obs_id` order,
/// then MCS-tallied.
pub fn retrieve_task_graphs(
    observations: &[Observation],
    embeddings: &[SceneEmbeddings],
    clustering: &RelationClustering,
    family: &TaskFamily,
    group_size: usize,
    top_k: usize,
) -> Result<RetrievalReport, DiscoveryError> {
    let mut tasks = Vec::new();
    for spec in &family.tasks {
        let mut mine: Vec<(usize, RelGraph)> = observations
            .iter()
            .zip(embeddings)
            .filter(|(o, _)| o.task_id == spec.task_id)
            .map(|(o, e)| (o.obs_id, predict_observation_graph(e, clustering)))
            .collect();
        mine.sort_by_key(|(id, _)| *id);
        let graphs: Vec<RelGraph> = mine.into_iter().map(|(_, g)| g).collect();
        let tally = tally_groups(&graphs, group_size).map_err(|e| match e {
            DiscoveryError::TooFewGraphs { have, need } => DiscoveryError::TooFewGraphsForTask {
                task_id: spec.task_id,
                have,
                need,
            },
            e => e,
        })?;
        let truth = RelGraph::from_task(spec);
        let truth_c = truth.canonical()?;
        let top: Vec<_> = tally.iter().take(top_k).collect();
        tasks.push(TaskRetrieval {
            task_id: spec.task_id,
            groups: groups(graphs.len(), group_size).len(),
            ground_truth_rank: top.iter().position(|e| e.canonical == truth_c).map(|r| r + 1),
            top: top.into_iter().map(ReportEntry::from).collect(),
            ground_truth: truth_c.to_graph().to_pairs(),
        });
    }
    Ok(RetrievalReport {
        group_size,
        top_k,
        tasks,
    })
}

/// CSV with one row per object pair: `obs_id,k,l,z0..z{d-1},label`, the
/// label empty for pairs without a ground-truth relation.
pub fn write_embeddings_csv(
    mut w: impl Write,
    observations: &[Observation],
    embeddings: &[SceneEmbeddings],
) -> Result<(), DiscoveryError> {
    let dim = embeddings.first().map_or(20, |e| e.dim);
    let mut header = vec!["obs_id".to_string(), "k".into(), "l".into()];
    header.extend((0..dim).map(|i| format!("z{i}")));
    header.push("label".into());
    writeln!(w, "{}", header.join(","))?;
    for (o, e) in observations.iter().zip(embeddings) {
        for (i, (k, l)) in object_pairs(e.n_objects).into_iter().enumerate() {
            let mut row = format!("{},{k},{l}", o.obs_id);
            for v in e.pair(i) {
                // f32 source values; shortest round-trip form is stable
                row.push_str(&format!(",{}", *v as f32));
            }
            row.push(',');
            if let Some(label) = o.label(k, l).filter(|&r| r != RelationType::None) {
                row.push_str(label.as_str());
            }
            writeln!(w, "{row}")?;
        }
    }
    w.flush()?;
    Ok(())
}
