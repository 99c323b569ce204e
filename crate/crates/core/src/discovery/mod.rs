//! Relation discovery after training: k-means over relation embeddings,
//! permutation-matched accuracy, predicted scene graphs, and task-graph
//! retrieval by maximum common subgraph with frequency counting.

mod accuracy;
mod evaluate;
mod graph;
mod kmeans;
mod mcs;
mod retrieval;

use thiserror::Error;

use crate::model::ModelError;

pub use accuracy::{permutation_accuracy, permutations, MAX_BRUTE_FORCE_K};
pub use evaluate::{
    cluster_relations, embed_observations, embed_scenes, predict_observation_graph, retrieve_task_graphs,
    write_embeddings_csv, RelationClustering, SceneEmbeddings,
};
pub use graph::{canonicalize, canonicalize_with_order, Canonical, RelGraph, MAX_NODES};
pub use kmeans::{fit_kmeans, ClusterModel, KMeansConfig};
pub use mcs::{mcs_of_all, mcs_of_pair, mcs_with_witness, McsResult};
pub use retrieval::{
    groups, tally_groups, task_mcs_retrieval, ReportEntry, RetrievalReport, TallyEntry, TaskRetrieval,
};

#[derive(Debug, Error)]
pub enum DiscoveryError {
    #[error("only {distinct} distinct points for k = {k}")]
    DegenerateData { distinct: usize, k: usize },
    #[error("{predicted} predictions for {truth} labels")]
    LengthMismatch { predicted: usize, truth: usize },
    #[error("graph has {nodes} non-isolated nodes, exact search supports {max}")]
    NodeBudgetExceeded { nodes: usize, max: usize },
    #[error("{have} graphs, need at least {need}")]
    TooFewGraphs { have: usize, need: usize },
    #[error("task {task_id}: {have} graphs, need at least {need}")]
    TooFewGraphsForTask { task_id: usize, have: usize, need: usize },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
