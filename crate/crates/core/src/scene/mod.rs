//! Procedural grid-world scenes whose core objects realize a task's
//! relational subgraph.

mod augment;
mod dataset;
mod generate;
mod render;
mod task;
mod types;

use thiserror::Error;

pub use augment::{apply_to_observation, augment_observation, Augmentation, AUGMENT_PROBABILITY};
pub use dataset::{
    generate_dataset, read_dataset, read_dataset_from, read_training_records,
    read_training_records_from, scene_rng, write_dataset, write_dataset_to, DistractorPolicy,
    TrainingRecord, SCHEMA_VERSION,
};
pub use generate::{
    generate_observation, generate_observation_with, oracle_edges, relation_oracle,
    relations_between, DEFAULT_MAX_ATTEMPTS,
};
pub use render::{render_input, write_slab, RenderedInput, SLAB_LEN};
pub use task::{TaskFamily, TaskSpec};
pub use types::{
    BBox, Edge, Grid, Mask, Observation, RelationSet, RelationType, SceneObject, ShapeKind, GRID,
    NUM_COLORS,
};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("task {task_id}: no valid scene after {attempts} attempts")]
    GenerationExhausted { task_id: usize, attempts: usize },
    #[error("task {task_id}: {reason}")]
    InvalidTask { task_id: usize, reason: String },
    #[error("scene has {count} objects, at most {max} supported")]
    TooManyObjects { count: usize, max: usize },
    #[error("task config, line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("dataset line {line}: unsupported schema_version {version}")]
    SchemaVersion { line: usize, version: u32 },
    #[error("dataset line {line}: {message}")]
    Data { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
