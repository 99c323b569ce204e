//! Unsupervised discovery of visual relations from grid-world scenes.
//!
//! Scenes of one task share a hidden relational subgraph. A concept-relation
//! graph network embeds each scene as a line graph of pairwise relation
//! embeddings and is trained only to tell tasks apart. Clustering the
//! relation embeddings afterwards recovers the relation types, and maximum
//! common subgraphs of the predicted scene graphs recover each task's graph.
//!
//! Modules, in pipeline order:
//! - [`scene`]: task specs, scene generation, augmentation, dataset files.
//! - [`model`]: object encoder, relation encoder, line graph and GIN.
//! - [`objectives`]: contrastive, classification and bottleneck losses.
//! - [`discovery`]: k-means, permutation accuracy, graph canonical forms, MCS.
//! - [`pipeline`]: run configs, training loop and the command implementations.

pub mod scene;
pub mod model;
pub mod objectives;
pub mod discovery;
pub mod pipeline;
