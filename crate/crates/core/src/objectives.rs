//! Training objectives on graph and relation embeddings: a margin
//! contrastive loss, task classification, and a Gaussian information
//! bottleneck on relation embeddings.

use serde::{Deserialize, Serialize};
use tapegrad::{Scalar, Tape, Tensor, TensorError, Var};
use thiserror::Error;

use crate::model::{CrGnn, ForwardVars, ModelError, SceneBatch};

/// Hinge margin between graph embeddings of different tasks.
pub const DEFAULT_MARGIN: f64 = 20.0 * 2.0 / 3.0;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("contrastive loss needs at least two tasks in a batch")]
    SingleTaskBatch,
    #[error("task index {index} out of range for {num_tasks} tasks")]
    TaskIdOutOfRange { index: usize, num_tasks: usize },
    #[error("unknown task id {0}")]
    UnknownTask(usize),
    #[error("{0}")]
    InvalidWeights(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, ObjectiveError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    Contrastive,
    Classify,
}

impl std::str::FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "contrastive" => Ok(Objective::Contrastive),
            "classify" => Ok(Objective::Classify),
            _ => Err(format!("objective must be contrastive or classify, got {s:?}")),
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Objective::Contrastive => "contrastive",
            Objective::Classify => "classify",
        })
    }
}

/// Which terms are trained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mode {
    pub objective: Objective,
    pub ib: bool,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{}", self.objective, if self.ib { "+ib" } else { "" })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub contrastive: f64,
    pub classify: f64,
    pub ib: f64,
    pub margin: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            contrastive: 1.0,
            classify: 1.0,
            ib: 0.1,
            margin: DEFAULT_MARGIN,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.contrastive, self.classify, self.ib, self.margin];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ObjectiveError::InvalidWeights(format!(
                "weights and margin must be finite and nonnegative: {self:?}"
            )));
        }
        if self.contrastive == 0.0 && self.classify == 0.0 {
            return Err(ObjectiveError::InvalidWeights(
                "contrastive and classify weights are both zero".into(),
            ));
        }
        Ok(())
    }
}

/// Dense indices for the task ids seen in training.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskIndex {
    ids: Vec<usize>,
}

impl TaskIndex {
    pub fn new(task_ids: impl IntoIterator<Item = usize>) -> Self {
        let mut ids: Vec<usize> = task_ids.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        TaskIndex { ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index(&self, task_id: usize) -> Result<usize> {
        self.ids
            .binary_search(&task_id)
            .map_err(|_| ObjectiveError::UnknownTask(task_id))
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }
}

fn pair_distances<T: Scalar>(tape: &mut Tape<T>, x: Var, pairs: &[(usize, usize)]) -> Result<Var> {
    let i: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let j: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let a = tape.gather(x, &i)?;
    let b = tape.gather(x, &j)?;
    let d = tape.sub(a, b)?;
    Ok(tape.l2_norm(d, Some(1))?)
}

/// Mean over all scene pairs of a per-pair cost: the distance for same-task
/// pairs, `max(0, margin − distance)` for cross-task pairs. Both sums share
/// one normalizer, so their balance follows the batch's pair counts and the
/// scale does not depend on batch size. `graph` is `[scenes, dim]`.
pub fn contrastive_loss<T: Scalar>(
    tape: &mut Tape<T>,
    graph: Var,
    task_ids: &[usize],
    margin: f64,
) -> Result<Var> {
    let mut intra = Vec::new();
    let mut inter = Vec::new();
    for a in 0..task_ids.len() {
        for b in a + 1..task_ids.len() {
            if task_ids[a] == task_ids[b] {
                intra.push((a, b));
            } else {
                inter.push((a, b));
            }
        }
    }
    if inter.is_empty() {
        return Err(ObjectiveError::SingleTaskBatch);
    }
    let d_inter = pair_distances(tape, graph, &inter)?;
    let neg = tape.scale(d_inter, -1.0)?;
    let gap = tape.add_scalar(neg, margin)?;
    let hinge = tape.leaky_relu(gap, 0.0)?;
    if intra.is_empty() {
        return Ok(tape.mean(hinge, None)?);
    }
    let d_intra = pair_distances(tape, graph, &intra)?;
    let costs = tape.concat(&[d_intra, hinge], 0)?;
    Ok(tape.mean(costs, None)?)
}

/// Mean softmax cross-entropy of `[scenes, tasks]` logits against dense
/// task indices.
pub fn classify_loss<T: Scalar>(tape: &mut Tape<T>, logits: Var, targets: &[usize]) -> Result<Var> {
    let num_tasks = tape.shape(logits)[1];
    if let Some(&index) = targets.iter().find(|&&t| t >= num_tasks) {
        return Err(ObjectiveError::TaskIdOutOfRange { index, num_tasks });
    }
    Ok(tape.softmax_cross_entropy(logits, targets)?)
}

/// Mean over relation nodes of `KL(N(μ, e^logvar) ‖ N(0, I))`
/// `= ½ Σ_d (μ² + e^logvar − 1 − logvar)`.
pub fn ib_loss<T: Scalar>(tape: &mut Tape<T>, mean: Var, logvar: Var) -> Result<Var> {
    let shape = tape.shape(mean).to_vec();
    let (nodes, dim) = (shape[0], shape[1]);
    let sq = tape.mul(mean, mean)?;
    let var = tape.exp(logvar)?;
    let a = tape.add(sq, var)?;
    let b = tape.sub(a, logvar)?;
    let total = tape.sum(b, None)?;
    let centered = tape.add_scalar(total, -((nodes * dim) as f64))?;
    Ok(tape.scale(centered, 0.5 / nodes as f64)?)
}

/// Handles to the recorded loss and its enabled terms.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub total: Var,
    pub contrastive: Option<Var>,
    pub classify: Option<Var>,
    pub ib: Option<Var>,
    pub forward: ForwardVars,
}

/// Runs the model on `batch` and records the weighted sum of the terms
/// enabled by `mode`. In bottleneck mode `noise` drives the sampled relation
/// nodes; without it the GIN sees the means.
#[allow(clippy::too_many_arguments)]
pub fn total_loss<T: Scalar>(
    tape: &mut Tape<T>,
    model: &CrGnn<T>,
    batch: &SceneBatch<T>,
    task_ids: &[usize],
    tasks: &TaskIndex,
    mode: Mode,
    weights: &LossWeights,
    noise: Option<Tensor<T>>,
) -> Result<LossTerms> {
    weights.validate()?;
    let forward = model.forward(tape, batch, noise)?;
    let (mut contrastive, mut classify, mut ib) = (None, None, None);
    let mut parts = Vec::new();
    match mode.objective {
        Objective::Contrastive => {
            let l = contrastive_loss(tape, forward.graph, task_ids, weights.margin)?;
            contrastive = Some(l);
            parts.push(tape.scale(l, weights.contrastive)?);
        }
        Objective::Classify => {
            let targets = task_ids
                .iter()
                .map(|&t| tasks.index(t))
                .collect::<Result<Vec<_>>>()?;
            let logits = model.classify_logits(tape, forward.graph)?;
            let l = classify_loss(tape, logits, &targets)?;
            classify = Some(l);
            parts.push(tape.scale(l, weights.classify)?);
        }
    }
    if mode.ib {
        let logvar = forward
            .relations
            .logvar
            .ok_or_else(|| ObjectiveError::InvalidWeights("bottleneck mode needs a model built with ib".into()))?;
        let l = ib_loss(tape, forward.relations.mean, logvar)?;
        ib = Some(l);
        parts.push(tape.scale(l, weights.ib)?);
    }
    let mut total = parts[0];
    for &p in &parts[1..] {
        total = tape.add(total, p)?;
    }
    Ok(LossTerms {
        total,
        contrastive,
        classify,
        ib,
        forward,
    })
}
