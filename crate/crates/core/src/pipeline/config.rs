//! Run configuration: one JSON file plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::train::TrainConfig;
use super::PipelineError;
use crate::objectives::{LossWeights, Objective};
use crate::scene::{DistractorPolicy, TaskFamily};

pub const TWO_TO_THREE: &str = "core-2-3";
pub const TWO_TO_FOUR: &str = "core-2-4";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `core-2-3`, `core-2-4`, or a path to a task-family JSON file.
    pub tasks: String,
    pub examples_per_task: usize,
    pub distractors: DistractorPolicy,
    pub seed: u64,
    pub objective: Objective,
    pub ib: bool,
    pub epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub weights: LossWeights,
    pub augment: bool,
    pub validation_per_task: usize,
    pub k: usize,
    pub group_size: usize,
    pub top: usize,
    /// Directory holding datasets, checkpoint, logs and reports.
    pub out: PathBuf,
    /// Checkpoint to read instead of `<out>/checkpoint.bin`.
    pub checkpoint: Option<PathBuf>,
    /// Dataset to evaluate instead of `<out>/validation.jsonl`.
    pub dataset: Option<PathBuf>,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        RunConfig {
            tasks: TWO_TO_THREE.into(),
            examples_per_task: 250,
            distractors: DistractorPolicy::None,
            seed: 0,
            objective: train.objective,
            ib: train.ib,
            epochs: train.epochs,
            patience: train.patience,
            learning_rate: train.learning_rate,
            weights: train.weights,
            augment: train.augment,
            validation_per_task: train.validation_per_task,
            k: train.k,
            group_size: 5,
            top: 3,
            out: PathBuf::from("run"),
            checkpoint: None,
            dataset: None,
            threads: 1,
        }
    }
}

/// Command-line values that replace config-file values when present.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub tasks: Option<String>,
    pub seed: Option<u64>,
    pub objective: Option<Objective>,
    pub ib: bool,
    pub distractors: Option<DistractorPolicy>,
    pub examples_per_task: Option<usize>,
    pub epochs: Option<usize>,
    pub k: Option<usize>,
    pub group_size: Option<usize>,
    pub top: Option<usize>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text)
            .map_err(|e| PipelineError::Config(format!("line {}: {e}", e.line())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: Overrides) {
        macro_rules! take {
            ($($field:ident),*) => { $(if let Some(v) = o.$field { self.$field = v; })* };
        }
        take!(tasks, seed, objective, distractors, examples_per_task, epochs, k, group_size, top, out, threads);
        if o.ib {
            self.ib = true;
        }
        if o.checkpoint.is_some() {
            self.checkpoint = o.checkpoint;
        }
        if o.dataset.is_some() {
            self.dataset = o.dataset;
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.examples_per_task == 0 {
            return bad("examples_per_task must be positive".into());
        }
        if self.k < 4 || self.k > crate::discovery::MAX_BRUTE_FORCE_K {
            return bad(format!("k must be in 4..={}", crate::discovery::MAX_BRUTE_FORCE_K));
        }
        if self.group_size < 2 {
            return bad("group_size must be at least 2".into());
        }
        if self.top == 0 {
            return bad("top must be positive".into());
        }
        if self.threads == 0 {
            return bad("threads must be positive".into());
        }
        self.weights.validate().map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn family(&self) -> Result<TaskFamily, PipelineError> {
        let family = match self.tasks.as_str() {
            TWO_TO_THREE => TaskFamily::two_to_three_core(),
            TWO_TO_FOUR => TaskFamily::two_to_four_core(),
            path => TaskFamily::load(path).map_err(|e| PipelineError::Config(format!("{path}: {e}")))?,
        };
        family
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(family)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            objective: self.objective,
            ib: self.ib,
            seed: self.seed,
            epochs: self.epochs,
            patience: self.patience,
            learning_rate: self.learning_rate,
            weights: self.weights,
            augment: self.augment,
            validation_per_task: self.validation_per_task,
            k: self.k,
            ..TrainConfig::default()
        }
    }

    pub fn train_path(&self) -> PathBuf {
        self.out.join("train.jsonl")
    }

    pub fn validation_path(&self) -> PathBuf {
        self.out.join("validation.jsonl")
    }

    /// Dataset read by eval, retrieve and export.
    pub fn eval_dataset_path(&self) -> PathBuf {
        self.dataset.clone().unwrap_or_else(|| self.validation_path())
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out.join("checkpoint.bin"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn file_values_and_overrides() {
        let mut c = RunConfig::from_json(r#"{"seed": 9, "distractors": "0-2", "objective": "classify"}"#).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.distractors, DistractorPolicy::ZeroToTwo);
        c.apply(Overrides {
            seed: Some(3),
            ib: true,
            ..Overrides::default()
        });
        assert_eq!((c.seed, c.ib, c.objective), (3, true, Objective::Classify));
    }

    #[test]
    fn errors_report_the_line() {
        let err = RunConfig::from_json("{\n  \"seed\": 1,\n  \"bogus\": 2\n}").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
