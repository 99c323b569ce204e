//! The training loop.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tapegrad::{AdamConfig, AdamState, Tape};

use super::PipelineError;
use crate::discovery::{cluster_relations, embed_observations, KMeansConfig};
use crate::model::{CrGnn, ModelConfig, SceneBatch};
use crate::objectives::{total_loss, LossWeights, Mode, Objective, TaskIndex};
use crate::scene::{Augmentation, Mask, Observation, TrainingRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub objective: Objective,
    pub ib: bool,
    pub seed: u64,
    pub epochs: usize,
    /// Stop after this many epochs without a better validation accuracy.
    pub patience: usize,
    pub tasks_per_batch: usize,
    pub observations_per_task: usize,
    pub learning_rate: f64,
    pub weights: LossWeights,
    pub augment: bool,
    /// Validation scenes per task scored after every epoch.
    pub validation_per_task: usize,
    pub k: usize,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            objective: Objective::Contrastive,
            ib: false,
            seed: 0,
            epochs: 100,
            patience: 15,
            tasks_per_batch: 4,
            observations_per_task: 8,
            learning_rate: 1e-4,
            weights: LossWeights::default(),
            augment: true,
            validation_per_task: 50,
            k: 4,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn mode(&self) -> Mode {
        Mode {
            objective: self.objective,
            ib: self.ib,
        }
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mode: String,
    pub loss: f64,
    pub contrastive: Option<f64>,
    pub classify: Option<f64>,
    pub ib: Option<f64>,
    pub val_accuracy: f64,
    pub seed: u64,
}

pub const LOG_HEADER: &str = "epoch,mode,loss,contrastive,classify,ib,val_accuracy,seed";

impl EpochLog {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
        format!(
            "{},{},{:.6},{},{},{},{:.6},{}",
            self.epoch,
            self.mode,
            self.loss,
            opt(self.contrastive),
            opt(self.classify),
            opt(self.ib),
            self.val_accuracy,
            self.seed
        )
    }
}

pub fn write_log(mut w: impl Write, log: &[EpochLog]) -> std::io::Result<()> {
    writeln!(w, "{LOG_HEADER}")?;
    for row in log {
        writeln!(w, "{}", row.csv_row())?;
    }
    w.flush()
}

pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation accuracy.
    pub model: CrGnn<f32>,
    pub best_epoch: usize,
    pub best_accuracy: f64,
    pub log: Vec<EpochLog>,
}

/// Batches for one epoch: every record exactly once, in chunks of
/// `per_task` same-task records, `tasks` chunks (of distinct tasks) per
/// batch. Tasks with the most chunks left are drawn first so batches keep
/// mixing tasks until the end; leftovers of a last lone task join the final
/// batch.
pub fn plan_epoch(
    task_of: &[usize],
    tasks: usize,
    per_task: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let mut by_task: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &t) in task_of.iter().enumerate() {
        by_task.entry(t).or_default().push(i);
    }
    let mut queues: Vec<Vec<Vec<usize>>> = by_task
        .into_values()
        .map(|mut idx| {
            idx.shuffle(rng);
            let mut chunks: Vec<Vec<usize>> = idx.chunks(per_task).map(<[usize]>::to_vec).collect();
            chunks.reverse(); // pop from the back
            chunks
        })
        .collect();
    let mut batches: Vec<Vec<usize>> = Vec::new();
    loop {
        let mut order: Vec<usize> = (0..queues.len()).filter(|&t| !queues[t].is_empty()).collect();
        if order.len() < 2 {
            let rest: Vec<usize> = order
                .iter()
                .flat_map(|&t| std::mem::take(&mut queues[t]))
                .flatten()
                .collect();
            if !rest.is_empty() {
                match batches.last_mut() {
                    Some(last) => last.extend(rest),
                    None => batches.push(rest),
                }
            }
            return batches;
        }
        order.shuffle(rng);
        order.sort_by_key(|&t| std::cmp::Reverse(queues[t].len()));
        let batch: Vec<usize> = order
            .iter()
            .take(tasks)
            .flat_map(|&t| queues[t].pop().expect("nonempty queue"))
            .collect();
        batches.push(batch);
    }
}

/// First `per_task` observations of each task, by `obs_id`.
pub fn validation_subset(observations: &[Observation], per_task: usize) -> Vec<Observation> {
    let mut by_task: BTreeMap<usize, Vec<&Observation>> = BTreeMap::new();
    for o in observations {
        by_task.entry(o.task_id).or_default().push(o);
    }
    by_task
        .into_values()
        .flat_map(|mut v| {
            v.sort_by_key(|o| o.obs_id);
            v.into_iter().take(per_task).cloned().collect::<Vec<_>>()
        })
        .collect()
}

/// Validation relation accuracy of `model`.
pub fn validation_accuracy(
    model: &CrGnn<f32>,
    validation: &[Observation],
    k: usize,
    seed: u64,
    threads: usize,
) -> Result<f64, PipelineError> {
    let embeddings = embed_observations(model, validation, threads)?;
    let config = KMeansConfig {
        k,
        seed,
        ..KMeansConfig::default()
    };
    Ok(cluster_relations(validation, &embeddings, &config)?.accuracy)
}

/// Trains a fresh model on stripped training records, scoring it on
/// labeled validation scenes after every epoch. `on_epoch` sees each log
/// row as it is produced.
pub fn train(
    records: &[TrainingRecord],
    validation: &[Observation],
    config: &TrainConfig,
    threads: usize,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome, PipelineError> {
    config.weights.validate()?;
    if records.is_empty() {
        return Err(PipelineError::Data("no training records".into()));
    }
    let tasks = TaskIndex::new(records.iter().map(|r| r.task_id));
    if tasks.len() < 2 && config.objective == Objective::Contrastive {
        return Err(PipelineError::Data("contrastive training needs at least two tasks".into()));
    }
    let mut model_config = config.model.clone();
    model_config.ib = config.ib;
    model_config.num_tasks = (config.objective == Objective::Classify).then_some(tasks.len());

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = CrGnn::<f32>::new(model_config, &mut rng);
    let mut adam = AdamState::new(
        model.store(),
        AdamConfig {
            lr: config.learning_rate,
            ..AdamConfig::default()
        },
    );
    let validation = validation_subset(validation, config.validation_per_task);
    let task_of: Vec<usize> = records.iter().map(|r| r.task_id).collect();
    let mode = config.mode();

    let mut log = Vec::new();
    let mut best: Option<(f64, usize, CrGnn<f32>)> = None;
    let mut since_best = 0;
    for epoch in 1..=config.epochs {
        let mut sums = [0.0f64; 4];
        let mut seen = [false; 4];
        let batches = plan_epoch(&task_of, config.tasks_per_batch, config.observations_per_task, &mut rng);
        for batch in &batches {
            let scenes: Vec<(crate::scene::Grid, Vec<Mask>)> = batch
                .iter()
                .map(|&i| {
                    let r = &records[i];
                    match config.augment.then(|| Augmentation::sample(&mut rng)).flatten() {
                        Some(aug) => aug.apply(&r.grid, &r.masks),
                        None => (r.grid, r.masks.clone()),
                    }
                })
                .collect();
            let ids: Vec<usize> = batch.iter().map(|&i| records[i].task_id).collect();
            let input = SceneBatch::<f32>::new(scenes.iter().map(|(g, m)| (g, m.as_slice())))?;
            let noise = config.ib.then(|| model.sample_noise(&input, &mut rng));
            let mut tape = Tape::new();
            let terms = total_loss(&mut tape, &model, &input, &ids, &tasks, mode, &config.weights, noise)?;
            let loss = tape.value(terms.total).item() as f64;
            if !loss.is_finite() {
                return Err(PipelineError::NumericFailure { epoch });
            }
            for (slot, term) in [Some(terms.total), terms.contrastive, terms.classify, terms.ib]
                .into_iter()
                .enumerate()
            {
                if let Some(v) = term {
                    sums[slot] += tape.value(v).item() as f64;
                    seen[slot] = true;
                }
            }
            let grads = tape.backward(terms.total)?.dense(model.store());
            adam.step(model.store_mut(), &grads);
        }
        let n = batches.len() as f64;
        let mean = |slot: usize| seen[slot].then(|| sums[slot] / n);
        let accuracy = validation_accuracy(&model, &validation, config.k, config.seed, threads)?;
        let row = EpochLog {
            epoch,
            mode: mode.to_string(),
            loss: sums[0] / n,
            contrastive: mean(1),
            classify: mean(2),
            ib: mean(3),
            val_accuracy: accuracy,
            seed: config.seed,
        };
        on_epoch(&row);
        log.push(row);
        if best.as_ref().is_none_or(|b| accuracy > b.0) {
            best = Some((accuracy, epoch, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    let (best_accuracy, best_epoch, model) = best.ok_or_else(|| PipelineError::Config("epoch budget is zero".into()))?;
    Ok(TrainOutcome {
        model,
        best_epoch,
        best_accuracy,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_record_lands_in_exactly_one_batch() {
        let task_of: Vec<usize> = (0..250 * 6).map(|i| i / 250).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batches = plan_epoch(&task_of, 4, 8, &mut rng);
        let mut seen = vec![0; task_of.len()];
        for b in &batches {
            for &i in b {
                seen[i] += 1;
            }
            let mut tasks: Vec<usize> = b.iter().map(|&i| task_of[i]).collect();
            tasks.dedup();
            assert!(tasks.len() >= 2);
        }
        assert!(seen.iter().all(|&c| c == 1));
        // full batches are 4 tasks × 8
        assert!(batches.iter().filter(|b| b.len() == 32).count() > batches.len() / 2);
    }

    #[test]
    fn plan_is_seed_deterministic() {
        let task_of: Vec<usize> = (0..100).map(|i| i % 5).collect();
        let a = plan_epoch(&task_of, 4, 8, &mut ChaCha8Rng::seed_from_u64(1));
        let b = plan_epoch(&task_of, 4, 8, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
    }
}
