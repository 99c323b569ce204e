//! Shared helpers for the integration tests.

#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relation_discovery::model::{CrGnn, ModelConfig, SceneBatch};
use relation_discovery::objectives::{total_loss, LossWeights, Mode, Objective, TaskIndex};
use relation_discovery::scene::{generate_observation, TaskFamily};
use tapegrad::gradcheck::{check, GradCheck};
use tapegrad::{ParamId, Tape};

pub const MODES: [Mode; 4] = [
    Mode { objective: Objective::Contrastive, ib: false },
    Mode { objective: Objective::Contrastive, ib: true },
    Mode { objective: Objective::Classify, ib: false },
    Mode { objective: Objective::Classify, ib: true },
];

/// One randomized end-to-end finite-difference check of the model loss.
#[derive(Debug)]
pub struct FullModelCheck {
    pub seed: u64,
    pub mode: Mode,
    pub scenes: usize,
    /// Coordinates whose difference window stayed on one linear piece.
    pub report: GradCheck,
    /// Coordinates drawn but discarded because `±h` straddled a kink.
    pub kinked: usize,
}

impl FullModelCheck {
    pub fn error(&self) -> f64 {
        self.report.relative_error()
    }
}

/// Random 64-bit model, random scenes from both core families, random mode
/// (unless given) and a margin near the initial inter-task distances so the
/// hinge is partly active. Draws coordinates (every parameter tensor in the
/// first round) until `want` of them have kink-free difference windows.
pub fn full_model_check(seed: u64, mode: Option<Mode>, want: usize, h: f64) -> FullModelCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mode = mode.unwrap_or_else(|| *MODES.choose(&mut rng).unwrap());
    let family = if rng.random_bool(0.5) {
        TaskFamily::two_to_three_core()
    } else {
        TaskFamily::two_to_four_core()
    };
    let n_scenes = rng.random_range(3..=5);
    let mut task_ids: Vec<usize> = (0..n_scenes).map(|_| rng.random_range(0..family.tasks.len())).collect();
    while task_ids.iter().all(|&t| t == task_ids[0]) {
        task_ids[0] = rng.random_range(0..family.tasks.len());
    }
    let data: Vec<_> = task_ids
        .iter()
        .map(|&t| generate_observation(&family.tasks[t], rng.random_range(0..=2), &mut rng).unwrap())
        .collect();

    let tasks = TaskIndex::new(task_ids.iter().copied());
    let config = ModelConfig {
        ib: mode.ib,
        num_tasks: (mode.objective == Objective::Classify).then_some(tasks.len()),
        ..ModelConfig::default()
    };
    let model = CrGnn::<f64>::new(config, &mut rng);
    let masks: Vec<_> = data.iter().map(|o| o.masks()).collect();
    let batch = SceneBatch::<f64>::new(data.iter().zip(&masks).map(|(o, m)| (&o.grid, m.as_slice()))).unwrap();
    let noise = mode.ib.then(|| model.sample_noise(&batch, &mut rng));

    let graph = {
        let mut tape = Tape::inference();
        let out = model.forward(&mut tape, &batch, noise.clone()).unwrap();
        tape.value(out.graph).clone()
    };
    let dim = graph.shape()[1];
    let mut inter = Vec::new();
    for a in 0..n_scenes {
        for b in a + 1..n_scenes {
            if task_ids[a] != task_ids[b] {
                let d: f64 = (0..dim)
                    .map(|j| (graph.data()[a * dim + j] - graph.data()[b * dim + j]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                inter.push(d);
            }
        }
    }
    let mean_inter = inter.iter().sum::<f64>() / inter.len() as f64;
    let weights = LossWeights {
        margin: mean_inter * rng.random_range(0.7..1.3),
        ..LossWeights::default()
    };

    let ids: Vec<ParamId> = model.store().ids().collect();
    let mut picks: Vec<(ParamId, usize)> = ids
        .iter()
        .map(|&id| (id, rng.random_range(0..model.store().get(id).len())))
        .collect();
    let loss = |tape: &mut Tape<f64>, store: &tapegrad::ParamStore<f64>| {
        let mut m = model.clone();
        *m.store_mut() = store.clone();
        let terms = total_loss(tape, &m, &batch, &task_ids, &tasks, mode, &weights, noise.clone())
            .map_err(|e| tapegrad::TensorError::InvalidArgument { op: "loss", reason: e.to_string() })?;
        Ok(terms.total)
    };

    let mut smooth = GradCheck { analytic: vec![], numeric: vec![], kinked: vec![] };
    let mut kinked = 0;
    for _round in 0..8 {
        let round = check(model.store(), Some(&picks), h, loss).unwrap();
        kinked += round.kinked.iter().filter(|&&k| k).count();
        let round = round.smooth();
        smooth.analytic.extend(round.analytic);
        smooth.numeric.extend(round.numeric);
        smooth.kinked.extend(round.kinked);
        if smooth.analytic.len() >= want {
            break;
        }
        picks = (0..want - smooth.analytic.len())
            .map(|_| {
                let id = ids[rng.random_range(0..ids.len())];
                (id, rng.random_range(0..model.store().get(id).len()))
            })
            .collect();
    }
    FullModelCheck {
        seed,
        mode,
        scenes: n_scenes,
        report: smooth,
        kinked,
    }
}

pub mod oracles;
