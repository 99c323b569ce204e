//! Trains a model on the two-to-three-object task family with the
//! contrastive objective and reports validation relation accuracy per epoch.
//!
//! cargo run --release --example train_contrastive -- [epochs] [examples-per-task] [seed]

use std::time::Instant;

use relation_discovery::pipeline::{train, TrainConfig};
use relation_discovery::scene::{generate_dataset, DistractorPolicy, TaskFamily, TrainingRecord};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let epochs = args.first().copied().unwrap_or(10) as usize;
    let per_task = args.get(1).copied().unwrap_or(250) as usize;
    let seed = args.get(2).copied().unwrap_or(0);

    let family = TaskFamily::two_to_three_core();
    let train_set = generate_dataset(&family, per_task, DistractorPolicy::None, seed, 1)?;
    let validation = generate_dataset(&family, per_task, DistractorPolicy::None, seed + 1, 1)?;
    let records: Vec<TrainingRecord> = train_set.iter().map(TrainingRecord::from).collect();

    let config = TrainConfig {
        seed,
        epochs,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let outcome = train(&records, &validation, &config, 1, |row| {
        println!(
            "epoch {:3}  loss {:.4}  val accuracy {:.3}  ({:.0?})",
            row.epoch,
            row.loss,
            row.val_accuracy,
            start.elapsed()
        );
    })?;
    println!("best accuracy {:.3} at epoch {}", outcome.best_accuracy, outcome.best_epoch);
    Ok(())
}
