//! Relation discovery after training: cluster the relation embeddings of a
//! validation set, score them against the oracle labels, retrieve each
//! task's shared graph by MCS, and dump the embeddings as CSV.
//!
//! cargo run --release --example discover_relations -- [checkpoint.bin] [epochs]
//!
//! Without a checkpoint a model is trained for a few epochs first (expect
//! near-chance clusters from such a short run).

use std::fs::File;
use std::io::BufWriter;

use relation_discovery::discovery::{
    cluster_relations, embed_observations, retrieve_task_graphs, write_embeddings_csv, KMeansConfig,
};
use relation_discovery::model::{object_pairs, CrGnn};
use relation_discovery::pipeline::{train, TrainConfig};
use relation_discovery::scene::{generate_dataset, DistractorPolicy, RelationType, TaskFamily, TrainingRecord};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let family = TaskFamily::two_to_three_core();
    let validation = generate_dataset(&family, 100, DistractorPolicy::None, 1, 1)?;

    let model = match args.first() {
        Some(path) => CrGnn::<f32>::load(path)?,
        None => {
            let epochs = args.get(1).map_or(Ok(3), |e| e.parse())?;
            let train_set = generate_dataset(&family, 100, DistractorPolicy::None, 0, 1)?;
            let records: Vec<TrainingRecord> = train_set.iter().map(TrainingRecord::from).collect();
            let config = TrainConfig { epochs, ..TrainConfig::default() };
            let out = train(&records, &validation, &config, 1, |row| {
                println!("epoch {:2}  loss {:.3}  val accuracy {:.3}", row.epoch, row.loss, row.val_accuracy)
            })?;
            out.model
        }
    };

    let emb = embed_observations(&model, &validation, 1)?;
    let c = cluster_relations(&validation, &emb, &KMeansConfig::default())?;
    println!("\naccuracy {:.3} over {} labeled pairs", c.accuracy, c.labeled_pairs);
    println!("cluster → relation {:?}", c.assignment);

    // rows: oracle label, columns: cluster
    let mut confusion = [[0usize; 4]; 4];
    for (o, e) in validation.iter().zip(&emb) {
        for (i, (k, l)) in object_pairs(e.n_objects).into_iter().enumerate() {
            if let Some(label) = o.label(k, l) {
                confusion[label.index()][c.clusters.predict(e.pair(i))] += 1;
            }
        }
    }
    println!("\n{:>12} {:?}", "", c.assignment);
    for r in RelationType::ALL {
        println!("{:>12} {:?}", format!("{r:?}"), confusion[r.index()]);
    }

    let report = retrieve_task_graphs(&validation, &emb, &c, &family, 5, 3)?;
    println!("\ntop MCS retrievals (groups of 5):");
    for t in &report.tasks {
        println!("task {} truth {:?}", t.task_id, t.ground_truth);
        for entry in &t.top {
            println!("  {:3} × {:?}", entry.count, entry.edges);
        }
    }
    println!("ground truth in top 3 for {}/{} tasks", report.hits(), report.tasks.len());

    let path = std::env::temp_dir().join("relation_embeddings.csv");
    write_embeddings_csv(BufWriter::new(File::create(&path)?), &validation, &emb)?;
    println!("\nembeddings written to {}", path.display());
    Ok(())
}
