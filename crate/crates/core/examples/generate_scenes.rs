//! Generates a small dataset, prints a few scenes with their hidden edges,
//! shows one augmentation of each, and writes the JSON Lines file.
//!
//! cargo run --release --example generate_scenes -- [out.jsonl]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relation_discovery::scene::{
    augment_observation, generate_dataset, relation_oracle, write_dataset, DistractorPolicy, Grid, Observation,
    TaskFamily, GRID,
};

fn show(grid: &Grid) -> Vec<String> {
    (0..GRID)
        .map(|r| {
            (0..GRID)
                .map(|c| match grid[r][c] {
                    0 => '.',
                    v => char::from_digit(v as u32, 10).unwrap(),
                })
                .collect()
        })
        .collect()
}

fn describe(o: &Observation) {
    println!("task {} obs {}:", o.task_id, o.obs_id);
    for (i, obj) in o.objects.iter().enumerate() {
        let role = if obj.is_core { "core" } else { "distractor" };
        println!("  object {i}: {:?} color {} ({role})", obj.shape, obj.color);
    }
    for e in &o.edges {
        println!("  edge ({}, {}) {}", e.k, e.l, e.relation);
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "scenes.jsonl".into());
    let family = TaskFamily::two_to_three_core();
    let data = generate_dataset(&family, 20, DistractorPolicy::ZeroToTwo, 0, 1)?;

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for o in data.iter().step_by(40).take(3) {
        describe(o);
        let aug = augment_observation(o, &mut rng);
        for (a, b) in show(&o.grid).iter().zip(show(&aug.grid)) {
            println!("  {a}   {b}");
        }
        // augmentations never change any pair's relation
        for a in 0..o.objects.len() {
            for b in a + 1..o.objects.len() {
                assert_eq!(
                    relation_oracle(&o.objects[a], &o.objects[b]),
                    relation_oracle(&aug.objects[a], &aug.objects[b])
                );
            }
        }
    }
    write_dataset(&data, &out)?;
    println!("wrote {} observations to {out}", data.len());
    Ok(())
}
