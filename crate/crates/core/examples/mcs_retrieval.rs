//! Maximum common subgraphs and canonical forms on hand-built relation
//! graphs, then a tally over noisy copies of one planted task graph.
//!
//! cargo run --release --example mcs_retrieval

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relation_discovery::discovery::{mcs_with_witness, task_mcs_retrieval, RelGraph};
use relation_discovery::scene::RelationType::{self, *};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = RelGraph::new(4, [(0, 1, Inside), (1, 2, SameColor), (2, 3, SameShape)])?;
    let b = RelGraph::new(3, [(0, 2, SameColor), (1, 2, Inside), (0, 1, SameShape)])?;
    let m = mcs_with_witness(&a, &b)?;
    println!("a = {:?}", a.to_pairs());
    println!("b = {:?}", b.to_pairs());
    println!("mcs = {:?}", m.graph.to_pairs());
    println!("  embeds into a via {:?}, into b via {:?}", m.into_a, m.into_b);
    println!("  canonical bytes {:?}", m.canonical.as_bytes());

    let planted = RelGraph::new(3, [(0, 1, SameColor), (1, 2, SameShape)])?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noisy: Vec<RelGraph> = (0..50)
        .map(|_| {
            let mut edges: Vec<(usize, usize, RelationType)> =
                planted.edges().iter().map(|e| (e.k, e.l, e.relation)).collect();
            // a misclassified pair now and then
            if rng.random_bool(0.3) {
                edges.push((0, 2, [SameColor, Inside][rng.random_range(0..2)]));
            }
            let mut perm = [0, 1, 2];
            perm.shuffle(&mut rng);
            RelGraph::new(3, edges.into_iter().map(|(k, l, r)| (perm[k], perm[l], r))).unwrap()
        })
        .collect();
    println!("\nplanted {:?}; top retrievals over groups of 5:", planted.to_pairs());
    for entry in task_mcs_retrieval(&noisy, 5, 3)? {
        println!("  {:2} × {:?}", entry.count, entry.graph.to_pairs());
    }
    Ok(())
}
