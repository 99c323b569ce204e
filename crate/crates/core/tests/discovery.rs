//! Discovery algorithms against exhaustive oracles.

mod common;

use common::oracles::{brute_best_bijection, brute_isomorphic, brute_mcs_edges, random_graph, relabeled};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relation_discovery::discovery::{
    canonicalize, fit_kmeans, mcs_of_all, mcs_with_witness, permutation_accuracy, task_mcs_retrieval, KMeansConfig,
    RelGraph,
};
use relation_discovery::scene::RelationType;

#[test]
fn mcs_matches_exhaustive_injections() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let a = random_graph(&mut rng, 5);
        let b = if rng.random_bool(0.3) { relabeled(&a, &mut rng) } else { random_graph(&mut rng, 5) };
        let got = mcs_with_witness(&a, &b).unwrap();
        assert_eq!(got.graph.num_edges(), brute_mcs_edges(&a, &b), "{a:?} vs {b:?}");
        // the witness really embeds the result into both inputs
        for e in got.graph.edges() {
            assert_eq!(a.label(got.into_a[e.k], got.into_a[e.l]), Some(e.relation));
            assert_eq!(b.label(got.into_b[e.k], got.into_b[e.l]), Some(e.relation));
        }
    }
}

#[test]
fn canonical_equality_is_isomorphism() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut isomorphic = 0;
    for _ in 0..500 {
        let a = random_graph(&mut rng, 5);
        let b = if rng.random_bool(0.5) { relabeled(&a, &mut rng) } else { random_graph(&mut rng, 5) };
        let same = brute_isomorphic(&a, &b);
        isomorphic += usize::from(same);
        assert_eq!(canonicalize(&a).unwrap() == canonicalize(&b).unwrap(), same, "{a:?} vs {b:?}");
    }
    assert!(isomorphic > 100);
}

#[test]
fn permutation_accuracy_matches_all_bijections() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let n = rng.random_range(1..60);
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let (acc, assignment) = permutation_accuracy(&pred, &truth, 4).unwrap();
        let (best, first) = brute_best_bijection(&pred, &truth, 4);
        assert_eq!(acc, best);
        assert_eq!(assignment, first);
    }
}

#[test]
fn random_clusters_score_near_chance_floor() {
    // With four balanced labels and unrelated clusters the best bijection
    // scores a little above 1/4.
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut total = 0.0;
    for _ in 0..200 {
        let truth: Vec<usize> = (0..400).map(|_| rng.random_range(0..4)).collect();
        let pred: Vec<usize> = (0..400).map(|_| rng.random_range(0..4)).collect();
        total += permutation_accuracy(&pred, &truth, 4).unwrap().0;
    }
    let mean = total / 200.0;
    assert!((0.25..0.32).contains(&mean), "{mean}");
}

#[test]
fn kmeans_recovers_separated_blobs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let centers = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0]];
    let mut points = Vec::new();
    let mut truth = Vec::new();
    for _ in 0..400 {
        let c = rng.random_range(0..4);
        points.extend(centers[c].iter().map(|v| v + rng.random_range(-1.0..1.0)));
        truth.push(c);
    }
    let model = fit_kmeans(&points, 2, &KMeansConfig { seed: 3, ..KMeansConfig::default() }).unwrap();
    let (acc, _) = permutation_accuracy(&model.predict_all(&points), &truth, 4).unwrap();
    assert_eq!(acc, 1.0);
    let again = fit_kmeans(&points, 2, &KMeansConfig { seed: 3, ..KMeansConfig::default() }).unwrap();
    assert_eq!(model.centroids, again.centroids);
}

#[test]
fn retrieval_ranks_the_planted_graph_first() {
    use RelationType::*;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let planted = RelGraph::new(3, [(0, 1, Inside), (1, 2, SameColor)]).unwrap();
    // every observation contains the planted graph plus noise edges on a
    // fourth object, under a random node order
    let graphs: Vec<RelGraph> = (0..40)
        .map(|_| {
            let mut edges: Vec<_> = planted.edges().iter().map(|e| (e.k, e.l, e.relation)).collect();
            if rng.random_bool(0.5) {
                edges.push((rng.random_range(0..3), 3, [SameShape, SameColor][rng.random_range(0..2)]));
            }
            relabeled(&RelGraph::new(4, edges).unwrap(), &mut rng)
        })
        .collect();
    let tally = task_mcs_retrieval(&graphs, 5, 3).unwrap();
    assert_eq!(tally[0].canonical, planted.canonical().unwrap());
    // a group whose members all carry compatible noise edges can keep one
    assert!(tally[0].count >= 6, "{tally:?}");
    assert_eq!(mcs_of_all(&graphs).unwrap().canonical().unwrap(), planted.canonical().unwrap());
}

proptest! {
    #[test]
    fn mcs_is_symmetric_in_size_and_bounded(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_graph(&mut rng, 5);
        let b = random_graph(&mut rng, 5);
        let ab = mcs_with_witness(&a, &b).unwrap();
        let ba = mcs_with_witness(&b, &a).unwrap();
        prop_assert_eq!(ab.graph.num_edges(), ba.graph.num_edges());
        prop_assert!(ab.graph.num_edges() <= a.num_edges().min(b.num_edges()));
        prop_assert_eq!(&mcs_with_witness(&a, &a).unwrap().canonical, &canonicalize(&a).unwrap());
    }

    #[test]
    fn canonical_form_round_trips(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_graph(&mut rng, 6);
        let c = canonicalize(&a).unwrap();
        prop_assert_eq!(canonicalize(&c.to_graph()).unwrap(), c.clone());
        prop_assert_eq!(canonicalize(&relabeled(&a, &mut rng)).unwrap(), c);
    }
}
