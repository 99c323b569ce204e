//! Exhaustive reference implementations, written without the library's
//! search code.

use rand::seq::SliceRandom;
use rand::Rng;
use relation_discovery::discovery::RelGraph;
use relation_discovery::scene::RelationType;

const LABELS: [RelationType; 3] = [RelationType::SameShape, RelationType::SameColor, RelationType::Inside];

/// `1..=max_nodes` nodes; each pair carries a random label with
/// probability one half.
pub fn random_graph<R: Rng>(rng: &mut R, max_nodes: usize) -> RelGraph {
    let n = rng.random_range(1..=max_nodes);
    let labels = rng.random_range(1..=3);
    let mut edges = Vec::new();
    for k in 0..n {
        for l in k + 1..n {
            if rng.random_bool(0.5) {
                edges.push((k, l, LABELS[rng.random_range(0..labels)]));
            }
        }
    }
    RelGraph::new(n, edges).unwrap()
}

/// The same graph under a random node permutation.
pub fn relabeled<R: Rng>(g: &RelGraph, rng: &mut R) -> RelGraph {
    let mut perm: Vec<usize> = (0..g.nodes()).collect();
    perm.shuffle(rng);
    RelGraph::new(g.nodes(), g.edges().iter().map(|e| (perm[e.k], perm[e.l], e.relation))).unwrap()
}

/// Visits every injective partial map from `0..n` into `0..m`
/// (`None` = unmapped).
fn for_each_partial_injection(n: usize, m: usize, f: &mut impl FnMut(&[Option<usize>])) {
    fn go(i: usize, n: usize, m: usize, map: &mut Vec<Option<usize>>, f: &mut impl FnMut(&[Option<usize>])) {
        if i == n {
            f(map);
            return;
        }
        map.push(None);
        go(i + 1, n, m, map, f);
        map.pop();
        for t in 0..m {
            if !map.contains(&Some(t)) {
                map.push(Some(t));
                go(i + 1, n, m, map, f);
                map.pop();
            }
        }
    }
    go(0, n, m, &mut Vec::new(), f);
}

/// Largest number of edges of `a` preserved, label for label, by some node
/// injection into `b`.
pub fn brute_mcs_edges(a: &RelGraph, b: &RelGraph) -> usize {
    let mut best = 0;
    for_each_partial_injection(a.nodes(), b.nodes(), &mut |map| {
        let kept = a
            .edges()
            .iter()
            .filter(|e| match (map[e.k], map[e.l]) {
                (Some(x), Some(y)) => b.label(x, y) == Some(e.relation),
                _ => false,
            })
            .count();
        best = best.max(kept);
    });
    best
}

/// Isomorphism of the non-isolated parts, by trying every bijection.
pub fn brute_isomorphic(a: &RelGraph, b: &RelGraph) -> bool {
    let active = |g: &RelGraph| -> Vec<usize> {
        (0..g.nodes()).filter(|&v| g.edges().iter().any(|e| e.k == v || e.l == v)).collect()
    };
    let (va, vb) = (active(a), active(b));
    if va.len() != vb.len() || a.num_edges() != b.num_edges() {
        return false;
    }
    let mut found = false;
    for_each_partial_injection(va.len(), vb.len(), &mut |map| {
        if found || map.iter().any(Option::is_none) {
            return;
        }
        let to_b = |v: usize| vb[map[va.iter().position(|&x| x == v).unwrap()].unwrap()];
        found = a.edges().iter().all(|e| b.label(to_b(e.k), to_b(e.l)) == Some(e.relation));
    });
    found
}

/// Best accuracy over all bijections cluster → label, counted item by item,
/// and the first maximizing bijection in lexicographic order.
pub fn brute_best_bijection(pred: &[usize], truth: &[usize], k: usize) -> (f64, Vec<usize>) {
    let mut best: Option<(usize, Vec<usize>)> = None;
    for_each_partial_injection(k, k, &mut |map| {
        if map.iter().any(Option::is_none) {
            return;
        }
        let perm: Vec<usize> = map.iter().map(|v| v.unwrap()).collect();
        let hits = pred.iter().zip(truth).filter(|(&p, &t)| perm[p] == t).count();
        if best.as_ref().is_none_or(|(h, _)| hits > *h) {
            best = Some((hits, perm));
        }
    });
    let (hits, perm) = best.unwrap();
    (hits as f64 / pred.len() as f64, perm)
}
