//! Exact maximum common edge-labeled subgraph of two small graphs.

use std::collections::HashMap;

use super::graph::{canonicalize_with_order, Canonical, RelGraph, MAX_NODES};
use super::DiscoveryError;

/// A maximum common subgraph with its embeddings: canonical node `i` of
/// `graph` is node `into_a[i]` of the first input and `into_b[i]` of the
/// second, and every edge of `graph` is present, with the same label, under
/// both maps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct McsResult {
    pub graph: RelGraph,
    pub canonical: Canonical,
    pub into_a: Vec<usize>,
    pub into_b: Vec<usize>,
}

pub fn mcs_of_pair(a: &RelGraph, b: &RelGraph) -> Result<RelGraph, DiscoveryError> {
    Ok(mcs_with_witness(a, b)?.graph)
}

struct Search<'a> {
    a_nodes: Vec<usize>,
    a_adj: Vec<u8>,
    a_n: usize,
    b_adj: Vec<u8>,
    b_n: usize,
    /// Edges of `a` with an endpoint at search position ≥ i.
    pending: Vec<usize>,
    a: &'a RelGraph,
    assign: Vec<Option<usize>>,
    best: usize,
    /// Optimal edge sets found so far with one witness assignment each.
    optima: HashMap<u32, Vec<Option<usize>>>,
    /// Once this many edges are matched every optimum is isomorphic.
    cap: usize,
    done: bool,
}

fn adjacency(g: &RelGraph) -> Vec<u8> {
    let n = g.nodes();
    let mut adj = vec![0u8; n * n];
    for e in g.edges() {
        adj[e.k * n + e.l] = e.relation.index() as u8;
        adj[e.l * n + e.k] = e.relation.index() as u8;
    }
    adj
}

impl Search<'_> {
    fn kept_mask(&self) -> (usize, u32) {
        let mut count = 0;
        let mut mask = 0u32;
        for (id, e) in self.a.edges().iter().enumerate() {
            if let (Some(x), Some(y)) = (self.assign[e.k], self.assign[e.l]) {
                if self.b_adj[x * self.b_n + y] == e.relation.index() as u8 {
                    count += 1;
                    mask |= 1 << id;
                }
            }
        }
        (count, mask)
    }

    fn dfs(&mut self, depth: usize, count: usize, used: u32) {
        if self.done {
            return;
        }
        if count + self.pending[depth] < self.best {
            return;
        }
        if depth == self.a_nodes.len() {
            let (kept, mask) = self.kept_mask();
            debug_assert_eq!(kept, count);
            if kept > self.best {
                self.best = kept;
                self.optima.clear();
            }
            if kept == self.best {
                self.optima.entry(mask).or_insert_with(|| self.assign.clone());
                if kept == self.cap {
                    self.done = true;
                }
            }
            return;
        }
        let u = self.a_nodes[depth];
        for v in 0..self.b_n {
            if used & (1 << v) != 0 {
                continue;
            }
            let mut gain = 0;
            for &w in &self.a_nodes[..depth] {
                let label = self.a_adj[u * self.a_n + w];
                if label != 0 {
                    if let Some(x) = self.assign[w] {
                        if self.b_adj[v * self.b_n + x] == label {
                            gain += 1;
                        }
                    }
                }
            }
            self.assign[u] = Some(v);
            self.dfs(depth + 1, count + gain, used | (1 << v));
            self.assign[u] = None;
        }
        self.dfs(depth + 1, count, used);
    }
}

/// Exhaustive branch and bound over partial injections from the
/// non-isolated nodes of `a` into `b`. Among maximum results, the one with
/// the smallest canonical form is returned.
pub fn mcs_with_witness(a: &RelGraph, b: &RelGraph) -> Result<McsResult, DiscoveryError> {
    for g in [a, b] {
        let active = g.active_nodes().len();
        if active > MAX_NODES {
            return Err(DiscoveryError::NodeBudgetExceeded { nodes: active, max: MAX_NODES });
        }
    }
    // Search over the active parts only so node indices stay small.
    let (a, a_back) = compact(a);
    let (b, b_back) = compact(b);

    // High-degree nodes first so their edges are decided early.
    let degree = |v: usize| a.edges().iter().filter(|e| e.k == v || e.l == v).count();
    let mut a_nodes: Vec<usize> = (0..a.nodes()).collect();
    a_nodes.sort_by_key(|&v| (std::cmp::Reverse(degree(v)), v));
    let mut pos = vec![0usize; a.nodes()];
    for (i, &v) in a_nodes.iter().enumerate() {
        pos[v] = i;
    }
    let pending = (0..=a_nodes.len())
        .map(|d| a.edges().iter().filter(|e| pos[e.k].max(pos[e.l]) >= d).count())
        .collect();
    let mut search = Search {
        a_adj: adjacency(&a),
        a_n: a.nodes(),
        b_adj: adjacency(&b),
        b_n: b.nodes(),
        pending,
        a_nodes,
        a: &a,
        assign: vec![None; a.nodes()],
        best: 0,
        optima: HashMap::new(),
        // All of `a`, or all of `b`, embedded: every optimum is isomorphic.
        cap: a.num_edges().min(b.num_edges()),
        done: false,
    };
    search.dfs(0, 0, 0);

    let mut best: Option<McsResult> = None;
    let mut masks: Vec<(&u32, &Vec<Option<usize>>)> = search.optima.iter().collect();
    masks.sort_by_key(|(m, _)| **m);
    for (&mask, assign) in masks {
        let edges = a
            .edges()
            .iter()
            .enumerate()
            .filter(|(id, _)| mask & (1 << id) != 0)
            .map(|(_, e)| (e.k, e.l, e.relation));
        let sub = RelGraph::new(a.nodes(), edges).expect("subset of a valid graph");
        let (canonical, order) = canonicalize_with_order(&sub)?;
        if best.as_ref().is_some_and(|r| r.canonical <= canonical) {
            continue;
        }
        best = Some(McsResult {
            graph: canonical.to_graph(),
            into_a: order.iter().map(|&v| a_back[v]).collect(),
            into_b: order
                .iter()
                .map(|&v| b_back[assign[v].expect("kept edges have mapped endpoints")])
                .collect(),
            canonical,
        });
    }
    Ok(best.unwrap_or_else(|| McsResult {
        graph: RelGraph::empty(0),
        canonical: Canonical(vec![0]),
        into_a: Vec::new(),
        into_b: Vec::new(),
    }))
}

/// Drops isolated nodes, renumbering the rest in order; returns the map
/// from new to old indices.
fn compact(g: &RelGraph) -> (RelGraph, Vec<usize>) {
    let active = g.active_nodes();
    let mut new = vec![usize::MAX; g.nodes()];
    for (i, &v) in active.iter().enumerate() {
        new[v] = i;
    }
    let edges = g.edges().iter().map(|e| (new[e.k], new[e.l], e.relation));
    (RelGraph::new(active.len(), edges).expect("relabeling keeps validity"), active)
}

/// Left fold of [`mcs_of_pair`] over `graphs`, in order.
pub fn mcs_of_all(graphs: &[RelGraph]) -> Result<RelGraph, DiscoveryError> {
    let (first, rest) = graphs
        .split_first()
        .ok_or_else(|| DiscoveryError::InvalidArgument("no graphs to intersect".into()))?;
    let mut acc = first.canonical()?.to_graph();
    for g in rest {
        acc = mcs_of_pair(&acc, g)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::RelationType::*;

    #[test]
    fn mcs_with_itself_is_itself() {
        let g = RelGraph::new(4, [(0, 1, Inside), (0, 2, SameColor), (1, 2, SameColor), (2, 3, SameShape)]).unwrap();
        let r = mcs_with_witness(&g, &g).unwrap();
        assert_eq!(r.canonical, g.canonical().unwrap());
    }

    #[test]
    fn disjoint_labels_share_nothing() {
        let a = RelGraph::new(3, [(0, 1, Inside), (1, 2, Inside)]).unwrap();
        let b = RelGraph::new(3, [(0, 1, SameColor), (0, 2, SameShape)]).unwrap();
        assert_eq!(mcs_of_pair(&a, &b).unwrap().num_edges(), 0);
    }

    #[test]
    fn worked_example() {
        let a = RelGraph::new(3, [(0, 1, Inside), (0, 2, SameColor), (1, 2, SameColor)]).unwrap();
        let b = RelGraph::new(3, [(0, 1, Inside), (1, 2, SameColor)]).unwrap();
        let r = mcs_with_witness(&a, &b).unwrap();
        assert_eq!(r.canonical, b.canonical().unwrap());
        for e in r.graph.edges() {
            assert_eq!(a.label(r.into_a[e.k], r.into_a[e.l]), Some(e.relation));
            assert_eq!(b.label(r.into_b[e.k], r.into_b[e.l]), Some(e.relation));
        }
    }

    #[test]
    fn fold_over_identical_graphs() {
        let g = RelGraph::new(3, [(0, 2, SameColor), (1, 2, SameShape)]).unwrap();
        let r = mcs_of_all(&[g.clone(), g.clone(), g.clone()]).unwrap();
        assert_eq!(r.canonical().unwrap(), g.canonical().unwrap());
    }
}
