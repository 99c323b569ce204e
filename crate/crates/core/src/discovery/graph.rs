//! Edge-labeled relation graphs and their canonical forms.

use serde::{Deserialize, Serialize};

use super::DiscoveryError;
use crate::scene::{Edge, RelationType, TaskSpec};

/// Largest number of non-isolated nodes canonicalization and MCS accept.
pub const MAX_NODES: usize = 8;

/// An undirected graph over object indices `0..nodes` with typed edges.
/// Absent pairs mean "none".
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RelGraph {
    nodes: usize,
    /// Sorted, `k < l`, no duplicates, never `None`.
    edges: Vec<Edge>,
}

impl RelGraph {
    pub fn new(
        nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize, RelationType)>,
    ) -> Result<Self, DiscoveryError> {
        let mut out: Vec<Edge> = Vec::new();
        for (a, b, relation) in edges {
            if a == b || a >= nodes || b >= nodes || relation == RelationType::None {
                return Err(DiscoveryError::InvalidGraph(format!(
                    "bad edge ({a}, {b}, {relation}) on {nodes} nodes"
                )));
            }
            out.push(Edge::new(a, b, relation));
        }
        out.sort();
        if out.windows(2).any(|w| (w[0].k, w[0].l) == (w[1].k, w[1].l)) {
            return Err(DiscoveryError::InvalidGraph("duplicate pair".into()));
        }
        Ok(RelGraph { nodes, edges: out })
    }

    pub fn empty(nodes: usize) -> Self {
        RelGraph { nodes, edges: Vec::new() }
    }

    /// The task's full ground-truth graph over its core objects.
    pub fn from_task(spec: &TaskSpec) -> Self {
        RelGraph::new(spec.n_core, spec.closure().into_iter().map(|e| (e.k, e.l, e.relation)))
            .expect("closure edges are valid")
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn label(&self, a: usize, b: usize) -> Option<RelationType> {
        let (k, l) = (a.min(b), a.max(b));
        self.edges
            .iter()
            .find(|e| e.k == k && e.l == l)
            .map(|e| e.relation)
    }

    /// Nodes touched by at least one edge, ascending.
    pub fn active_nodes(&self) -> Vec<usize> {
        let mut seen = vec![false; self.nodes];
        for e in &self.edges {
            seen[e.k] = true;
            seen[e.l] = true;
        }
        (0..self.nodes).filter(|&i| seen[i]).collect()
    }

    /// `[[k, l], "label"]` triples as used in task files and reports.
    pub fn to_pairs(&self) -> Vec<((usize, usize), RelationType)> {
        self.edges.iter().map(|e| ((e.k, e.l), e.relation)).collect()
    }

    pub fn canonical(&self) -> Result<Canonical, DiscoveryError> {
        canonicalize_with_order(self).map(|(c, _)| c)
    }
}

/// Canonical form: `[m, k₁, l₁, code₁, k₂, …]` where `m` counts the
/// non-isolated nodes and the relabeled edges are sorted. Equal forms mean
/// label-isomorphic graphs once isolated nodes are ignored; the empty graph
/// is `[0]`. Forms order lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Canonical(pub Vec<u8>);

impl Canonical {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn num_edges(&self) -> usize {
        (self.0.len() - 1) / 3
    }

    pub fn to_graph(&self) -> RelGraph {
        let edges = self.0[1..].chunks(3).map(|c| {
            (
                c[0] as usize,
                c[1] as usize,
                RelationType::from_index(c[2] as usize).expect("valid relation code"),
            )
        });
        RelGraph::new(self.0[0] as usize, edges).expect("canonical forms decode")
    }
}

pub fn canonicalize(g: &RelGraph) -> Result<Canonical, DiscoveryError> {
    g.canonical()
}

/// Canonical form plus `order`, where `order[i]` is the original node placed
/// at canonical position `i`.
pub fn canonicalize_with_order(g: &RelGraph) -> Result<(Canonical, Vec<usize>), DiscoveryError> {
    let active = g.active_nodes();
    let m = active.len();
    if m > MAX_NODES {
        return Err(DiscoveryError::NodeBudgetExceeded { nodes: m, max: MAX_NODES });
    }
    if m == 0 {
        return Ok((Canonical(vec![0]), Vec::new()));
    }
    let mut local = vec![usize::MAX; g.nodes];
    for (i, &v) in active.iter().enumerate() {
        local[v] = i;
    }
    let mut adj = vec![0u8; m * m];
    for e in &g.edges {
        let (a, b) = (local[e.k], local[e.l]);
        adj[a * m + b] = e.relation.index() as u8;
        adj[b * m + a] = e.relation.index() as u8;
    }

    // Colour refinement gives an isomorphism-invariant ordered partition;
    // only permutations within cells need to be tried.
    let mut color = vec![0usize; m];
    loop {
        let sigs: Vec<(usize, Vec<(u8, usize)>)> = (0..m)
            .map(|v| {
                let mut nb: Vec<(u8, usize)> = (0..m)
                    .filter(|&u| adj[v * m + u] != 0)
                    .map(|u| (adj[v * m + u], color[u]))
                    .collect();
                nb.sort_unstable();
                (color[v], nb)
            })
            .collect();
        let mut distinct = sigs.clone();
        distinct.sort();
        distinct.dedup();
        let before = color.iter().max().map_or(0, |c| c + 1);
        color = sigs
            .iter()
            .map(|s| distinct.binary_search(s).unwrap())
            .collect();
        // the old colour is part of the signature, so classes only split
        if distinct.len() == before {
            break;
        }
    }
    let num_cells = color.iter().max().unwrap() + 1;
    let cells: Vec<Vec<usize>> = (0..num_cells)
        .map(|c| (0..m).filter(|&v| color[v] == c).collect())
        .collect();

    let mut best: Option<(Vec<u8>, Vec<usize>)> = None;
    let mut order = Vec::with_capacity(m);
    let cell_perms: Vec<Vec<Vec<usize>>> = cells
        .iter()
        .map(|cell| {
            super::accuracy::permutations(cell.len())
                .into_iter()
                .map(|p| p.into_iter().map(|i| cell[i]).collect())
                .collect()
        })
        .collect();
    let mut choice = vec![0usize; num_cells];
    loop {
        order.clear();
        for (c, perms) in cell_perms.iter().enumerate() {
            order.extend_from_slice(&perms[choice[c]]);
        }
        let mut pos = vec![0usize; m];
        for (i, &v) in order.iter().enumerate() {
            pos[v] = i;
        }
        let mut triples: Vec<[u8; 3]> = Vec::with_capacity(g.edges.len());
        for a in 0..m {
            for b in a + 1..m {
                let code = adj[a * m + b];
                if code != 0 {
                    let (x, y) = (pos[a].min(pos[b]), pos[a].max(pos[b]));
                    triples.push([x as u8, y as u8, code]);
                }
            }
        }
        triples.sort_unstable();
        let mut bytes = Vec::with_capacity(1 + 3 * triples.len());
        bytes.push(m as u8);
        bytes.extend(triples.iter().flatten());
        if best.as_ref().is_none_or(|(b, _)| bytes < *b) {
            best = Some((bytes, order.clone()));
        }
        // odometer over per-cell permutations
        let mut c = 0;
        loop {
            if c == num_cells {
                let (bytes, order) = best.expect("at least one labeling");
                let original = order.into_iter().map(|v| active[v]).collect();
                return Ok((Canonical(bytes), original));
            }
            choice[c] += 1;
            if choice[c] < cell_perms[c].len() {
                break;
            }
            choice[c] = 0;
            c += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use RelationType::*;

    #[test]
    fn relabeling_keeps_the_form() {
        let g = RelGraph::new(4, [(0, 1, Inside), (1, 2, SameColor), (2, 3, SameShape), (0, 3, SameColor)]).unwrap();
        let h = RelGraph::new(5, [(4, 2, Inside), (2, 0, SameColor), (0, 1, SameShape), (4, 1, SameColor)]).unwrap();
        assert_eq!(g.canonical().unwrap(), h.canonical().unwrap());
        let other = RelGraph::new(4, [(0, 1, Inside), (1, 2, SameColor), (2, 3, SameColor), (0, 3, SameShape)]).unwrap();
        assert_ne!(g.canonical().unwrap(), other.canonical().unwrap());
    }

    #[test]
    fn empty_graph_sentinel() {
        assert_eq!(RelGraph::empty(3).canonical().unwrap(), Canonical(vec![0]));
        assert_eq!(Canonical(vec![0]).to_graph(), RelGraph::empty(0));
    }

    #[test]
    fn single_inside_edge_prints_as_zero_one() {
        let g = RelGraph::new(3, [(1, 2, Inside)]).unwrap();
        let c = g.canonical().unwrap();
        assert_eq!(c.as_bytes(), &[2, 0, 1, 3]);
        assert_eq!(c.to_graph().to_pairs(), vec![((0, 1), Inside)]);
    }

    #[test]
    fn order_maps_canonical_positions_back() {
        let g = RelGraph::new(5, [(3, 4, Inside), (1, 3, SameColor)]).unwrap();
        let (c, order) = canonicalize_with_order(&g).unwrap();
        let h = c.to_graph();
        for e in h.edges() {
            assert_eq!(g.label(order[e.k], order[e.l]), Some(e.relation));
        }
    }

    #[test]
    fn invalid_graphs_are_rejected() {
        assert!(RelGraph::new(2, [(0, 0, Inside)]).is_err());
        assert!(RelGraph::new(2, [(0, 2, Inside)]).is_err());
        assert!(RelGraph::new(2, [(0, 1, None)]).is_err());
        assert!(RelGraph::new(2, [(0, 1, Inside), (1, 0, SameColor)]).is_err());
    }

    #[test]
    fn node_budget_is_enforced() {
        let edges = (0..9).map(|i| (i, i + 1, SameColor));
        let g = RelGraph::new(10, edges).unwrap();
        assert!(matches!(g.canonical(), Err(DiscoveryError::NodeBudgetExceeded { nodes: 10, .. })));
    }
}
