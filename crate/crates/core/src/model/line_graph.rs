//! Line graphs over object pairs.

/// Nodes are the unordered object pairs `(k, l)`, `k < l`, in lexicographic
/// order; two nodes are adjacent when their pairs share an object.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LineGraph {
    pub n_objects: usize,
    pub pairs: Vec<(usize, usize)>,
    /// Row-major `pairs.len()²` 0/1 adjacency, zero diagonal.
    pub adjacency: Vec<u8>,
}

/// Unordered pairs of `n` objects in the order used for relation nodes.
pub fn object_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|k| (k + 1..n).map(move |l| (k, l)))
        .collect()
}

pub fn build_line_graph(n_objects: usize) -> LineGraph {
    let pairs = object_pairs(n_objects);
    let p = pairs.len();
    let mut adjacency = vec![0; p * p];
    for (i, &(a, b)) in pairs.iter().enumerate() {
        for (j, &(c, d)) in pairs.iter().enumerate() {
            if i != j && (a == c || a == d || b == c || b == d) {
                adjacency[i * p + j] = 1;
            }
        }
    }
    LineGraph {
        n_objects,
        pairs,
        adjacency,
    }
}

impl LineGraph {
    pub fn num_nodes(&self) -> usize {
        self.pairs.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().filter(|&&a| a == 1).count() / 2
    }

    pub fn degree(&self, node: usize) -> usize {
        let p = self.num_nodes();
        self.adjacency[node * p..(node + 1) * p]
            .iter()
            .filter(|&&a| a == 1)
            .count()
    }

    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.num_nodes() + j] == 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_line_graphs() {
        let g = build_line_graph(2);
        assert_eq!((g.num_nodes(), g.num_edges()), (1, 0));
        let g = build_line_graph(3);
        assert_eq!((g.num_nodes(), g.num_edges()), (3, 3));
        let g = build_line_graph(4);
        assert_eq!(g.num_nodes(), 6);
        assert!((0..6).all(|i| g.degree(i) == 4));
    }

    #[test]
    fn adjacency_is_symmetric_without_loops() {
        for n in 2..=6 {
            let g = build_line_graph(n);
            assert_eq!(g.num_nodes(), n * (n - 1) / 2);
            for i in 0..g.num_nodes() {
                assert!(!g.is_adjacent(i, i));
                for j in 0..g.num_nodes() {
                    assert_eq!(g.is_adjacent(i, j), g.is_adjacent(j, i));
                }
                // each pair meets 2(n-2) others
                assert_eq!(g.degree(i), 2 * (n - 2));
            }
        }
    }
}
