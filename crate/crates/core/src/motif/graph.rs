use std::collections::BTreeSet;

use super::ActivityLabel;

pub const MAX_GRAPH_NODES: usize = 16;

/// Small simple digraph with a distinguished home node and one activity
/// label per node. Adjacency rows are bit masks.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Digraph {
    out: Vec<u16>,
    labels: Vec<ActivityLabel>,
    home: usize,
}

impl Digraph {
    /// Builds a graph from an edge list; self-loops and repeated edges are
    /// ignored. Panics if `n` exceeds [`MAX_GRAPH_NODES`] or an endpoint is
    /// out of range.
    pub fn new(n: usize, home: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self::with_labels(vec![ActivityLabel::Others; n], home, edges)
    }

    pub fn with_labels(labels: Vec<ActivityLabel>, home: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let n = labels.len();
        assert!((1..=MAX_GRAPH_NODES).contains(&n), "digraph size {n} unsupported");
        assert!(home < n, "home index out of range");
        let mut out = vec![0u16; n];
        for (a, b) in edges {
            assert!(a < n && b < n, "edge ({a},{b}) out of range");
            if a != b {
                out[a] |= 1 << b;
            }
        }
        Self { out, labels, home }
    }

    pub fn node_count(&self) -> usize {
        self.out.len()
    }

    pub fn home(&self) -> usize {
        self.home
    }

    pub fn labels(&self) -> &[ActivityLabel] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> ActivityLabel {
        self.labels[v]
    }

    #[inline]
    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.out[a] & (1 << b) != 0
    }

    pub fn out_mask(&self, v: usize) -> u16 {
        self.out[v]
    }

    pub fn in_mask(&self, v: usize) -> u16 {
        self.out
            .iter()
            .enumerate()
            .filter(|(_, row)| *row & (1 << v) != 0)
            .fold(0, |m, (u, _)| m | (1 << u))
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(|r| r.count_ones() as usize).sum()
    }

    pub fn edges(&self) -> BTreeSet<(usize, usize)> {
        (0..self.node_count())
            .flat_map(|a| (0..self.node_count()).filter(move |&b| self.has_edge(a, b)).map(move |b| (a, b)))
            .collect()
    }

    /// Every node has at least one incoming and one outgoing edge (trivially
    /// true for a single node).
    pub fn every_node_entered_and_left(&self) -> bool {
        self.node_count() == 1 || (0..self.node_count()).all(|v| self.out[v] != 0 && self.in_mask(v) != 0)
    }

    /// Relabels nodes: node `v` of `self` becomes node `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.node_count();
        let mut labels = vec![ActivityLabel::Others; n];
        for v in 0..n {
            labels[perm[v]] = self.labels[v];
        }
        let edges: Vec<_> = self.edges().into_iter().map(|(a, b)| (perm[a], perm[b])).collect();
        Self::with_labels(labels, perm[self.home], edges)
    }
}
