//! Canonical in-memory graph.
//!
//! Edges are undirected and stored once as `(min, max)` pairs in sorted order.
//! Canonical edge `k` materialises as directed edges `2k = (u -> v)` and
//! `2k + 1 = (v -> u)` for message passing; self-loops are never stored.

use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, OnceLock};

use ndarray::Array2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    u: usize,
    v: usize,
}

impl Edge {
    /// Canonical edge between `a` and `b`. Panics on a self-loop.
    pub fn new(a: usize, b: usize) -> Self {
        assert_ne!(a, b, "self-loop {a}-{a}");
        Edge {
            u: a.min(b),
            v: a.max(b),
        }
    }

    pub fn try_new(a: usize, b: usize) -> Option<Self> {
        (a != b).then(|| Edge::new(a, b))
    }

    pub fn u(&self) -> usize {
        self.u
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn endpoints(&self) -> (usize, usize) {
        (self.u, self.v)
    }
}

/// Row-compressed view of the feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    pub rows: usize,
    pub cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseRows {
    pub fn from_dense(m: &Array2<f64>) -> Self {
        let (rows, cols) = m.dim();
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in m.rows() {
            for (j, &x) in row.iter().enumerate() {
                if x != 0.0 {
                    indices.push(j);
                    values.push(x);
                }
            }
            indptr.push(indices.len());
        }
        SparseRows {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }
}

/// Directed message-passing structure: both directions of every stored edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeIndex {
    pub num_nodes: usize,
    pub src: Arc<[usize]>,
    pub dst: Arc<[usize]>,
}

impl EdgeIndex {
    pub fn from_directed(num_nodes: usize, pairs: &[(usize, usize)]) -> Self {
        EdgeIndex {
            num_nodes,
            src: pairs.iter().map(|p| p.0).collect(),
            dst: pairs.iter().map(|p| p.1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

/// Train / validation / test node masks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl Split {
    pub fn empty(n: usize) -> Self {
        Split {
            train: vec![false; n],
            val: vec![false; n],
            test: vec![false; n],
        }
    }

    /// Masks from index lists.
    pub fn from_indices(n: usize, train: &[usize], val: &[usize], test: &[usize]) -> Self {
        let mut s = Split::empty(n);
        for &i in train {
            s.train[i] = true;
        }
        for &i in val {
            s.val[i] = true;
        }
        for &i in test {
            s.test[i] = true;
        }
        s
    }
}

pub fn mask_indices(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect()
}

/// Immutable attributed graph with ground-truth labels and a node split.
#[derive(Debug)]
pub struct Graph {
    features: Array2<f64>,
    edges: Vec<Edge>,
    labels: Vec<usize>,
    num_classes: usize,
    split: Split,
    sparse: OnceLock<Arc<SparseRows>>,
    edge_index: OnceLock<Arc<EdgeIndex>>,
    adjacency: OnceLock<Arc<Vec<Vec<usize>>>>,
}

impl Clone for Graph {
    fn clone(&self) -> Self {
        Graph {
            features: self.features.clone(),
            edges: self.edges.clone(),
            labels: self.labels.clone(),
            num_classes: self.num_classes,
            split: self.split.clone(),
            sparse: self.sparse.clone(),
            edge_index: self.edge_index.clone(),
            adjacency: self.adjacency.clone(),
        }
    }
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.features == other.features
            && self.edges == other.edges
            && self.labels == other.labels
            && self.num_classes == other.num_classes
            && self.split == other.split
    }
}

impl Graph {
    /// Builds a graph, canonicalising and de-duplicating `edges`.
    ///
    /// Self-loops, out-of-range endpoints or labels, and overlapping masks are
    /// rejected.
    pub fn new(
        features: Array2<f64>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        labels: Vec<usize>,
        num_classes: usize,
        split: Split,
    ) -> Result<Self> {
        let n = features.nrows();
        if labels.len() != n {
            return Err(Error::InvalidGraph(format!(
                "{} labels for {} nodes",
                labels.len(),
                n
            )));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::InvalidGraph(format!(
                "label {l} of node {i} is outside 0..{num_classes}"
            )));
        }
        for (name, m) in [
            ("train", &split.train),
            ("val", &split.val),
            ("test", &split.test),
        ] {
            if m.len() != n {
                return Err(Error::InvalidGraph(format!(
                    "{name} mask has length {} for {n} nodes",
                    m.len()
                )));
            }
        }
        if (0..n).any(|i| {
            u8::from(split.train[i]) + u8::from(split.val[i]) + u8::from(split.test[i]) > 1
        }) {
            return Err(Error::InvalidGraph("masks overlap".into()));
        }
        let mut canon = Vec::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) references a node outside 0..{n}"
                )));
            }
            match Edge::try_new(a, b) {
                Some(e) => canon.push(e),
                None => return Err(Error::InvalidGraph(format!("self-loop at node {a}"))),
            }
        }
        canon.sort_unstable();
        canon.dedup();
        Ok(Graph {
            features,
            edges: canon,
            labels,
            num_classes,
            split,
            sparse: OnceLock::new(),
            edge_index: OnceLock::new(),
            adjacency: OnceLock::new(),
        })
    }

    /// Same nodes, features, labels and split with a different edge set.
    pub fn with_edges(&self, edges: impl IntoIterator<Item = Edge>) -> Self {
        let mut canon: Vec<Edge> = edges.into_iter().collect();
        canon.sort_unstable();
        canon.dedup();
        Graph {
            features: self.features.clone(),
            edges: canon,
            labels: self.labels.clone(),
            num_classes: self.num_classes,
            split: self.split.clone(),
            sparse: self.sparse.clone(),
            edge_index: OnceLock::new(),
            adjacency: OnceLock::new(),
        }
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes();
        if perm.len() != n {
            return Err(Error::Parameter("permutation length".into()));
        }
        let mut features = Array2::zeros(self.features.dim());
        let mut labels = vec![0; n];
        let mut split = Split::empty(n);
        for (i, &p) in perm.iter().enumerate() {
            features.row_mut(p).assign(&self.features.row(i));
            labels[p] = self.labels[i];
            split.train[p] = self.split.train[i];
            split.val[p] = self.split.val[i];
            split.test[p] = self.split.test[i];
        }
        let edges = self.edges.iter().map(|e| (perm[e.u], perm[e.v]));
        Graph::new(features, edges, labels, self.num_classes, split)
    }

    pub fn num_nodes(&self) -> usize {
        self.features.nrows()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Number of undirected (canonical) edges.
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Number of directed edges in the symmetric adjacency (2 x canonical).
    pub fn num_directed_edges(&self) -> usize {
        2 * self.edges.len()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn split(&self) -> &Split {
        &self.split
    }

    pub fn train_nodes(&self) -> Vec<usize> {
        mask_indices(&self.split.train)
    }

    pub fn val_nodes(&self) -> Vec<usize> {
        mask_indices(&self.split.val)
    }

    pub fn test_nodes(&self) -> Vec<usize> {
        mask_indices(&self.split.test)
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        Edge::try_new(a, b).is_some_and(|e| self.edges.binary_search(&e).is_ok())
    }

    /// Index of a canonical edge, if present.
    pub fn edge_position(&self, e: Edge) -> Option<usize> {
        self.edges.binary_search(&e).ok()
    }

    /// Directed edge `id` as `(src, dst)`.
    pub fn directed_edge(&self, id: usize) -> (usize, usize) {
        let e = self.edges[id / 2];
        if id % 2 == 0 {
            (e.u, e.v)
        } else {
            (e.v, e.u)
        }
    }

    pub fn sparse_features(&self) -> Arc<SparseRows> {
        self.sparse
            .get_or_init(|| Arc::new(SparseRows::from_dense(&self.features)))
            .clone()
    }

    pub fn edge_index(&self) -> Arc<EdgeIndex> {
        self.edge_index
            .get_or_init(|| {
                let mut pairs = Vec::with_capacity(2 * self.edges.len());
                for e in &self.edges {
                    pairs.push((e.u, e.v));
                    pairs.push((e.v, e.u));
                }
                Arc::new(EdgeIndex::from_directed(self.num_nodes(), &pairs))
            })
            .clone()
    }

    /// Sorted neighbour lists.
    pub fn adjacency(&self) -> Arc<Vec<Vec<usize>>> {
        self.adjacency
            .get_or_init(|| {
                let mut adj = vec![Vec::new(); self.num_nodes()];
                for e in &self.edges {
                    adj[e.u].push(e.v);
                    adj[e.v].push(e.u);
                }
                for list in &mut adj {
                    list.sort_unstable();
                }
                Arc::new(adj)
            })
            .clone()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.num_nodes()];
        for e in &self.edges {
            d[e.u] += 1;
            d[e.v] += 1;
        }
        d
    }

    /// Hop distance from `source` for every node reached within `max_hops`,
    /// in BFS order.
    pub fn bfs_hops(&self, source: usize, max_hops: usize) -> Vec<(usize, usize)> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.num_nodes()];
        let mut order = vec![(source, 0)];
        let mut queue = VecDeque::from([(source, 0)]);
        seen[source] = true;
        while let Some((u, h)) = queue.pop_front() {
            if h == max_hops {
                continue;
            }
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    order.push((w, h + 1));
                    queue.push_back((w, h + 1));
                }
            }
        }
        order
    }

    pub fn is_intra_class(&self, e: Edge) -> bool {
        self.labels[e.u] == self.labels[e.v]
    }

    /// Number of nodes per class.
    pub fn class_sizes(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_classes];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }
}

/// Edges split by whether their endpoints share a ground-truth label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPartition {
    /// `intra_edges[c]`: canonical edges with both endpoints in class `c`.
    pub intra_edges: Vec<Vec<Edge>>,
    /// Canonical edges with differing endpoint labels.
    pub inter_edges: Vec<Edge>,
    labels: Vec<usize>,
}

impl ClassPartition {
    pub fn intra_count(&self) -> usize {
        self.intra_edges.iter().map(Vec::len).sum()
    }

    pub fn inter_count(&self) -> usize {
        self.inter_edges.len()
    }

    /// Unordered node pairs `(a, b)`, `a < b`, whose labels differ, whether
    /// or not they are adjacent.
    pub fn inter_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.labels.len();
        (0..n).flat_map(move |a| {
            (a + 1..n)
                .filter(move |&b| self.labels[a] != self.labels[b])
                .map(move |b| (a, b))
        })
    }

    /// `inter_pairs().count()` without enumeration.
    pub fn inter_pair_count(&self) -> usize {
        let m = self.labels.iter().copied().max().map_or(0, |x| x + 1);
        let mut sizes = vec![0usize; m];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        let n = self.labels.len();
        let same: usize = sizes.iter().map(|&s| s * s.saturating_sub(1) / 2).sum();
        n * n.saturating_sub(1) / 2 - same
    }
}

pub fn partition_edges_by_class(graph: &Graph) -> ClassPartition {
    let mut intra_edges = vec![Vec::new(); graph.num_classes()];
    let mut inter_edges = Vec::new();
    for &e in graph.edges() {
        if graph.is_intra_class(e) {
            intra_edges[graph.labels()[e.u]].push(e);
        } else {
            inter_edges.push(e);
        }
    }
    ClassPartition {
        intra_edges,
        inter_edges,
        labels: graph.labels().to_vec(),
    }
}

/// Node count per symmetric degree.
pub fn degree_histogram(graph: &Graph) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for d in graph.degrees() {
        *hist.entry(d).or_insert(0) += 1;
    }
    hist
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub fn plain_graph(n: usize, edges: &[(usize, usize)], labels: Vec<usize>) -> Graph {
        let m = labels.iter().copied().max().map_or(1, |x| x + 1);
        Graph::new(
            Array2::zeros((n, 1)),
            edges.iter().copied(),
            labels,
            m,
            Split::empty(n),
        )
        .unwrap()
    }

    #[test]
    fn histogram_of_edgeless_graph() {
        let g = plain_graph(3, &[], vec![0, 0, 0]);
        assert_eq!(degree_histogram(&g), BTreeMap::from([(0, 3)]));
    }

    #[test]
    fn histogram_of_triangle() {
        let g = plain_graph(3, &[(0, 1), (1, 2), (0, 2)], vec![0, 0, 0]);
        assert_eq!(degree_histogram(&g), BTreeMap::from([(2, 3)]));
        assert_eq!(g.num_directed_edges(), 6);
    }

    #[test]
    fn single_intra_edge() {
        let g = plain_graph(2, &[(0, 1)], vec![1, 1]);
        let p = partition_edges_by_class(&g);
        assert_eq!(p.intra_count(), 1);
        assert_eq!(p.inter_count(), 0);
    }

    #[test]
    fn reversed_duplicate_is_noop() {
        let g = plain_graph(3, &[(0, 1), (1, 0), (2, 1)], vec![0, 0, 0]);
        assert_eq!(g.edges(), &[Edge::new(0, 1), Edge::new(1, 2)]);
    }

    #[test]
    fn rejects_self_loops_and_overlapping_masks() {
        let err = Graph::new(
            Array2::zeros((2, 1)),
            [(1, 1)],
            vec![0, 0],
            1,
            Split::empty(2),
        );
        assert!(matches!(err, Err(Error::InvalidGraph(_))));
        let split = Split::from_indices(2, &[0], &[0], &[]);
        let err = Graph::new(Array2::zeros((2, 1)), [], vec![0, 0], 1, split);
        assert!(matches!(err, Err(Error::InvalidGraph(_))));
    }

    #[test]
    fn directed_view_pairs_each_edge() {
        let g = plain_graph(3, &[(2, 0), (1, 2)], vec![0, 0, 0]);
        let ei = g.edge_index();
        assert_eq!(&*ei.src, &[0, 2, 1, 2]);
        assert_eq!(&*ei.dst, &[2, 0, 2, 1]);
        assert_eq!(g.directed_edge(3), (2, 1));
    }

    #[test]
    fn inter_pair_count_matches_enumeration() {
        let g = plain_graph(6, &[], vec![0, 1, 1, 2, 0, 2]);
        let p = partition_edges_by_class(&g);
        assert_eq!(p.inter_pairs().count(), p.inter_pair_count());
        assert_eq!(p.inter_pair_count(), 12);
    }

    #[test]
    fn bfs_reports_hops() {
        let g = plain_graph(4, &[(0, 1), (1, 2), (2, 3)], vec![0; 4]);
        assert_eq!(g.bfs_hops(0, 2), vec![(0, 0), (1, 1), (2, 2)]);
    }

    fn small_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>, Vec<usize>)> {
        (2usize..9).prop_flat_map(|n| {
            (
                Just(n),
                proptest::collection::vec((0..n, 0..n), 0..20),
                proptest::collection::vec(0usize..3, n),
            )
        })
    }

    proptest! {
        #[test]
        fn partition_covers_edges((n, raw, labels) in small_graph()) {
            let edges: Vec<_> = raw.into_iter().filter(|(a, b)| a != b).collect();
            let g = plain_graph(n, &edges, labels);
            let p = partition_edges_by_class(&g);
            prop_assert_eq!(p.intra_count() + p.inter_count(), g.num_edges());
            let mut all: Vec<Edge> = p.intra_edges.concat();
            all.extend(&p.inter_edges);
            all.sort();
            prop_assert_eq!(all, g.edges().to_vec());
        }

        #[test]
        fn histogram_invariant_under_relabeling(
            (n, raw, labels) in small_graph(),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let edges: Vec<_> = raw.into_iter().filter(|(a, b)| a != b).collect();
            let g = plain_graph(n, &edges, labels);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut crate::seed::rng(seed));
            let h = degree_histogram(&g);
            prop_assert_eq!(h.values().sum::<usize>(), n);
            prop_assert_eq!(h, degree_histogram(&g.permuted(&perm).unwrap()));
        }
    }
}
