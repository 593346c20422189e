//! Undirected attributed graphs, their normalized operators, node views and
//! neighbor sampling.

mod io;
mod operator;
mod sampling;
mod views;

pub use io::{read_edge_list, read_features_csv, read_labels, write_edge_list};
pub use operator::{
    induced_gin_aggregator, induced_normalized_adjacency, normalized_adjacency, SparseOperator,
};
pub use sampling::{sample_neighborhood, NeighborBatch};
pub use views::{
    build_views, default_max_deg, degree_onehot, rw_features, NodeViews,
};

use crate::error::{JanusError, Result};
use crate::matrix::Matrix;

/// Immutable undirected graph with node features and optional 0/1 labels.
///
/// Self-loops are never stored; operators add them as `A + I`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    /// Unique pairs with `u < v`, sorted.
    edges: Vec<(usize, usize)>,
    /// Sorted neighbor lists.
    adj: Vec<Vec<usize>>,
    features: Matrix,
    labels: Option<Vec<u8>>,
}

impl Graph {
    /// Builds a graph from an edge iterator. Self-loops are dropped and
    /// duplicate or reversed pairs are merged.
    pub fn new(
        features: Matrix,
        edges: impl IntoIterator<Item = (usize, usize)>,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        let n = features.rows();
        let mut list = Vec::new();
        for (u, v) in edges {
            if u >= n {
                return Err(JanusError::UnknownNode(u));
            }
            if v >= n {
                return Err(JanusError::UnknownNode(v));
            }
            if u != v {
                list.push((u.min(v), u.max(v)));
            }
        }
        list.sort_unstable();
        list.dedup();

        let mut adj = vec![Vec::new(); n];
        for &(u, v) in &list {
            adj[u].push(v);
            adj[v].push(u);
        }
        for nb in &mut adj {
            nb.sort_unstable();
        }

        if let Some(l) = &labels {
            validate_labels(l, n)?;
        }
        if !features.is_finite() {
            return Err(JanusError::NonFinite("node features"));
        }
        Ok(Graph {
            n,
            edges: list,
            adj,
            features,
            labels,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    /// Degree excluding the implicit self-loop.
    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adj.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search(&v).is_ok()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn with_labels(mut self, labels: Vec<u8>) -> Result<Self> {
        validate_labels(&labels, self.n)?;
        self.labels = Some(labels);
        Ok(self)
    }

    /// Dense 0/1 adjacency without self-loops.
    pub fn dense_adjacency(&self) -> Matrix {
        let mut a = Matrix::zeros(self.n, self.n);
        for &(u, v) in &self.edges {
            a.set(u, v, 1.0);
            a.set(v, u, 1.0);
        }
        a
    }

    /// Dense adjacency restricted to `nodes` (in the given order).
    pub fn dense_adjacency_among(&self, nodes: &[usize]) -> Matrix {
        let k = nodes.len();
        let mut a = Matrix::zeros(k, k);
        for (i, &u) in nodes.iter().enumerate() {
            for (j, &v) in nodes.iter().enumerate() {
                if i != j && self.has_edge(u, v) {
                    a.set(i, j, 1.0);
                }
            }
        }
        a
    }
}

fn validate_labels(labels: &[u8], n: usize) -> Result<()> {
    if labels.len() != n {
        return Err(JanusError::mismatch("labels", n, labels.len()));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(JanusError::InvalidInput(format!(
            "labels must be 0 or 1, found {bad}"
        )));
    }
    if n > 0 && !labels.contains(&0) {
        return Err(JanusError::DegenerateLabels(
            "labels contain no normal (0) node".into(),
        ));
    }
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_edges() {
        let g = Graph::new(
            fixtures::unit_features(4),
            [(1, 0), (0, 1), (2, 2), (3, 1)],
            None,
        )
        .unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 3)]);
        assert_eq!(g.neighbors(1), &[0, 3]);
        assert_eq!(g.degree(2), 0);
        assert!(g.has_edge(3, 1) && g.has_edge(1, 3));
        let a = g.dense_adjacency();
        assert_eq!(a, a.transpose());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            Graph::new(fixtures::unit_features(2), [(0, 2)], None),
            Err(JanusError::UnknownNode(2))
        ));
        assert!(Graph::new(fixtures::unit_features(2), [], Some(vec![1, 1])).is_err());
        assert!(Graph::new(fixtures::unit_features(2), [], Some(vec![0, 2])).is_err());
        assert!(Graph::new(fixtures::unit_features(2), [], Some(vec![0])).is_err());
        let ok = Graph::new(fixtures::unit_features(2), [], Some(vec![0, 0])).unwrap();
        assert_eq!(ok.labels(), Some(&[0u8, 0][..]));
        let nan = Matrix::from_vec(1, 1, vec![f64::NAN]).unwrap();
        assert!(Graph::new(nan, [], None).is_err());
    }

    #[test]
    fn adjacency_among_subset() {
        let g = fixtures::path3();
        let a = g.dense_adjacency_among(&[2, 1]);
        assert_eq!(a.data(), &[0.0, 1.0, 1.0, 0.0]);
    }
}
