use crate::error::{JanusError, Result};
use crate::matrix::Matrix;

use super::Graph;

/// Square sparse operator in CSR form.
///
/// Applied as a fixed left factor in message passing, so products are
/// computed in a fixed order and are bitwise reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseOperator {
    /// Builds from per-row `(col, value)` lists; columns are sorted per row.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                debug_assert!(c < n);
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        SparseOperator {
            n,
            indptr,
            indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseOperator::from_rows((0..n).map(|i| vec![(i, 1.0)]).collect())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m.set(i, j, v);
            }
        }
        m
    }

    /// `self * x` for a row-major `n x k` buffer.
    pub fn apply(&self, x: &[f64], k: usize, out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n * k);
        debug_assert_eq!(out.len(), self.n * k);
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..self.n {
            let orow = &mut out[i * k..(i + 1) * k];
            for (j, v) in self.row(i) {
                let xrow = &x[j * k..(j + 1) * k];
                for (o, xv) in orow.iter_mut().zip(xrow) {
                    *o += v * xv;
                }
            }
        }
    }

    /// `out += self^T * g` for a row-major `n x k` buffer.
    pub fn apply_transpose_acc(&self, g: &[f64], k: usize, out: &mut [f64]) {
        for i in 0..self.n {
            let grow = &g[i * k..(i + 1) * k];
            for (j, v) in self.row(i) {
                let orow = &mut out[j * k..(j + 1) * k];
                for (o, gv) in orow.iter_mut().zip(grow) {
                    *o += v * gv;
                }
            }
        }
    }

    pub fn matmul(&self, x: &Matrix) -> Result<Matrix> {
        if x.rows() != self.n {
            return Err(JanusError::mismatch("SparseOperator::matmul", self.n, x.rows()));
        }
        let mut out = Matrix::zeros(self.n, x.cols());
        self.apply(x.data(), x.cols(), out.data_mut());
        Ok(out)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }
}

/// `D^{-1/2} (A + I) D^{-1/2}` with `D` the degree matrix of `A + I`.
pub fn normalized_adjacency(g: &Graph) -> SparseOperator {
    let nodes: Vec<usize> = (0..g.num_nodes()).collect();
    induced_normalized_adjacency(g, &nodes)
}

/// Normalized adjacency of the subgraph induced by `nodes`; row/column `i`
/// of the result corresponds to `nodes[i]`.
pub fn induced_normalized_adjacency(g: &Graph, nodes: &[usize]) -> SparseOperator {
    let local = local_index(g, nodes);
    let neighbors: Vec<Vec<usize>> = nodes
        .iter()
        .map(|&u| g.neighbors(u).iter().filter_map(|v| local[*v]).collect())
        .collect();
    let inv_sqrt: Vec<f64> = neighbors
        .iter()
        .map(|nb| 1.0 / ((nb.len() + 1) as f64).sqrt())
        .collect();
    let rows = neighbors
        .iter()
        .enumerate()
        .map(|(i, nb)| {
            let mut row: Vec<(usize, f64)> = nb
                .iter()
                .map(|&j| (j, inv_sqrt[i] * inv_sqrt[j]))
                .collect();
            row.push((i, inv_sqrt[i] * inv_sqrt[i]));
            row
        })
        .collect();
    SparseOperator::from_rows(rows)
}

/// GIN aggregation `(1 + eps) I + A` over the subgraph induced by `nodes`.
pub fn induced_gin_aggregator(g: &Graph, nodes: &[usize], eps: f64) -> SparseOperator {
    let local = local_index(g, nodes);
    let rows = nodes
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let mut row: Vec<(usize, f64)> = g
                .neighbors(u)
                .iter()
                .filter_map(|v| local[*v].map(|j| (j, 1.0)))
                .collect();
            row.push((i, 1.0 + eps));
            row
        })
        .collect();
    SparseOperator::from_rows(rows)
}

fn local_index(g: &Graph, nodes: &[usize]) -> Vec<Option<usize>> {
    let mut local = vec![None; g.num_nodes()];
    for (i, &u) in nodes.iter().enumerate() {
        local[u] = Some(i);
    }
    local
}
