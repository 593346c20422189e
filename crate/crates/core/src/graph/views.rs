use crate::error::{JanusError, Result};
use crate::matrix::Matrix;

use super::Graph;

/// The two per-node views: original attributes `xs` and structural features
/// `xg = [random-walk return probabilities | degree one-hot]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeViews {
    pub xs: Matrix,
    pub xg: Matrix,
    pub d_rw: usize,
    pub max_deg: usize,
}

impl NodeViews {
    pub fn num_nodes(&self) -> usize {
        self.xs.rows()
    }

    pub fn select(&self, nodes: &[usize]) -> NodeViews {
        NodeViews {
            xs: self.xs.select_rows(nodes),
            xg: self.xg.select_rows(nodes),
            d_rw: self.d_rw,
            max_deg: self.max_deg,
        }
    }
}

/// Row `i` holds `[T_ii, (T^2)_ii, ..., (T^d_rw)_ii]` with `T = (A+I) D^{-1}`
/// and `D` the degree matrix of `A + I` (so `T` is column-stochastic).
///
/// Each row is obtained by pushing the indicator of node `i` through `T`
/// `d_rw` times; only the touched part of the vector is visited.
pub fn rw_features(g: &Graph, d_rw: usize) -> Matrix {
    let n = g.num_nodes();
    let inv_deg: Vec<f64> = (0..n).map(|v| 1.0 / (g.degree(v) + 1) as f64).collect();
    let mut out = Matrix::zeros(n, d_rw);

    let mut cur = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut stamp = vec![usize::MAX; n];
    let mut cur_list = Vec::new();
    let mut next_list = Vec::new();
    let mut pass = 0usize;

    for i in 0..n {
        cur[i] = 1.0;
        cur_list.clear();
        cur_list.push(i);
        for t in 0..d_rw {
            next_list.clear();
            for &v in &cur_list {
                let w = cur[v] * inv_deg[v];
                for &u in g.neighbors(v).iter().chain(std::iter::once(&v)) {
                    if stamp[u] != pass {
                        stamp[u] = pass;
                        next_list.push(u);
                    }
                    next[u] += w;
                }
            }
            out.set(i, t, next[i]);
            for &v in &cur_list {
                cur[v] = 0.0;
            }
            std::mem::swap(&mut cur, &mut next);
            std::mem::swap(&mut cur_list, &mut next_list);
            pass += 1;
        }
        for &v in &cur_list {
            cur[v] = 0.0;
        }
    }
    out
}

/// One-hot degree encoding of width `max_deg + 1`; degrees above `max_deg`
/// fall into the last bucket.
pub fn degree_onehot(g: &Graph, max_deg: usize) -> Matrix {
    let n = g.num_nodes();
    let mut out = Matrix::zeros(n, max_deg + 1);
    for i in 0..n {
        out.set(i, g.degree(i).min(max_deg), 1.0);
    }
    out
}

/// 95th-percentile degree (nearest rank), at least 1.
pub fn default_max_deg(g: &Graph) -> usize {
    let mut deg = g.degrees();
    if deg.is_empty() {
        return 1;
    }
    deg.sort_unstable();
    let rank = ((0.95 * deg.len() as f64).ceil() as usize).clamp(1, deg.len());
    deg[rank - 1].max(1)
}

pub fn build_views(g: &Graph, d_rw: usize, max_deg: usize) -> Result<NodeViews> {
    if g.feature_dim() == 0 {
        return Err(JanusError::InvalidInput(
            "graph has zero-dimensional node features".into(),
        ));
    }
    if d_rw == 0 {
        return Err(JanusError::config("d_rw", "must be >= 1"));
    }
    if max_deg == 0 {
        return Err(JanusError::config("max_deg", "must be >= 1"));
    }
    let xg = rw_features(g, d_rw).hcat(&degree_onehot(g, max_deg))?;
    Ok(NodeViews {
        xs: g.features().clone(),
        xg,
        d_rw,
        max_deg,
    })
}

#[cfg(test)]
mod tests {
    use super::super::fixtures;
    use super::*;

    /// Dense oracle: diagonal of T^k by explicit matrix powers.
    fn rw_dense(g: &Graph, d_rw: usize) -> Matrix {
        let n = g.num_nodes();
        let mut t = Matrix::zeros(n, n);
        for v in 0..n {
            let w = 1.0 / (g.degree(v) + 1) as f64;
            t.set(v, v, w);
            for &u in g.neighbors(v) {
                t.set(u, v, w);
            }
        }
        let mut out = Matrix::zeros(n, d_rw);
        let mut p = t.clone();
        for k in 0..d_rw {
            for i in 0..n {
                out.set(i, k, p.get(i, i));
            }
            p = p.matmul(&t).unwrap();
        }
        out
    }

    #[test]
    fn triangle_rw() {
        let rw = rw_features(&fixtures::triangle(), 2);
        for v in rw.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn isolated_node_rw_is_one() {
        let g = Graph::new(fixtures::unit_features(3), [(0, 1)], None).unwrap();
        let rw = rw_features(&g, 4);
        assert_eq!(rw.row(2), &[1.0; 4]);
    }

    #[test]
    fn path_center_rw() {
        let rw = rw_features(&fixtures::path3(), 1);
        assert!((rw.get(1, 0) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn matches_dense_powers() {
        let g = Graph::new(
            fixtures::unit_features(7),
            [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5)],
            None,
        )
        .unwrap();
        let a = rw_features(&g, 6);
        let b = rw_dense(&g, 6);
        assert!(a.max_abs_diff(&b) < 1e-14);
    }

    #[test]
    fn onehot_examples() {
        let g = fixtures::star(9);
        let oh = degree_onehot(&g, 4);
        assert_eq!(oh.row(0), &[0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(oh.row(1), &[0.0, 1.0, 0.0, 0.0, 0.0]);
        let iso = Graph::new(fixtures::unit_features(1), [], None).unwrap();
        assert_eq!(degree_onehot(&iso, 3).row(0), &[1.0, 0.0, 0.0, 0.0]);
        let p = fixtures::path3();
        assert_eq!(degree_onehot(&p, 4).row(1), &[0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn triangle_views() {
        let v = build_views(&fixtures::triangle(), 2, 2).unwrap();
        assert_eq!(v.xg.cols(), 5);
        for i in 0..3 {
            let r = v.xg.row(i);
            assert!((r[0] - 1.0 / 3.0).abs() < 1e-15 && (r[1] - 1.0 / 3.0).abs() < 1e-15);
            assert_eq!(&r[2..], &[0.0, 0.0, 1.0]);
        }
        assert_eq!(v.xs, *fixtures::triangle().features());
    }

    #[test]
    fn views_reject_degenerate_input() {
        let g = Graph::new(Matrix::zeros(3, 0), [(0, 1)], None).unwrap();
        assert!(build_views(&g, 2, 2).is_err());
        assert!(build_views(&fixtures::triangle(), 0, 2).is_err());
        assert!(build_views(&fixtures::triangle(), 2, 0).is_err());
    }

    #[test]
    fn percentile_degree() {
        assert_eq!(default_max_deg(&fixtures::star(19)), 1);
        assert_eq!(default_max_deg(&fixtures::star(3)), 3);
        let iso = Graph::new(fixtures::unit_features(2), [], None).unwrap();
        assert_eq!(default_max_deg(&iso), 1);
    }
}
