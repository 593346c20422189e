//! Training objectives and per-node anomaly scores.
//!
//! The contrastive term compares the structural view of node `i` against the
//! attribute view of every node `j` through the product distance
//! `D_ij = (bounded(|hg_i - hs_j|) + bounded(d_L(hhg_i, hhs_j))) / 2`:
//!
//! - `l1_i = D_ii / tau + logsumexp_{j != i}(-D_ij / tau)` (row `i`)
//! - `l2_i = D_ii / tau + logsumexp_{j != i}(-D_ji / tau)` (column `i`)
//! - `cl = sum_i (l1_i + l2_i) / (2n)`
//!
//! The positive pair never appears in its own denominator, so `l1_i` may be
//! negative.

use std::fmt;
use std::str::FromStr;

use crate::error::{JanusError, Result};
use crate::hypgeom::geodesic_raw;
use crate::matrix::Matrix;
use crate::model::Forward;
use crate::tensor::Var;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub tau: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 0.01,
            lambda2: 1.0,
            tau: 0.6,
        }
    }
}

impl LossWeights {
    pub fn new(lambda1: f64, lambda2: f64, tau: f64) -> Result<Self> {
        let w = LossWeights {
            lambda1,
            lambda2,
            tau,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(JanusError::config("tau", "must be a finite value > 0"));
        }
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return Err(JanusError::config("lambda1", "must be a finite value >= 0"));
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return Err(JanusError::config("lambda2", "must be a finite value >= 0"));
        }
        Ok(())
    }
}

/// Which objective terms are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    /// `cl + lambda1 adj + lambda2 node`
    #[default]
    Full,
    /// Contrastive term only; decoders are never run.
    ClOnly,
    /// `lambda1 adj + lambda2 node` without the contrastive term.
    AeOnly,
}

impl Variant {
    pub fn uses_contrastive(self) -> bool {
        !matches!(self, Variant::AeOnly)
    }

    pub fn uses_reconstruction(self) -> bool {
        !matches!(self, Variant::ClOnly)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::ClOnly => "cl_only",
            Variant::AeOnly => "ae_only",
        })
    }
}

impl FromStr for Variant {
    type Err = JanusError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "cl_only" => Ok(Variant::ClOnly),
            "ae_only" => Ok(Variant::AeOnly),
            other => Err(JanusError::config(
                "variant",
                format!("expected `full`, `cl_only` or `ae_only`, got `{other}`"),
            )),
        }
    }
}

/// Loss values after a forward pass. Inactive terms are zero and their
/// per-node vectors are all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub cl: f64,
    pub adj: f64,
    pub node: f64,
    pub total: f64,
    pub per_node_cl: Vec<f64>,
    pub per_node_adj: Vec<f64>,
    pub per_node_node: Vec<f64>,
}

/// Loss terms recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct LossVars<'t> {
    pub total: Var<'t>,
    pub cl: Option<(Var<'t>, Var<'t>)>,
    pub adj: Option<(Var<'t>, Var<'t>)>,
    pub node: Option<(Var<'t>, Var<'t>)>,
}

impl LossVars<'_> {
    pub fn breakdown(&self, n: usize) -> LossBreakdown {
        let split = |t: Option<(Var<'_>, Var<'_>)>| match t {
            Some((s, p)) => (s.item(), p.data()),
            None => (0.0, vec![0.0; n]),
        };
        let (cl, per_node_cl) = split(self.cl);
        let (adj, per_node_adj) = split(self.adj);
        let (node, per_node_node) = split(self.node);
        LossBreakdown {
            cl,
            adj,
            node,
            total: self.total.item(),
            per_node_cl,
            per_node_adj,
            per_node_node,
        }
    }
}

/// `total = cl + lambda1 adj + lambda2 node` on plain values.
pub fn total_loss(cl: f64, adj: f64, node: f64, w: &LossWeights) -> f64 {
    cl + w.lambda1 * adj + w.lambda2 * node
}

/// Product-distance matrix `D_ij` between the structural view of row `i`
/// and the attribute view of row `j`.
pub fn product_distance_matrix<'t>(
    hs: Var<'t>,
    hg: Var<'t>,
    hhs: Var<'t>,
    hhg: Var<'t>,
) -> Result<Var<'t>> {
    let e = hg.pairwise_dist(hs)?.bounded();
    let h = hhg.pairwise_geodesic(hhs)?.bounded();
    Ok(e.add(h)?.scale(0.5))
}

/// Contrastive loss from a precomputed distance matrix. Returns
/// `(cl, per_node_cl)`.
pub fn contrastive_from_distances<'t>(m: Var<'t>, tau: f64) -> Result<(Var<'t>, Var<'t>)> {
    let (n, c) = m.shape();
    if n != c {
        return Err(JanusError::mismatch("contrastive distances", "square", format!("{n}x{c}")));
    }
    if n < 2 {
        return Err(JanusError::InvalidInput(
            "contrastive loss needs at least 2 nodes".into(),
        ));
    }
    let pos = m.diag()?.scale(1.0 / tau);
    let neg = m.scale(-1.0 / tau);
    let l1 = pos.add(neg.logsumexp_rows(true)?)?;
    let l2 = pos.add(neg.transpose().logsumexp_rows(true)?)?;
    let per_node = l1.add(l2)?.scale(1.0 / (2 * n) as f64);
    Ok((per_node.sum(), per_node))
}

pub fn contrastive_loss<'t>(
    hs: Var<'t>,
    hg: Var<'t>,
    hhs: Var<'t>,
    hhg: Var<'t>,
    tau: f64,
) -> Result<(Var<'t>, Var<'t>)> {
    contrastive_from_distances(product_distance_matrix(hs, hg, hhs, hhg)?, tau)
}

/// Sum of squared Frobenius errors of the four reconstructions against `a`.
/// Returns `(adj, per_node_adj)` with row-wise shares.
pub fn adjacency_loss<'t>(a: Var<'t>, recons: &[Var<'t>; 4]) -> Result<(Var<'t>, Var<'t>)> {
    let mut per_node: Option<Var<'t>> = None;
    for &r in recons {
        let rows = r.sub(a)?.square().row_sum();
        per_node = Some(match per_node {
            Some(p) => p.add(rows)?,
            None => rows,
        });
    }
    let per_node = per_node.expect("four terms");
    Ok((per_node.sum(), per_node))
}

/// [`adjacency_loss`] evaluated directly from the four embeddings whose
/// gram matrices are reconstructed (`[Hs, Hg, Ths, Thg]`), without
/// materializing the reconstructions on the tape.
pub fn adjacency_loss_from_embeddings<'t>(
    a: Var<'t>,
    embeddings: &[Var<'t>; 4],
) -> Result<(Var<'t>, Var<'t>)> {
    let mut per_node = embeddings[0].gram_sigmoid_sq_err(a)?;
    for &h in &embeddings[1..] {
        per_node = per_node.add(h.gram_sigmoid_sq_err(a)?)?;
    }
    Ok((per_node.sum(), per_node))
}

/// Feature reconstruction loss. The global value bounds the summed
/// row distances of each geometry; the per-node vector bounds each node's
/// own distances. Returns `(node, per_node_node)`.
pub fn node_feature_loss<'t>(fwd: &Forward<'t>) -> Result<(Var<'t>, Var<'t>)> {
    let rec = fwd
        .recon
        .ok_or_else(|| JanusError::InvalidInput("node loss needs decoder outputs".into()))?;
    let e = fwd
        .xg
        .sub(rec.rec_g)?
        .row_norm()
        .add(fwd.xs.sub(rec.rec_s)?.row_norm())?;
    let h = fwd
        .xg_hat
        .row_geodesic(rec.rec_hg)?
        .add(fwd.xs_hat.row_geodesic(rec.rec_hs)?)?;
    let global = e.sum().bounded().add(h.sum().bounded())?.scale(0.5);
    let per_node = e.bounded().add(h.bounded())?.scale(0.5);
    Ok((global, per_node))
}

/// Assembles the active terms of `variant`. `adjacency` is the dense 0/1
/// target and is only read when `lambda1 > 0`.
pub fn objective<'t>(
    fwd: &Forward<'t>,
    adjacency: Option<Var<'t>>,
    w: &LossWeights,
    variant: Variant,
) -> Result<LossVars<'t>> {
    let cl = if variant.uses_contrastive() {
        Some(contrastive_loss(fwd.hs, fwd.hg, fwd.hhs, fwd.hhg, w.tau)?)
    } else {
        None
    };
    let (adj, node) = if variant.uses_reconstruction() {
        let adj = match adjacency {
            Some(a) if w.lambda1 > 0.0 => Some(adjacency_loss_from_embeddings(a, &[fwd.hs, fwd.hg, fwd.ths, fwd.thg])?),
            _ => None,
        };
        (adj, Some(node_feature_loss(fwd)?))
    } else {
        (None, None)
    };

    let mut total: Option<Var<'t>> = cl.map(|c| c.0);
    let mut push = |term: Var<'t>| -> Result<()> {
        total = Some(match total {
            Some(t) => t.add(term)?,
            None => term,
        });
        Ok(())
    };
    if let Some((a, _)) = adj {
        push(a.scale(w.lambda1))?;
    }
    if let Some((nd, _)) = node {
        push(nd.scale(w.lambda2))?;
    }
    let total = total.expect("every variant has at least one term");
    Ok(LossVars {
        total,
        cl,
        adj,
        node,
    })
}

/// `score_i = per_node_cl_i + lambda2 per_node_node_i` (terms of inactive
/// parts are zero). Higher means more anomalous.
pub fn anomaly_scores(b: &LossBreakdown, w: &LossWeights) -> Vec<f64> {
    b.per_node_cl
        .iter()
        .zip(&b.per_node_node)
        .map(|(c, n)| c + w.lambda2 * n)
        .collect()
}

/// Per-node contrastive shares computed row by row in `O(n)` memory.
///
/// Inputs are plain embedding matrices (`hhs`, `hhg` in ambient
/// coordinates). Agrees with [`contrastive_loss`] up to rounding.
pub fn contrastive_per_node_streaming(
    hs: &Matrix,
    hg: &Matrix,
    hhs: &Matrix,
    hhg: &Matrix,
    tau: f64,
) -> Result<Vec<f64>> {
    let n = hs.rows();
    if hg.rows() != n || hhs.rows() != n || hhg.rows() != n {
        return Err(JanusError::mismatch("contrastive inputs", n, hg.rows()));
    }
    if hs.cols() != hg.cols() || hhs.cols() != hhg.cols() || hhs.cols() < 2 {
        return Err(JanusError::mismatch(
            "contrastive widths",
            format!("{} / {}", hs.cols(), hhs.cols()),
            format!("{} / {}", hg.cols(), hhg.cols()),
        ));
    }
    if n < 2 {
        return Err(JanusError::InvalidInput(
            "contrastive loss needs at least 2 nodes".into(),
        ));
    }
    let bounded = |x: f64| x / (1.0 + x);
    let mut pos = vec![0.0; n];
    let mut row_lse = vec![0.0; n];
    let mut col_max = vec![f64::NEG_INFINITY; n];
    let mut col_sum = vec![0.0; n];
    let mut row = vec![0.0; n];
    for i in 0..n {
        let (xg, pg) = (hg.row(i), hhg.row(i));
        for j in 0..n {
            let e: f64 = xg
                .iter()
                .zip(hs.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let (h, _) = geodesic_raw(pg, hhs.row(j));
            row[j] = 0.5 * (bounded(e) + bounded(h));
        }
        pos[i] = row[i];
        let mut mx = f64::NEG_INFINITY;
        for (j, &d) in row.iter().enumerate() {
            if j != i {
                mx = mx.max(-d / tau);
            }
        }
        let mut s = 0.0;
        for (j, &d) in row.iter().enumerate() {
            if j == i {
                continue;
            }
            let v = -d / tau;
            s += (v - mx).exp();
            if v > col_max[j] {
                col_sum[j] = col_sum[j] * (col_max[j] - v).exp() + 1.0;
                col_max[j] = v;
            } else {
                col_sum[j] += (v - col_max[j]).exp();
            }
        }
        row_lse[i] = mx + s.ln();
    }
    let scale = 1.0 / (2 * n) as f64;
    Ok((0..n)
        .map(|i| {
            let l1 = pos[i] / tau + row_lse[i];
            let l2 = pos[i] / tau + col_max[i] + col_sum[i].ln();
            (l1 + l2) * scale
        })
        .collect())
}
