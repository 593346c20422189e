use std::cell::{Ref, RefCell};
use std::rc::Rc;

use crate::error::{JanusError, Result};
use crate::graph::SparseOperator;
use crate::hypgeom::{exp_origin_into, geodesic_raw, log_origin_into};
use crate::matrix::Matrix;

use super::Tensor;

/// Below this norm the exp/log backward passes switch to Taylor series.
const SERIES_RADIUS: f64 = 1e-3;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    /// `a * b^T`
    MatMulT(usize, usize),
    Spmm(Rc<SparseOperator>, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Square(usize),
    Sigmoid(usize),
    Relu(usize),
    /// `x / (1 + x)`
    Bounded(usize),
    ConcatCols(usize, usize),
    SliceCols(usize, usize),
    SelectRows(usize, Vec<usize>),
    Diag(usize),
    Sum(usize),
    RowSum(usize),
    RowNorm(usize),
    LogSumExpRows {
        a: usize,
        exclude_diag: bool,
    },
    PairwiseDist(usize, usize),
    /// Saves `t = <x-y, x-y>_L / 2` per pair.
    PairwiseGeodesic(usize, usize, Vec<f64>),
    RowGeodesic(usize, usize, Vec<f64>),
    ExpOrigin(usize),
    LogOrigin(usize),
    /// Row sums of `(sigmoid(H H^T) - A)^2`; saves `sigmoid(H H^T)`.
    GramSigmoidSqErr(usize, usize, Vec<f64>),
}

impl Op {
    fn parents(&self) -> [Option<usize>; 2] {
        use Op::*;
        match self {
            Leaf => [None, None],
            MatMul(a, b)
            | MatMulT(a, b)
            | Add(a, b)
            | Sub(a, b)
            | Mul(a, b)
            | ConcatCols(a, b)
            | PairwiseDist(a, b)
            | PairwiseGeodesic(a, b, _)
            | RowGeodesic(a, b, _)
            | GramSigmoidSqErr(a, b, _) => [Some(*a), Some(*b)],
            Spmm(_, a)
            | Transpose(a)
            | Scale(a, _)
            | AddScalar(a)
            | Square(a)
            | Sigmoid(a)
            | Relu(a)
            | Bounded(a)
            | SliceCols(a, _)
            | SelectRows(a, _)
            | Diag(a)
            | Sum(a)
            | RowSum(a)
            | RowNorm(a)
            | LogSumExpRows { a, .. }
            | ExpOrigin(a)
            | LogOrigin(a) => [Some(*a), None],
        }
    }
}

#[derive(Debug)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

/// Append-only record of a computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, or `None` when `v` does not
    /// require gradients or does not influence the loss.
    pub fn get(&self, v: Var<'_>) -> Option<&[f64]> {
        self.grads.get(v.id).and_then(|g| g.as_deref())
    }

    /// Like [`Gradients::get`] but returns zeros for unreached leaves.
    pub fn get_or_zeros(&self, v: Var<'_>) -> Vec<f64> {
        match self.get(v) {
            Some(g) => g.to_vec(),
            None => vec![0.0; v.len()],
        }
    }

    /// Adds the gradient of `v` into `t.grad`.
    pub fn accumulate_into(&self, v: Var<'_>, t: &mut Tensor) -> Result<()> {
        t.accumulate_grad(&self.get_or_zeros(v))
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var<'_> {
        debug_assert_eq!(value.len(), rows * cols);
        let mut nodes = self.nodes.borrow_mut();
        let needs_grad = op
            .parents()
            .iter()
            .flatten()
            .any(|&p| nodes[p].needs_grad);
        nodes.push(Node {
            rows,
            cols,
            value,
            op,
            needs_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn leaf(&self, rows: usize, cols: usize, value: Vec<f64>, needs_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            rows,
            cols,
            value,
            op: Op::Leaf,
            needs_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Records a copy of `t`; gradients flow to it iff `t.requires_grad()`.
    pub fn param(&self, t: &Tensor) -> Var<'_> {
        self.leaf(t.rows(), t.cols(), t.data().to_vec(), t.requires_grad())
    }

    pub fn constant(&self, m: &Matrix) -> Var<'_> {
        self.leaf(m.rows(), m.cols(), m.data().to_vec(), false)
    }

    pub fn constant_tensor(&self, t: &Tensor) -> Var<'_> {
        self.leaf(t.rows(), t.cols(), t.data().to_vec(), false)
    }

    /// Reverse pass from the scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        assert!(std::ptr::eq(self, loss.tape), "loss belongs to another tape");
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if (root.rows, root.cols) != (1, 1) {
            return Err(JanusError::mismatch(
                "backward",
                "1x1",
                format!("{}x{}", root.rows, root.cols),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        if !root.needs_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.id] = Some(vec![1.0]);
        let mut leaves: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if let Op::Leaf = node.op {
                leaves[id] = Some(g);
                continue;
            }
            backprop(&nodes, id, &g, &mut grads);
        }
        Ok(Gradients { grads: leaves })
    }
}

/// Adds `f`'s contribution into the gradient slot of `id` if it needs one.
fn acc(
    nodes: &[Node],
    grads: &mut [Option<Vec<f64>>],
    id: usize,
    f: impl FnOnce(&mut [f64]),
) {
    if !nodes[id].needs_grad {
        return;
    }
    let len = nodes[id].value.len();
    let buf = grads[id].get_or_insert_with(|| vec![0.0; len]);
    f(buf);
}

fn backprop(nodes: &[Node], id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let node = &nodes[id];
    let out = &node.value;
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (na, nb) = (&nodes[*a], &nodes[*b]);
            let (n, k, m) = (na.rows, na.cols, nb.cols);
            // dA = G B^T, dB = A^T G
            acc(nodes, grads, *a, |ga| gemm_nt_acc(g, &nb.value, n, m, k, ga));
            acc(nodes, grads, *b, |gb| gemm_tn_acc(&na.value, g, n, k, m, gb));
        }
        Op::MatMulT(a, b) => {
            let (na, nb) = (&nodes[*a], &nodes[*b]);
            let (n, k, m) = (na.rows, na.cols, nb.rows);
            // out = A B^T: dA = G B, dB = G^T A
            acc(nodes, grads, *a, |ga| gemm_nn_acc(g, &nb.value, n, m, k, ga));
            acc(nodes, grads, *b, |gb| gemm_tn_acc(g, &na.value, n, m, k, gb));
        }
        Op::Spmm(s, a) => {
            let k = nodes[*a].cols;
            acc(nodes, grads, *a, |ga| s.apply_transpose_acc(g, k, ga));
        }
        Op::Transpose(a) => {
            let (r, c) = (nodes[*a].rows, nodes[*a].cols);
            acc(nodes, grads, *a, |ga| {
                for i in 0..r {
                    for j in 0..c {
                        ga[i * c + j] += g[j * r + i];
                    }
                }
            });
        }
        Op::Add(a, b) => {
            acc(nodes, grads, *a, |ga| axpy(1.0, g, ga));
            acc(nodes, grads, *b, |gb| axpy(1.0, g, gb));
        }
        Op::Sub(a, b) => {
            acc(nodes, grads, *a, |ga| axpy(1.0, g, ga));
            acc(nodes, grads, *b, |gb| axpy(-1.0, g, gb));
        }
        Op::Mul(a, b) => {
            let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
            acc(nodes, grads, *a, |ga| {
                for ((o, gi), bi) in ga.iter_mut().zip(g).zip(vb) {
                    *o += gi * bi;
                }
            });
            acc(nodes, grads, *b, |gb| {
                for ((o, gi), ai) in gb.iter_mut().zip(g).zip(va) {
                    *o += gi * ai;
                }
            });
        }
        Op::Scale(a, c) => acc(nodes, grads, *a, |ga| axpy(*c, g, ga)),
        Op::AddScalar(a) => acc(nodes, grads, *a, |ga| axpy(1.0, g, ga)),
        Op::Square(a) => {
            let va = &nodes[*a].value;
            acc(nodes, grads, *a, |ga| {
                for ((o, gi), x) in ga.iter_mut().zip(g).zip(va) {
                    *o += 2.0 * x * gi;
                }
            });
        }
        Op::Sigmoid(a) => acc(nodes, grads, *a, |ga| {
            for ((o, gi), y) in ga.iter_mut().zip(g).zip(out) {
                *o += gi * y * (1.0 - y);
            }
        }),
        Op::Relu(a) => {
            let va = &nodes[*a].value;
            acc(nodes, grads, *a, |ga| {
                for ((o, gi), x) in ga.iter_mut().zip(g).zip(va) {
                    if *x > 0.0 {
                        *o += gi;
                    }
                }
            });
        }
        Op::Bounded(a) => {
            let va = &nodes[*a].value;
            acc(nodes, grads, *a, |ga| {
                for ((o, gi), x) in ga.iter_mut().zip(g).zip(va) {
                    let d = 1.0 + x;
                    *o += gi / (d * d);
                }
            });
        }
        Op::ConcatCols(a, b) => {
            let (ca, cb) = (nodes[*a].cols, nodes[*b].cols);
            let c = ca + cb;
            acc(nodes, grads, *a, |ga| {
                for (i, row) in ga.chunks_mut(ca.max(1)).enumerate().take(node.rows) {
                    axpy(1.0, &g[i * c..i * c + ca], row);
                }
            });
            acc(nodes, grads, *b, |gb| {
                for (i, row) in gb.chunks_mut(cb.max(1)).enumerate().take(node.rows) {
                    axpy(1.0, &g[i * c + ca..(i + 1) * c], row);
                }
            });
        }
        Op::SliceCols(a, start) => {
            let ca = nodes[*a].cols;
            let w = node.cols;
            acc(nodes, grads, *a, |ga| {
                for i in 0..node.rows {
                    axpy(
                        1.0,
                        &g[i * w..(i + 1) * w],
                        &mut ga[i * ca + start..i * ca + start + w],
                    );
                }
            });
        }
        Op::SelectRows(a, idx) => {
            let c = node.cols;
            acc(nodes, grads, *a, |ga| {
                for (i, &r) in idx.iter().enumerate() {
                    axpy(1.0, &g[i * c..(i + 1) * c], &mut ga[r * c..(r + 1) * c]);
                }
            });
        }
        Op::Diag(a) => {
            let n = nodes[*a].cols;
            acc(nodes, grads, *a, |ga| {
                for (i, gi) in g.iter().enumerate() {
                    ga[i * n + i] += gi;
                }
            });
        }
        Op::Sum(a) => acc(nodes, grads, *a, |ga| ga.iter_mut().for_each(|o| *o += g[0])),
        Op::RowSum(a) => {
            let c = nodes[*a].cols;
            acc(nodes, grads, *a, |ga| {
                for (i, gi) in g.iter().enumerate() {
                    ga[i * c..(i + 1) * c].iter_mut().for_each(|o| *o += gi);
                }
            });
        }
        Op::GramSigmoidSqErr(h, a, sig) => {
            let (nh, na) = (&nodes[*h], &nodes[*a]);
            let (n, k) = (nh.rows, nh.cols);
            // r_ij = 2 g_i (s_ij - a_ij); dZ = r * s (1 - s); dH = (dZ + dZ^T) H.
            let r: Vec<f64> = sig
                .iter()
                .zip(&na.value)
                .enumerate()
                .map(|(p, (&s, &t))| 2.0 * g[p / n] * (s - t))
                .collect();
            if nh.needs_grad {
                let dz: Vec<f64> = r.iter().zip(sig).map(|(&r, &s)| r * s * (1.0 - s)).collect();
                let mut sym = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        sym[i * n + j] = dz[i * n + j] + dz[j * n + i];
                    }
                }
                acc(nodes, grads, *h, |gh| gemm_nn_acc(&sym, &nh.value, n, n, k, gh));
            }
            acc(nodes, grads, *a, |ga| ga.iter_mut().zip(&r).for_each(|(o, r)| *o -= r));
        }
        Op::RowNorm(a) => {
            let na = &nodes[*a];
            let c = na.cols;
            acc(nodes, grads, *a, |ga| {
                for i in 0..na.rows {
                    let y = out[i];
                    if y > 0.0 {
                        let s = g[i] / y;
                        axpy(s, &na.value[i * c..(i + 1) * c], &mut ga[i * c..(i + 1) * c]);
                    }
                }
            });
        }
        Op::LogSumExpRows { a, exclude_diag } => {
            let na = &nodes[*a];
            let c = na.cols;
            acc(nodes, grads, *a, |ga| {
                for i in 0..na.rows {
                    let row = &na.value[i * c..(i + 1) * c];
                    let grow = &mut ga[i * c..(i + 1) * c];
                    for j in 0..c {
                        if *exclude_diag && i == j {
                            continue;
                        }
                        grow[j] += g[i] * (row[j] - out[i]).exp();
                    }
                }
            });
        }
        Op::PairwiseDist(a, b) => {
            let coef: Vec<f64> = out
                .iter()
                .zip(g)
                .map(|(&d, &gp)| if d > 0.0 { gp / d } else { 0.0 })
                .collect();
            pairwise_backward(nodes, grads, *a, *b, &coef, false);
        }
        Op::PairwiseGeodesic(a, b, t) => {
            pairwise_backward(nodes, grads, *a, *b, &arcosh_coef(t, g), true);
        }
        Op::RowGeodesic(a, b, t) => {
            geodesic_rows_backward(nodes, grads, *a, *b, &arcosh_coef(t, g));
        }
        Op::ExpOrigin(a) => {
            let na = &nodes[*a];
            let k = na.cols;
            acc(nodes, grads, *a, |ga| {
                for i in 0..na.rows {
                    let v = &na.value[i * k..(i + 1) * k];
                    let gi = &g[i * (k + 1)..(i + 1) * (k + 1)];
                    let r = norm(v);
                    let (s, q) = if r < SERIES_RADIUS {
                        let r2 = r * r;
                        (1.0 + r2 / 6.0 + r2 * r2 / 120.0, 1.0 / 3.0 + r2 / 30.0)
                    } else {
                        let (sh, ch) = (r.sinh(), r.cosh());
                        (sh / r, (r * ch - sh) / (r * r * r))
                    };
                    let gs = &gi[1..];
                    let dot: f64 = gs.iter().zip(v).map(|(x, y)| x * y).sum();
                    let coef = gi[0] * s + dot * q;
                    for ((o, gj), vj) in ga[i * k..(i + 1) * k].iter_mut().zip(gs).zip(v) {
                        *o += s * gj + coef * vj;
                    }
                }
            });
        }
        Op::LogOrigin(a) => {
            let na = &nodes[*a];
            let c = na.cols;
            let k = c - 1;
            acc(nodes, grads, *a, |ga| {
                for i in 0..na.rows {
                    let ys = &na.value[i * c + 1..(i + 1) * c];
                    let gi = &g[i * k..(i + 1) * k];
                    let rho = norm(ys);
                    let (f, p) = if rho < SERIES_RADIUS {
                        let r2 = rho * rho;
                        (1.0 - r2 / 6.0 + 3.0 * r2 * r2 / 40.0, -1.0 / 3.0 + 0.3 * r2)
                    } else {
                        let ash = rho.asinh();
                        (
                            ash / rho,
                            (rho / (1.0 + rho * rho).sqrt() - ash) / (rho * rho * rho),
                        )
                    };
                    let dot: f64 = gi.iter().zip(ys).map(|(x, y)| x * y).sum();
                    for ((o, gj), yj) in ga[i * c + 1..(i + 1) * c].iter_mut().zip(gi).zip(ys) {
                        *o += f * gj + dot * p * yj;
                    }
                }
            });
        }
    }
}

/// `d = arcosh(1 + t)` gives `dd/dt = 1 / sqrt(t (t + 2))`, with
/// subgradient 0 at `t = 0`. Returns upstream gradient times `dd/dt`.
fn arcosh_coef(t: &[f64], g: &[f64]) -> Vec<f64> {
    t.iter()
        .zip(g)
        .map(|(&t, &gp)| if t > 0.0 { gp / (t * (t + 2.0)).sqrt() } else { 0.0 })
        .collect()
}

/// Backward of an `n x m` matrix of pair functions whose gradient in `x_i`
/// is `C_ij J (x_i - y_j)`, with `J = diag(-1, 1, ..)` when `minkowski`
/// and the identity otherwise:
/// `dX = J (rowsum(C) X - C Y)`, `dY = J (colsum(C) Y - C^T X)`.
fn pairwise_backward(
    nodes: &[Node],
    grads: &mut [Option<Vec<f64>>],
    a: usize,
    b: usize,
    coef: &[f64],
    minkowski: bool,
) {
    let (na, nb) = (&nodes[a], &nodes[b]);
    let (n, m, k) = (na.rows, nb.rows, na.cols);
    let flip = |buf: &mut [f64]| {
        if minkowski {
            buf.iter_mut().step_by(k).for_each(|v| *v = -*v);
        }
    };
    if na.needs_grad {
        let mut tmp = vec![0.0; n * k];
        for i in 0..n {
            let rs: f64 = coef[i * m..(i + 1) * m].iter().sum();
            axpy(rs, &na.value[i * k..(i + 1) * k], &mut tmp[i * k..(i + 1) * k]);
        }
        let mut cy = vec![0.0; n * k];
        gemm_nn_acc(coef, &nb.value, n, m, k, &mut cy);
        tmp.iter_mut().zip(&cy).for_each(|(t, c)| *t -= c);
        flip(&mut tmp);
        acc(nodes, grads, a, |ga| ga.iter_mut().zip(&tmp).for_each(|(o, t)| *o += t));
    }
    if nb.needs_grad {
        let mut cs = vec![0.0; m];
        for row in coef.chunks_exact(m) {
            cs.iter_mut().zip(row).for_each(|(c, v)| *c += v);
        }
        let mut tmp = vec![0.0; m * k];
        for (j, &c) in cs.iter().enumerate() {
            axpy(c, &nb.value[j * k..(j + 1) * k], &mut tmp[j * k..(j + 1) * k]);
        }
        let mut ctx = vec![0.0; m * k];
        gemm_tn_acc(coef, &na.value, n, m, k, &mut ctx);
        tmp.iter_mut().zip(&ctx).for_each(|(t, c)| *t -= c);
        flip(&mut tmp);
        acc(nodes, grads, b, |gb| gb.iter_mut().zip(&tmp).for_each(|(o, t)| *o += t));
    }
}

/// Row-paired version of [`pairwise_backward`] for geodesics.
fn geodesic_rows_backward(
    nodes: &[Node],
    grads: &mut [Option<Vec<f64>>],
    a: usize,
    b: usize,
    coef: &[f64],
) {
    let (na, nb) = (&nodes[a], &nodes[b]);
    let c = na.cols;
    for (target, sign) in [(a, 1.0), (b, -1.0)] {
        acc(nodes, grads, target, |gt| {
            for (i, &s) in coef.iter().enumerate() {
                let x = &na.value[i * c..(i + 1) * c];
                let y = &nb.value[i * c..(i + 1) * c];
                let o = &mut gt[i * c..(i + 1) * c];
                o[0] -= sign * s * (x[0] - y[0]);
                for q in 1..c {
                    o[q] += sign * s * (x[q] - y[q]);
                }
            }
        });
    }
}

/// Dot product over four independent partial sums.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            lanes[l] += x[l] * y[l];
        }
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

/// Squared Euclidean distance over four independent partial sums.
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| (x - y) * (x - y)).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            let d = x[l] - y[l];
            lanes[l] += d * d;
        }
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (o, v) in y.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

/// `out += A B` with `A: n x k`, `B: k x m`.
fn gemm_nn_acc(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            axpy(av, &b[p * m..(p + 1) * m], orow);
        }
    }
}

/// `out += A B^T` with `A: n x k`, `B: m x k`.
fn gemm_nt_acc(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    for i in 0..n {
        let ar = &a[i * k..(i + 1) * k];
        for j in 0..m {
            let br = &b[j * k..(j + 1) * k];
            out[i * m + j] += dot(ar, br);
        }
    }
}

/// `out += A^T B` with `A: n x k`, `B: n x m`.
fn gemm_tn_acc(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    for r in 0..n {
        let brow = &b[r * m..(r + 1) * m];
        for p in 0..k {
            let av = a[r * k + p];
            if av == 0.0 {
                continue;
            }
            axpy(av, brow, &mut out[p * m..(p + 1) * m]);
        }
    }
}

impl<'t> Var<'t> {
    fn node(&self) -> Ref<'t, Node> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id])
    }

    fn same_tape(&self, other: &Var<'t>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "vars belong to different tapes"
        );
    }

    pub fn shape(&self) -> (usize, usize) {
        let n = self.node();
        (n.rows, n.cols)
    }

    pub fn rows(&self) -> usize {
        self.node().rows
    }

    pub fn cols(&self) -> usize {
        self.node().cols
    }

    pub fn len(&self) -> usize {
        self.node().value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data(&self) -> Vec<f64> {
        self.node().value.clone()
    }

    pub fn value(&self) -> Matrix {
        let n = self.node();
        Matrix::from_vec(n.rows, n.cols, n.value.clone()).expect("node shape invariant")
    }

    /// The single entry of a 1x1 value.
    pub fn item(&self) -> f64 {
        let n = self.node();
        assert_eq!(n.value.len(), 1, "item() on a non-scalar");
        n.value[0]
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn unary(self, f: impl FnOnce(&Node) -> (usize, usize, Vec<f64>), op: Op) -> Var<'t> {
        let (r, c, v) = f(&self.node());
        self.tape.push(r, c, v, op)
    }

    fn map(self, f: impl Fn(f64) -> f64, op: Op) -> Var<'t> {
        self.unary(|n| (n.rows, n.cols, n.value.iter().map(|&x| f(x)).collect()), op)
    }

    fn zip_same(
        self,
        other: Var<'t>,
        context: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var<'t>> {
        self.same_tape(&other);
        let (r, c, v) = {
            let (a, b) = (self.node(), other.node());
            if (a.rows, a.cols) != (b.rows, b.cols) {
                return Err(shape_err(context, &a, &b));
            }
            let v = a.value.iter().zip(&b.value).map(|(&x, &y)| f(x, y)).collect();
            (a.rows, a.cols, v)
        };
        Ok(self.tape.push(r, c, v, op))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.zip_same(other, "add", |x, y| x + y, Op::Add(self.id, other.id))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.zip_same(other, "sub", |x, y| x - y, Op::Sub(self.id, other.id))
    }

    /// Elementwise product.
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.zip_same(other, "mul", |x, y| x * y, Op::Mul(self.id, other.id))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.map(|x| c * x, Op::Scale(self.id, c))
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.map(|x| x + c, Op::AddScalar(self.id))
    }

    pub fn square(self) -> Var<'t> {
        self.map(|x| x * x, Op::Square(self.id))
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.map(sigmoid, Op::Sigmoid(self.id))
    }

    pub fn relu(self) -> Var<'t> {
        self.map(|x| x.max(0.0), Op::Relu(self.id))
    }

    /// Elementwise `x / (1 + x)`; inputs are expected to be non-negative.
    pub fn bounded(self) -> Var<'t> {
        self.map(|x| x / (1.0 + x), Op::Bounded(self.id))
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let (r, c, v) = {
            let (a, b) = (self.node(), other.node());
            if a.cols != b.rows {
                return Err(shape_err("matmul", &a, &b));
            }
            let mut v = vec![0.0; a.rows * b.cols];
            gemm_nn_acc(&a.value, &b.value, a.rows, a.cols, b.cols, &mut v);
            (a.rows, b.cols, v)
        };
        Ok(self.tape.push(r, c, v, Op::MatMul(self.id, other.id)))
    }

    /// `self * other^T`.
    pub fn matmul_t(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let (r, c, v) = {
            let (a, b) = (self.node(), other.node());
            if a.cols != b.cols {
                return Err(shape_err("matmul_t", &a, &b));
            }
            let mut v = vec![0.0; a.rows * b.rows];
            gemm_nt_acc(&a.value, &b.value, a.rows, a.cols, b.rows, &mut v);
            (a.rows, b.rows, v)
        };
        Ok(self.tape.push(r, c, v, Op::MatMulT(self.id, other.id)))
    }

    /// Sparse-times-dense product `s * self`.
    pub fn spmm(self, s: &Rc<SparseOperator>) -> Result<Var<'t>> {
        let (r, c, v) = {
            let a = self.node();
            if a.rows != s.dim() {
                return Err(JanusError::mismatch("spmm", s.dim(), a.rows));
            }
            let mut v = vec![0.0; a.value.len()];
            s.apply(&a.value, a.cols, &mut v);
            (a.rows, a.cols, v)
        };
        Ok(self.tape.push(r, c, v, Op::Spmm(Rc::clone(s), self.id)))
    }

    pub fn transpose(self) -> Var<'t> {
        self.unary(
            |n| {
                let mut v = vec![0.0; n.value.len()];
                for i in 0..n.rows {
                    for j in 0..n.cols {
                        v[j * n.rows + i] = n.value[i * n.cols + j];
                    }
                }
                (n.cols, n.rows, v)
            },
            Op::Transpose(self.id),
        )
    }

    pub fn concat_cols(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let (r, c, v) = {
            let (a, b) = (self.node(), other.node());
            if a.rows != b.rows {
                return Err(shape_err("concat_cols", &a, &b));
            }
            let mut v = Vec::with_capacity(a.value.len() + b.value.len());
            for i in 0..a.rows {
                v.extend_from_slice(&a.value[i * a.cols..(i + 1) * a.cols]);
                v.extend_from_slice(&b.value[i * b.cols..(i + 1) * b.cols]);
            }
            (a.rows, a.cols + b.cols, v)
        };
        Ok(self.tape.push(r, c, v, Op::ConcatCols(self.id, other.id)))
    }

    /// Columns `start..end`.
    pub fn slice_cols(self, start: usize, end: usize) -> Result<Var<'t>> {
        let (r, c, v) = {
            let a = self.node();
            if start > end || end > a.cols {
                return Err(JanusError::mismatch(
                    "slice_cols",
                    format!("range within 0..{}", a.cols),
                    format!("{start}..{end}"),
                ));
            }
            let mut v = Vec::with_capacity(a.rows * (end - start));
            for i in 0..a.rows {
                v.extend_from_slice(&a.value[i * a.cols + start..i * a.cols + end]);
            }
            (a.rows, end - start, v)
        };
        Ok(self.tape.push(r, c, v, Op::SliceCols(self.id, start)))
    }

    pub fn select_rows(self, idx: &[usize]) -> Result<Var<'t>> {
        let (r, c, v) = {
            let a = self.node();
            if let Some(&bad) = idx.iter().find(|&&i| i >= a.rows) {
                return Err(JanusError::mismatch(
                    "select_rows",
                    format!("row < {}", a.rows),
                    bad,
                ));
            }
            let mut v = Vec::with_capacity(idx.len() * a.cols);
            for &i in idx {
                v.extend_from_slice(&a.value[i * a.cols..(i + 1) * a.cols]);
            }
            (idx.len(), a.cols, v)
        };
        Ok(self.tape.push(r, c, v, Op::SelectRows(self.id, idx.to_vec())))
    }

    /// Diagonal of a square matrix as an `n x 1` column.
    pub fn diag(self) -> Result<Var<'t>> {
        let (r, v) = {
            let a = self.node();
            if a.rows != a.cols {
                return Err(JanusError::mismatch("diag", "square", format!("{}x{}", a.rows, a.cols)));
            }
            (a.rows, (0..a.rows).map(|i| a.value[i * a.cols + i]).collect())
        };
        Ok(self.tape.push(r, 1, v, Op::Diag(self.id)))
    }

    pub fn sum(self) -> Var<'t> {
        self.unary(|n| (1, 1, vec![n.value.iter().sum()]), Op::Sum(self.id))
    }

    /// Per-row sums as an `n x 1` column.
    pub fn row_sum(self) -> Var<'t> {
        self.unary(
            |n| {
                let v = (0..n.rows)
                    .map(|i| n.value[i * n.cols..(i + 1) * n.cols].iter().sum())
                    .collect();
                (n.rows, 1, v)
            },
            Op::RowSum(self.id),
        )
    }

    /// Per-row squared errors of `sigmoid(self self^T)` against the square
    /// matrix `target`, as an `n x 1` column.
    pub fn gram_sigmoid_sq_err(self, target: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&target);
        let (n, v, sig) = {
            let (h, a) = (self.node(), target.node());
            let n = h.rows;
            if (a.rows, a.cols) != (n, n) {
                return Err(shape_err("gram_sigmoid_sq_err", &h, &a));
            }
            let k = h.cols;
            let mut sig = vec![0.0; n * n];
            for i in 0..n {
                let hi = &h.value[i * k..(i + 1) * k];
                for j in i..n {
                    let s = sigmoid(dot(hi, &h.value[j * k..(j + 1) * k]));
                    sig[i * n + j] = s;
                    sig[j * n + i] = s;
                }
            }
            let v = (0..n)
                .map(|i| {
                    sig[i * n..(i + 1) * n]
                        .iter()
                        .zip(&a.value[i * n..(i + 1) * n])
                        .map(|(s, t)| (s - t) * (s - t))
                        .sum()
                })
                .collect();
            (n, v, sig)
        };
        Ok(self.tape.push(n, 1, v, Op::GramSigmoidSqErr(self.id, target.id, sig)))
    }

    /// Per-row Euclidean norms as an `n x 1` column; subgradient 0 at 0.
    pub fn row_norm(self) -> Var<'t> {
        self.unary(
            |n| {
                let v = (0..n.rows)
                    .map(|i| norm(&n.value[i * n.cols..(i + 1) * n.cols]))
                    .collect();
                (n.rows, 1, v)
            },
            Op::RowNorm(self.id),
        )
    }

    /// Per-row `log(sum_j exp(x_ij))`, optionally skipping `j == i`
    /// (which requires a square input).
    pub fn logsumexp_rows(self, exclude_diag: bool) -> Result<Var<'t>> {
        let (r, v) = {
            let a = self.node();
            if exclude_diag && a.rows != a.cols {
                return Err(JanusError::mismatch(
                    "logsumexp_rows",
                    "square",
                    format!("{}x{}", a.rows, a.cols),
                ));
            }
            let v = (0..a.rows)
                .map(|i| {
                    let row = &a.value[i * a.cols..(i + 1) * a.cols];
                    let keep = |j: &usize| !(exclude_diag && *j == i);
                    let mx = (0..a.cols)
                        .filter(keep)
                        .map(|j| row[j])
                        .fold(f64::NEG_INFINITY, f64::max);
                    if mx == f64::NEG_INFINITY {
                        return f64::NEG_INFINITY;
                    }
                    let s: f64 = (0..a.cols).filter(keep).map(|j| (row[j] - mx).exp()).sum();
                    mx + s.ln()
                })
                .collect();
            (a.rows, v)
        };
        Ok(self.tape.push(
            r,
            1,
            v,
            Op::LogSumExpRows {
                a: self.id,
                exclude_diag,
            },
        ))
    }

    /// `D_ij = ||self_i - other_j||`.
    pub fn pairwise_dist(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let (r, c, v) = {
            let (a, b) = (self.node(), other.node());
            if a.cols != b.cols {
                return Err(shape_err("pairwise_dist", &a, &b));
            }
            let k = a.cols;
            let mut v = Vec::with_capacity(a.rows * b.rows);
            for i in 0..a.rows {
                let x = &a.value[i * k..(i + 1) * k];
                for j in 0..b.rows {
                    let y = &b.value[j * k..(j + 1) * k];
                    v.push(sq_dist(x, y).sqrt());
                }
            }
            (a.rows, b.rows, v)
        };
        Ok(self.tape.push(r, c, v, Op::PairwiseDist(self.id, other.id)))
    }

    /// Geodesic distances between every row of `self` and every row of
    /// `other`, both holding hyperboloid points in ambient coordinates.
    pub fn pairwise_geodesic(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let (r, c, v, t) = {
            let (a, b) = (self.node(), other.node());
            if a.cols != b.cols || a.cols < 2 {
                return Err(shape_err("pairwise_geodesic", &a, &b));
            }
            let k = a.cols;
            let mut v = Vec::with_capacity(a.rows * b.rows);
            let mut t = Vec::with_capacity(a.rows * b.rows);
            for i in 0..a.rows {
                let x = &a.value[i * k..(i + 1) * k];
                for j in 0..b.rows {
                    let (d, tt) = geodesic_raw(x, &b.value[j * k..(j + 1) * k]);
                    v.push(d);
                    t.push(tt);
                }
            }
            (a.rows, b.rows, v, t)
        };
        Ok(self.tape.push(r, c, v, Op::PairwiseGeodesic(self.id, other.id, t)))
    }

    /// Row-wise geodesic distances as an `n x 1` column.
    pub fn row_geodesic(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let (r, v, t) = {
            let (a, b) = (self.node(), other.node());
            if (a.rows, a.cols) != (b.rows, b.cols) || a.cols < 2 {
                return Err(shape_err("row_geodesic", &a, &b));
            }
            let k = a.cols;
            let (v, t): (Vec<f64>, Vec<f64>) = (0..a.rows)
                .map(|i| geodesic_raw(&a.value[i * k..(i + 1) * k], &b.value[i * k..(i + 1) * k]))
                .unzip();
            (a.rows, v, t)
        };
        Ok(self.tape.push(r, 1, v, Op::RowGeodesic(self.id, other.id, t)))
    }

    /// Row-wise exponential map at the origin: `n x k` tangent rows to
    /// `n x (k+1)` hyperboloid points.
    pub fn exp_origin_rows(self) -> Var<'t> {
        self.unary(
            |n| {
                let k = n.cols;
                let mut v = vec![0.0; n.rows * (k + 1)];
                for i in 0..n.rows {
                    exp_origin_into(&n.value[i * k..(i + 1) * k], &mut v[i * (k + 1)..(i + 1) * (k + 1)]);
                }
                (n.rows, k + 1, v)
            },
            Op::ExpOrigin(self.id),
        )
    }

    /// Row-wise logarithmic map at the origin: `n x (k+1)` points to
    /// `n x k` tangent rows.
    pub fn log_origin_rows(self) -> Result<Var<'t>> {
        let (r, c, v) = {
            let a = self.node();
            if a.cols < 2 {
                return Err(JanusError::mismatch("log_origin_rows", "at least 2 columns", a.cols));
            }
            let k = a.cols - 1;
            let mut v = vec![0.0; a.rows * k];
            for i in 0..a.rows {
                log_origin_into(&a.value[i * a.cols..(i + 1) * a.cols], &mut v[i * k..(i + 1) * k]);
            }
            (a.rows, k, v)
        };
        Ok(self.tape.push(r, c, v, Op::LogOrigin(self.id)))
    }
}

fn shape_err(context: &'static str, a: &Node, b: &Node) -> JanusError {
    JanusError::mismatch(
        context,
        format!("{}x{}", a.rows, a.cols),
        format!("{}x{}", b.rows, b.cols),
    )
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
