//! Euclidean and hyperbolic graph autoencoders.
//!
//! The model owns eight independent towers: an encoder and a decoder for
//! each of the two geometries and each of the two views. Every tower applies
//! `H <- relu(S H W)` per layer, with `S` the propagation operator, and leaves
//! its final layer linear. Hyperbolic towers run the same recurrence on
//! tangent coordinates at the origin and map results onto the hyperboloid.

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{JanusError, Result};
use crate::graph::{
    induced_gin_aggregator, induced_normalized_adjacency, Graph, NodeViews, SparseOperator,
};
use crate::hypgeom::exp_origin_into;
use crate::matrix::Matrix;
use crate::tensor::{Tape, Tensor, Var};

/// Message-passing rule used by every tower.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backbone {
    /// `D^{-1/2} (A + I) D^{-1/2} H W`
    NormConv,
    /// `MLP((1 + eps) H + A H)` with a two-layer ReLU MLP.
    Gin,
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backbone::NormConv => "norm_conv",
            Backbone::Gin => "gin",
        })
    }
}

impl FromStr for Backbone {
    type Err = JanusError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "norm_conv" => Ok(Backbone::NormConv),
            "gin" => Ok(Backbone::Gin),
            other => Err(JanusError::config(
                "backbone",
                format!("expected `norm_conv` or `gin`, got `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub layers: usize,
    pub hidden: usize,
    pub backbone: Backbone,
    /// Self-weight offset of the GIN aggregator.
    pub gin_eps: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            layers: 3,
            hidden: 32,
            backbone: Backbone::NormConv,
            gin_eps: 0.0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(JanusError::config("layers", "must be >= 1"));
        }
        if self.hidden == 0 {
            return Err(JanusError::config("hidden", "must be >= 1"));
        }
        if !self.gin_eps.is_finite() {
            return Err(JanusError::config("gin_eps", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TowerKind {
    EncEucS,
    EncEucG,
    EncHypS,
    EncHypG,
    DecEucS,
    DecEucG,
    DecHypS,
    DecHypG,
}

impl TowerKind {
    pub const ALL: [TowerKind; 8] = [
        TowerKind::EncEucS,
        TowerKind::EncEucG,
        TowerKind::EncHypS,
        TowerKind::EncHypG,
        TowerKind::DecEucS,
        TowerKind::DecEucG,
        TowerKind::DecHypS,
        TowerKind::DecHypG,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TowerKind::EncEucS => "enc_euc_s",
            TowerKind::EncEucG => "enc_euc_g",
            TowerKind::EncHypS => "enc_hyp_s",
            TowerKind::EncHypG => "enc_hyp_g",
            TowerKind::DecEucS => "dec_euc_s",
            TowerKind::DecEucG => "dec_euc_g",
            TowerKind::DecHypS => "dec_hyp_s",
            TowerKind::DecHypG => "dec_hyp_g",
        }
    }

    pub fn is_hyperbolic(self) -> bool {
        matches!(
            self,
            TowerKind::EncHypS | TowerKind::EncHypG | TowerKind::DecHypS | TowerKind::DecHypG
        )
    }

    pub fn is_encoder(self) -> bool {
        matches!(
            self,
            TowerKind::EncEucS | TowerKind::EncEucG | TowerKind::EncHypS | TowerKind::EncHypG
        )
    }

    fn is_s_view(self) -> bool {
        matches!(
            self,
            TowerKind::EncEucS | TowerKind::EncHypS | TowerKind::DecEucS | TowerKind::DecHypS
        )
    }
}

/// Layer widths and parameter slots of one tower.
#[derive(Debug, Clone, PartialEq)]
pub struct Tower {
    pub kind: TowerKind,
    /// `widths[l] -> widths[l + 1]` is layer `l`.
    pub widths: Vec<usize>,
    first_param: usize,
    params_per_layer: usize,
}

impl Tower {
    fn param_range(&self) -> std::ops::Range<usize> {
        self.first_param..self.first_param + self.params_per_layer * (self.widths.len() - 1)
    }
}

/// All trainable state plus the shapes needed to rebuild it.
#[derive(Debug, Clone, PartialEq)]
pub struct JanusModel {
    config: EncoderConfig,
    xs_dim: usize,
    xg_dim: usize,
    towers: Vec<Tower>,
    names: Vec<String>,
    params: Vec<Tensor>,
}

impl JanusModel {
    /// Glorot-uniform initialization from `seed`.
    pub fn init(config: EncoderConfig, xs_dim: usize, xg_dim: usize, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(config, xs_dim, xg_dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in &mut model.params {
            let (fan_in, fan_out) = (p.rows(), p.cols());
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-a, a)
                .map_err(|e| JanusError::InvalidInput(format!("init range: {e}")))?;
            p.data_mut().iter_mut().for_each(|w| *w = dist.sample(&mut rng));
        }
        Ok(model)
    }

    /// All weights zero.
    pub fn zeros(config: EncoderConfig, xs_dim: usize, xg_dim: usize) -> Result<Self> {
        config.validate()?;
        if xs_dim == 0 || xg_dim == 0 {
            return Err(JanusError::InvalidInput("view widths must be positive".into()));
        }
        let per_layer = match config.backbone {
            Backbone::NormConv => 1,
            Backbone::Gin => 2,
        };
        let mut towers = Vec::with_capacity(8);
        let mut names = Vec::new();
        let mut params = Vec::new();
        for kind in TowerKind::ALL {
            let view = if kind.is_s_view() { xs_dim } else { xg_dim };
            let k = config.hidden;
            let mut widths = vec![k; config.layers + 1];
            if kind.is_encoder() {
                widths[0] = view;
            } else {
                widths[config.layers] = view;
            }
            let tower = Tower {
                kind,
                widths: widths.clone(),
                first_param: params.len(),
                params_per_layer: per_layer,
            };
            for l in 0..config.layers {
                let (i, o) = (widths[l], widths[l + 1]);
                match config.backbone {
                    Backbone::NormConv => {
                        names.push(format!("{}.{l}.w", kind.name()));
                        params.push(Tensor::zeros(i, o).requiring_grad());
                    }
                    Backbone::Gin => {
                        names.push(format!("{}.{l}.w1", kind.name()));
                        params.push(Tensor::zeros(i, o).requiring_grad());
                        names.push(format!("{}.{l}.w2", kind.name()));
                        params.push(Tensor::zeros(o, o).requiring_grad());
                    }
                }
            }
            towers.push(tower);
        }
        Ok(JanusModel {
            config,
            xs_dim,
            xg_dim,
            towers,
            names,
            params,
        })
    }

    /// Rebuilds a model from stored tensors, checking every shape.
    pub fn from_params(
        config: EncoderConfig,
        xs_dim: usize,
        xg_dim: usize,
        params: Vec<Tensor>,
    ) -> Result<Self> {
        let mut model = Self::zeros(config, xs_dim, xg_dim)?;
        if params.len() != model.params.len() {
            return Err(JanusError::mismatch(
                "parameter count",
                model.params.len(),
                params.len(),
            ));
        }
        for (i, (slot, p)) in model.params.iter_mut().zip(params).enumerate() {
            if slot.shape() != p.shape() {
                return Err(JanusError::DimensionMismatch {
                    context: "parameter shape",
                    expected: format!("{} {:?}", model.names[i], slot.shape()),
                    found: format!("{:?}", p.shape()),
                });
            }
            slot.data_mut().copy_from_slice(p.data());
        }
        Ok(model)
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn xs_dim(&self) -> usize {
        self.xs_dim
    }

    pub fn xg_dim(&self) -> usize {
        self.xg_dim
    }

    pub fn towers(&self) -> &[Tower] {
        &self.towers
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn num_weights(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Indices into [`JanusModel::params`] owned by `kind`.
    pub fn tower_params(&self, kind: TowerKind) -> std::ops::Range<usize> {
        self.tower(kind).param_range()
    }

    fn tower(&self, kind: TowerKind) -> &Tower {
        self.towers
            .iter()
            .find(|t| t.kind == kind)
            .expect("every tower kind is built")
    }

    /// Records every parameter on `tape`, in storage order.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.params.iter().map(|p| tape.param(p)).collect()
    }

    /// Propagation operator over the subgraph induced by `nodes` (all nodes
    /// when `None`), in that node order.
    pub fn operator(&self, g: &Graph, nodes: Option<&[usize]>) -> Rc<SparseOperator> {
        let all: Vec<usize>;
        let nodes = match nodes {
            Some(n) => n,
            None => {
                all = (0..g.num_nodes()).collect();
                &all
            }
        };
        Rc::new(match self.config.backbone {
            Backbone::NormConv => induced_normalized_adjacency(g, nodes),
            Backbone::Gin => induced_gin_aggregator(g, nodes, self.config.gin_eps),
        })
    }

    /// Runs one tower on `input`.
    pub fn run_tower<'t>(
        &self,
        kind: TowerKind,
        vars: &[Var<'t>],
        input: Var<'t>,
        op: &Rc<SparseOperator>,
    ) -> Result<Var<'t>> {
        let tower = self.tower(kind);
        if input.cols() != tower.widths[0] {
            return Err(JanusError::mismatch(kind.name(), tower.widths[0], input.cols()));
        }
        let layers = tower.widths.len() - 1;
        let mut h = input;
        for l in 0..layers {
            let base = tower.first_param + l * tower.params_per_layer;
            let agg = h.spmm(op)?;
            h = match self.config.backbone {
                Backbone::NormConv => agg.matmul(vars[base])?,
                Backbone::Gin => agg.matmul(vars[base])?.relu().matmul(vars[base + 1])?,
            };
            if l + 1 < layers {
                h = h.relu();
            }
        }
        Ok(h)
    }

    /// Full forward pass. Decoders are skipped when `decode` is false.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        vars: &[Var<'t>],
        views: &NodeViews,
        op: &Rc<SparseOperator>,
        decode: bool,
    ) -> Result<Forward<'t>> {
        if vars.len() != self.params.len() {
            return Err(JanusError::mismatch("bound parameters", self.params.len(), vars.len()));
        }
        if views.xs.cols() != self.xs_dim {
            return Err(JanusError::mismatch("xs width", self.xs_dim, views.xs.cols()));
        }
        if views.xg.cols() != self.xg_dim {
            return Err(JanusError::mismatch("xg width", self.xg_dim, views.xg.cols()));
        }
        if views.num_nodes() != op.dim() {
            return Err(JanusError::mismatch("operator size", views.num_nodes(), op.dim()));
        }

        let xs = tape.constant(&views.xs);
        let xg = tape.constant(&views.xg);
        let xs_hat = tape.constant(&lift_to_hyperboloid(&views.xs)?);
        let xg_hat = tape.constant(&lift_to_hyperboloid(&views.xg)?);

        let hs = self.run_tower(TowerKind::EncEucS, vars, xs, op)?;
        let hg = self.run_tower(TowerKind::EncEucG, vars, xg, op)?;
        let ths = self.run_tower(TowerKind::EncHypS, vars, xs_hat.log_origin_rows()?, op)?;
        let thg = self.run_tower(TowerKind::EncHypG, vars, xg_hat.log_origin_rows()?, op)?;
        let hhs = ths.exp_origin_rows();
        let hhg = thg.exp_origin_rows();

        let recon = if decode {
            let rec_s = self.run_tower(TowerKind::DecEucS, vars, hs, op)?;
            let rec_g = self.run_tower(TowerKind::DecEucG, vars, hg, op)?;
            let rec_hs = self.run_tower(TowerKind::DecHypS, vars, ths, op)?.exp_origin_rows();
            let rec_hg = self.run_tower(TowerKind::DecHypG, vars, thg, op)?.exp_origin_rows();
            Some(Reconstruction {
                rec_s,
                rec_g,
                rec_hs,
                rec_hg,
            })
        } else {
            None
        };

        Ok(Forward {
            xs,
            xg,
            xs_hat,
            xg_hat,
            hs,
            hg,
            ths,
            thg,
            hhs,
            hhg,
            recon,
        })
    }
}

/// Decoder outputs: Euclidean features and hyperboloid points.
#[derive(Debug, Clone, Copy)]
pub struct Reconstruction<'t> {
    pub rec_s: Var<'t>,
    pub rec_g: Var<'t>,
    pub rec_hs: Var<'t>,
    pub rec_hg: Var<'t>,
}

/// Values produced by [`JanusModel::forward`].
#[derive(Debug, Clone, Copy)]
pub struct Forward<'t> {
    pub xs: Var<'t>,
    pub xg: Var<'t>,
    /// Lifted views on the hyperboloid.
    pub xs_hat: Var<'t>,
    pub xg_hat: Var<'t>,
    pub hs: Var<'t>,
    pub hg: Var<'t>,
    /// Tangent coordinates of the hyperbolic embeddings.
    pub ths: Var<'t>,
    pub thg: Var<'t>,
    /// Hyperbolic embeddings in ambient coordinates.
    pub hhs: Var<'t>,
    pub hhg: Var<'t>,
    pub recon: Option<Reconstruction<'t>>,
}

impl<'t> Forward<'t> {
    /// Restricts every per-node value to the rows `idx`.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Forward<'t>> {
        let sel = |v: Var<'t>| v.select_rows(idx);
        let recon = match self.recon {
            Some(r) => Some(Reconstruction {
                rec_s: sel(r.rec_s)?,
                rec_g: sel(r.rec_g)?,
                rec_hs: sel(r.rec_hs)?,
                rec_hg: sel(r.rec_hg)?,
            }),
            None => None,
        };
        Ok(Forward {
            xs: sel(self.xs)?,
            xg: sel(self.xg)?,
            xs_hat: sel(self.xs_hat)?,
            xg_hat: sel(self.xg_hat)?,
            hs: sel(self.hs)?,
            hg: sel(self.hg)?,
            ths: sel(self.ths)?,
            thg: sel(self.thg)?,
            hhs: sel(self.hhs)?,
            hhg: sel(self.hhg)?,
            recon,
        })
    }

    /// `[sigmoid(Hs Hs^T), sigmoid(Hg Hg^T), sigmoid(Ths Ths^T), sigmoid(Thg Thg^T)]`.
    pub fn adjacency_recons(&self) -> Result<[Var<'t>; 4]> {
        let rec = |h: Var<'t>| -> Result<Var<'t>> { Ok(h.matmul_t(h)?.sigmoid()) };
        Ok([rec(self.hs)?, rec(self.hg)?, rec(self.ths)?, rec(self.thg)?])
    }
}

/// Row-wise `exp_o([0, x])`.
pub fn lift_to_hyperboloid(x: &Matrix) -> Result<Matrix> {
    let (n, d) = x.shape();
    let mut out = Matrix::zeros(n, d + 1);
    for i in 0..n {
        exp_origin_into(x.row(i), out.row_mut(i));
    }
    if !out.is_finite() {
        return Err(JanusError::NonFinite(
            "lifted features (a feature row norm exceeds the hyperboloid's f64 range)",
        ));
    }
    Ok(out)
}

/// `sigmoid(H H^T)` evaluated directly.
pub fn reconstruct_adjacency(h: &Matrix) -> Matrix {
    let n = h.rows();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let s: f64 = h.row(i).iter().zip(h.row(j)).map(|(a, b)| a * b).sum();
            out.set(i, j, 1.0 / (1.0 + (-s).exp()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_views, normalized_adjacency};
    use crate::hypgeom::{HPoint, MANIFOLD_TOL};
    use crate::tensor::gradcheck;
    use rand::Rng;

    fn random_graph(n: usize, p: f64, dim: usize, seed: u64) -> Graph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        let feats: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        Graph::new(Matrix::from_vec(n, dim, feats).unwrap(), edges, None).unwrap()
    }

    /// Dense reference: `D^{-1/2}(A+I)D^{-1/2}` from the adjacency matrix.
    fn dense_norm_adj(g: &Graph) -> Matrix {
        let n = g.num_nodes();
        let mut a = g.dense_adjacency();
        for i in 0..n {
            a.set(i, i, 1.0);
        }
        let d: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum::<f64>()).collect();
        for i in 0..n {
            for j in 0..n {
                a.set(i, j, a.get(i, j) / (d[i] * d[j]).sqrt());
            }
        }
        a
    }

    fn dense_tower(s: &Matrix, x: &Matrix, ws: &[Matrix]) -> Matrix {
        let mut h = x.clone();
        for (l, w) in ws.iter().enumerate() {
            h = s.matmul(&h).unwrap().matmul(w).unwrap();
            if l + 1 < ws.len() {
                h.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        h
    }

    fn cfg(layers: usize, hidden: usize) -> EncoderConfig {
        EncoderConfig {
            layers,
            hidden,
            ..EncoderConfig::default()
        }
    }

    #[test]
    fn single_identity_layer_reproduces_operator() {
        let g = random_graph(5, 0.5, 5, 1);
        let x = Matrix::identity(5);
        let mut model = JanusModel::zeros(cfg(1, 5), 5, 5).unwrap();
        let r = model.tower_params(TowerKind::EncEucS);
        model.params_mut()[r.start] = Tensor::from_matrix(&Matrix::identity(5)).requiring_grad();
        let tape = Tape::new();
        let vars = model.bind(&tape);
        let op = model.operator(&g, None);
        let h = model
            .run_tower(TowerKind::EncEucS, &vars, tape.constant(&x), &op)
            .unwrap();
        assert!(h.value().max_abs_diff(&normalized_adjacency(&g).to_dense()) < 1e-15);
    }

    #[test]
    fn towers_match_dense_recurrence() {
        let g = random_graph(10, 0.3, 4, 2);
        let views = build_views(&g, 3, 3).unwrap();
        let model = JanusModel::init(cfg(3, 6), 4, views.xg.cols(), 9).unwrap();
        let s = dense_norm_adj(&g);
        let tape = Tape::new();
        let vars = model.bind(&tape);
        let op = model.operator(&g, None);
        let fwd = model.forward(&tape, &vars, &views, &op, true).unwrap();

        let weights = |kind| -> Vec<Matrix> {
            model.params()[model.tower_params(kind)]
                .iter()
                .map(Tensor::to_matrix)
                .collect()
        };
        let hs = dense_tower(&s, &views.xs, &weights(TowerKind::EncEucS));
        assert!(fwd.hs.value().max_abs_diff(&hs) < 1e-12);
        let rec_s = dense_tower(&s, &hs, &weights(TowerKind::DecEucS));
        assert!(fwd.recon.unwrap().rec_s.value().max_abs_diff(&rec_s) < 1e-12);
        assert_eq!(rec_s.cols(), 4);
        assert_eq!(fwd.recon.unwrap().rec_g.cols(), views.xg.cols());
        assert_eq!(fwd.recon.unwrap().rec_hg.cols(), views.xg.cols() + 1);

        let thg = dense_tower(&s, &views.xg, &weights(TowerKind::EncHypG));
        assert!(fwd.thg.value().max_abs_diff(&thg) < 1e-10);
    }

    #[test]
    fn zero_weights_give_degenerate_embeddings() {
        let g = random_graph(6, 0.5, 3, 3);
        let views = build_views(&g, 2, 2).unwrap();
        let model = JanusModel::zeros(cfg(2, 4), 3, views.xg.cols()).unwrap();
        let tape = Tape::new();
        let vars = model.bind(&tape);
        let fwd = model
            .forward(&tape, &vars, &views, &model.operator(&g, None), true)
            .unwrap();
        assert!(fwd.hs.data().iter().all(|&v| v == 0.0));
        let origin = HPoint::origin(4);
        for row in fwd.hhs.value().data().chunks(5) {
            assert_eq!(row, origin.coords());
        }
        let rec = fwd.recon.unwrap();
        assert!(rec.rec_s.data().iter().all(|&v| v == 0.0));
        for row in rec.rec_hg.value().data().chunks(views.xg.cols() + 1) {
            assert_eq!(row[0], 1.0);
            assert!(row[1..].iter().all(|&v| v == 0.0));
        }
        for a in fwd.adjacency_recons().unwrap() {
            assert!(a.data().iter().all(|&v| v == 0.5));
        }
    }

    #[test]
    fn identity_hyperbolic_layer_round_trips_lift() {
        let g = random_graph(4, 0.5, 3, 4);
        let mut model = JanusModel::zeros(cfg(1, 3), 3, 3).unwrap();
        let r = model.tower_params(TowerKind::EncHypS);
        model.params_mut()[r.start] = Tensor::from_matrix(&Matrix::identity(3));
        let tape = Tape::new();
        let vars = model.bind(&tape);
        let lifted = lift_to_hyperboloid(g.features()).unwrap();
        let op = Rc::new(SparseOperator::identity(4));
        let t = model
            .run_tower(
                TowerKind::EncHypS,
                &vars,
                tape.constant(&lifted).log_origin_rows().unwrap(),
                &op,
            )
            .unwrap();
        assert!(t.exp_origin_rows().value().max_abs_diff(&lifted) < 1e-12);
    }

    #[test]
    fn lift_examples() {
        let x = Matrix::from_vec(2, 2, vec![0.0, 0.0, 0.6, 0.8]).unwrap();
        let l = lift_to_hyperboloid(&x).unwrap();
        assert_eq!(l.row(0), &[1.0, 0.0, 0.0]);
        assert!((l.get(1, 0) - 1.0f64.cosh()).abs() < 1e-14);
        for i in 0..2 {
            let p = HPoint::new(l.row(i).to_vec()).unwrap();
            assert!(p.manifold_deviation() < MANIFOLD_TOL);
        }
        let huge = Matrix::from_vec(1, 1, vec![800.0]).unwrap();
        assert!(lift_to_hyperboloid(&huge).is_err());
    }

    #[test]
    fn adjacency_reconstruction_closed_forms() {
        let c = 1.5;
        let h = Matrix::from_vec(2, 2, vec![c, 0.0, 0.0, c]).unwrap();
        let a = reconstruct_adjacency(&h);
        let diag = 1.0 / (1.0 + (-c * c).exp());
        assert!((a.get(0, 0) - diag).abs() < 1e-15 && (a.get(1, 1) - diag).abs() < 1e-15);
        assert_eq!(a.get(0, 1), 0.5);
        let r = random_graph(7, 0.0, 3, 5);
        let a = reconstruct_adjacency(r.features());
        assert_eq!(a, a.transpose());
        assert!(a.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn gin_backbone_shapes_and_determinism() {
        let g = random_graph(8, 0.4, 3, 6);
        let views = build_views(&g, 2, 3).unwrap();
        let c = EncoderConfig {
            backbone: Backbone::Gin,
            gin_eps: 0.1,
            ..cfg(2, 5)
        };
        let m1 = JanusModel::init(c, 3, views.xg.cols(), 3).unwrap();
        let m2 = JanusModel::init(c, 3, views.xg.cols(), 3).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(m1.params().len(), 8 * 2 * 2);
        let tape = Tape::new();
        let vars = m1.bind(&tape);
        let fwd = m1.forward(&tape, &vars, &views, &m1.operator(&g, None), true).unwrap();
        assert_eq!(fwd.hs.shape(), (8, 5));
        assert_eq!(fwd.recon.unwrap().rec_s.shape(), (8, 3));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = JanusModel::init(cfg(3, 8), 4, 6, 1).unwrap();
        let b = JanusModel::init(cfg(3, 8), 4, 6, 2).unwrap();
        assert_ne!(a, b);
        for p in a.params() {
            let lim = (6.0 / (p.rows() + p.cols()) as f64).sqrt();
            assert!(p.data().iter().all(|v| v.abs() <= lim));
        }
        let names = a.param_names();
        assert_eq!(names[0], "enc_euc_s.0.w");
        assert_eq!(names.len(), 24);
    }

    #[test]
    fn from_params_checks_shapes() {
        let a = JanusModel::init(cfg(2, 4), 3, 5, 1).unwrap();
        let back = JanusModel::from_params(*a.config(), 3, 5, a.params().to_vec()).unwrap();
        assert_eq!(a, back);
        assert!(JanusModel::from_params(*a.config(), 4, 5, a.params().to_vec()).is_err());
        assert!(JanusModel::from_params(*a.config(), 3, 5, vec![]).is_err());
    }

    #[test]
    fn hyperbolic_tower_passes_gradcheck() {
        let g = random_graph(6, 0.5, 3, 7);
        let views = build_views(&g, 2, 2).unwrap();
        let model = JanusModel::init(cfg(2, 3), 3, views.xg.cols(), 11).unwrap();
        let range = model.tower_params(TowerKind::EncHypS);
        let weights = model.params()[range.clone()].to_vec();
        let op = model.operator(&g, None);
        let lifted = lift_to_hyperboloid(&views.xs).unwrap();
        let report = gradcheck(
            |tape, w| {
                let mut vars = model.bind(tape);
                vars.splice(range.clone(), w.iter().copied());
                let t = model.run_tower(
                    TowerKind::EncHypS,
                    &vars,
                    tape.constant(&lifted).log_origin_rows()?,
                    &op,
                )?;
                let p = t.exp_origin_rows();
                Ok(p.pairwise_geodesic(p)?.sum())
            },
            &weights,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn rejects_mismatched_views() {
        let g = random_graph(5, 0.5, 3, 8);
        let views = build_views(&g, 2, 2).unwrap();
        let model = JanusModel::init(cfg(2, 4), 4, views.xg.cols(), 1).unwrap();
        let tape = Tape::new();
        let vars = model.bind(&tape);
        let err = model
            .forward(&tape, &vars, &views, &model.operator(&g, None), false)
            .unwrap_err();
        assert!(matches!(err, JanusError::DimensionMismatch { .. }));
    }
}
