//! Training loop, scoring and multi-seed evaluation.
//!
//! Graphs up to [`FULL_BATCH_MAX_NODES`] nodes train full-batch with all
//! `O(n^2)` contrastive negatives. Larger graphs train on sampled
//! neighborhoods of seed batches: the towers run on the induced subgraph of
//! the sampled nodes and every loss term is restricted to the seeds.
//! Scoring always runs one full-graph forward pass with `lambda1 = 0`.

mod adam;
mod checkpoint;
mod config;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, read_f64_le, save_checkpoint, write_f64_le, Checkpoint};
pub use config::{TrainConfig, DEFAULT_BATCH_SIZE, DEFAULT_FANOUTS, FULL_BATCH_MAX_NODES};

use std::rc::Rc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{JanusError, Result};
use crate::eval::{evaluate, mean_std, RankedEval};
use crate::graph::{build_views, default_max_deg, sample_neighborhood, Graph, NodeViews};
use crate::loss::{anomaly_scores, contrastive_per_node_streaming, node_feature_loss, objective, LossBreakdown};
use crate::model::JanusModel;
use crate::tensor::Tape;

/// Scalar loss parts of one epoch (minibatch epochs average over batches).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub cl: f64,
    pub adj: f64,
    pub node: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// One entry per completed epoch, evaluated before that epoch's update.
    pub history: Vec<EpochLoss>,
    /// Index into `history` whose parameters were kept.
    pub best_epoch: usize,
    pub wall_seconds: f64,
}

/// Output of [`train`].
#[derive(Debug, Clone)]
pub struct Trained {
    pub checkpoint: Checkpoint,
    pub report: TrainReport,
}

/// Views for `g` under `cfg` (resolving the automatic degree cap).
pub fn prepare_views(g: &Graph, cfg: &TrainConfig) -> Result<NodeViews> {
    let max_deg = cfg.max_deg.unwrap_or_else(|| default_max_deg(g));
    build_views(g, cfg.d_rw, max_deg)
}

pub fn train(g: &Graph, cfg: &TrainConfig) -> Result<Trained> {
    let views = prepare_views(g, cfg)?;
    train_on_views(g, &views, cfg)
}

/// Trains from `cfg.seed`, keeping the parameters with the lowest total loss.
pub fn train_on_views(g: &Graph, views: &NodeViews, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    let n = g.num_nodes();
    if views.num_nodes() != n {
        return Err(JanusError::mismatch("views vs graph", n, views.num_nodes()));
    }
    if n < 2 {
        return Err(JanusError::InvalidInput("training needs at least 2 nodes".into()));
    }
    let start = Instant::now();
    let mut model = JanusModel::init(cfg.encoder(), views.xs.cols(), views.xg.cols(), cfg.seed)?;
    let mut adam = Adam::new(cfg.lr, model.params());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::INFINITY, 0usize, model.params().to_vec());

    let batching = cfg.batching(n);
    let full_op = match batching {
        None => Some(model.operator(g, None)),
        Some(_) => None,
    };
    let full_adj = match batching {
        None if needs_adjacency(cfg) => Some(g.dense_adjacency()),
        _ => None,
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_ba7c4);

    for epoch in 0..cfg.epochs {
        let epoch_loss = match &batching {
            None => {
                let op = full_op.as_ref().expect("full-batch operator");
                step(&mut model, &mut adam, views, op, full_adj.as_ref(), None, cfg, epoch, &mut best)?
            }
            Some((batch, fanouts)) => {
                order.shuffle(&mut shuffle_rng);
                let batches = split_batches(&order, *batch);
                let mut acc = EpochLoss { cl: 0.0, adj: 0.0, node: 0.0, total: 0.0 };
                // Snapshot candidates only make sense for whole epochs.
                let mut unused = (f64::NEG_INFINITY, 0, Vec::new());
                let snapshot = model.params().to_vec();
                for (b, seeds) in batches.iter().enumerate() {
                    let rng_seed = cfg
                        .seed
                        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                        .wrapping_add(((epoch as u64) << 32) | b as u64);
                    let nb = sample_neighborhood(g, seeds, fanouts, rng_seed)?;
                    let op = match cfg.backbone {
                        crate::model::Backbone::NormConv => Rc::new(nb.sampled_adjacency.clone()),
                        crate::model::Backbone::Gin => model.operator(g, Some(&nb.nodes)),
                    };
                    let sub_views = views.select(&nb.nodes);
                    let adj = needs_adjacency(cfg).then(|| g.dense_adjacency_among(&nb.seed_nodes));
                    let seed_rows: Vec<usize> = (0..nb.seed_nodes.len()).collect();
                    let l = step(
                        &mut model,
                        &mut adam,
                        &sub_views,
                        &op,
                        adj.as_ref(),
                        Some(&seed_rows),
                        cfg,
                        epoch,
                        &mut unused,
                    )?;
                    acc.cl += l.cl;
                    acc.adj += l.adj;
                    acc.node += l.node;
                    acc.total += l.total;
                }
                let k = batches.len() as f64;
                let mean = EpochLoss {
                    cl: acc.cl / k,
                    adj: acc.adj / k,
                    node: acc.node / k,
                    total: acc.total / k,
                };
                if mean.total < best.0 {
                    best = (mean.total, epoch, snapshot);
                }
                mean
            }
        };
        history.push(epoch_loss);
    }

    let (_, best_epoch, params) = best;
    let model = JanusModel::from_params(cfg.encoder(), views.xs.cols(), views.xg.cols(), params)?;
    Ok(Trained {
        checkpoint: Checkpoint {
            model,
            config: cfg.clone(),
            d_rw: views.d_rw,
            max_deg: views.max_deg,
        },
        report: TrainReport {
            history,
            best_epoch,
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    })
}

fn needs_adjacency(cfg: &TrainConfig) -> bool {
    cfg.lambda1 > 0.0 && cfg.variant.uses_reconstruction()
}

/// Consecutive chunks of `order`; a trailing singleton joins the previous
/// chunk so that every batch has a contrastive negative.
fn split_batches(order: &[usize], batch: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = order.chunks(batch).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < 2) {
        let last = out.pop().expect("non-empty");
        out.last_mut().expect("previous batch").extend(last);
    }
    out
}

/// One forward/backward/update. `best` receives a parameter snapshot when
/// the loss improves.
#[allow(clippy::too_many_arguments)]
fn step(
    model: &mut JanusModel,
    adam: &mut Adam,
    views: &NodeViews,
    op: &Rc<crate::graph::SparseOperator>,
    adjacency: Option<&crate::matrix::Matrix>,
    rows: Option<&[usize]>,
    cfg: &TrainConfig,
    epoch: usize,
    best: &mut (f64, usize, Vec<crate::tensor::Tensor>),
) -> Result<EpochLoss> {
    let tape = Tape::new();
    let vars = model.bind(&tape);
    let fwd = model.forward(&tape, &vars, views, op, cfg.variant.uses_reconstruction())?;
    let fwd = match rows {
        Some(r) => fwd.select_rows(r)?,
        None => fwd,
    };
    let a = adjacency.map(|m| tape.constant(m));
    let lv = objective(&fwd, a, &cfg.weights(), cfg.variant)?;
    let part = |t: Option<(crate::tensor::Var<'_>, crate::tensor::Var<'_>)>| t.map_or(0.0, |v| v.0.item());
    let loss = EpochLoss {
        cl: part(lv.cl),
        adj: part(lv.adj),
        node: part(lv.node),
        total: lv.total.item(),
    };
    if !loss.total.is_finite() {
        return Err(JanusError::Divergence {
            epoch,
            detail: format!(
                "non-finite loss (cl = {}, adj = {}, node = {})",
                loss.cl, loss.adj, loss.node
            ),
        });
    }
    if loss.total < best.0 {
        *best = (loss.total, epoch, model.params().to_vec());
    }
    let grads = tape.backward(lv.total)?;
    for (v, p) in vars.iter().zip(model.params_mut()) {
        p.zero_grad();
        grads.accumulate_into(*v, p)?;
    }
    adam.step(model.params_mut())?;
    if model.params().iter().any(|p| p.data().iter().any(|x| !x.is_finite())) {
        return Err(JanusError::Divergence {
            epoch,
            detail: "non-finite parameter after update".into(),
        });
    }
    Ok(loss)
}

/// Per-node scores from one full-graph forward pass with `lambda1 = 0`.
pub fn score(g: &Graph, views: &NodeViews, ck: &Checkpoint) -> Result<Vec<f64>> {
    Ok(score_breakdown(g, views, ck)?.1)
}

/// Scores together with the per-node loss parts they were built from.
pub fn score_breakdown(
    g: &Graph,
    views: &NodeViews,
    ck: &Checkpoint,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let model = &ck.model;
    let n = g.num_nodes();
    if views.num_nodes() != n {
        return Err(JanusError::mismatch("views vs graph", n, views.num_nodes()));
    }
    if views.xs.cols() != model.xs_dim() || views.xg.cols() != model.xg_dim() {
        return Err(JanusError::mismatch(
            "view widths (xs, xg)",
            format!("({}, {})", model.xs_dim(), model.xg_dim()),
            format!("({}, {})", views.xs.cols(), views.xg.cols()),
        ));
    }
    let cfg = &ck.config;
    let mut w = cfg.weights();
    w.lambda1 = 0.0;

    let tape = Tape::new();
    let vars = model.bind(&tape);
    let op = model.operator(g, None);
    let fwd = model.forward(&tape, &vars, views, &op, cfg.variant.uses_reconstruction())?;

    let per_node_cl = if cfg.variant.uses_contrastive() {
        contrastive_per_node_streaming(
            &fwd.hs.value(),
            &fwd.hg.value(),
            &fwd.hhs.value(),
            &fwd.hhg.value(),
            w.tau,
        )?
    } else {
        vec![0.0; n]
    };
    let (node, per_node_node) = if cfg.variant.uses_reconstruction() {
        let (node, per) = node_feature_loss(&fwd)?;
        (node.item(), per.data())
    } else {
        (0.0, vec![0.0; n])
    };
    let cl: f64 = per_node_cl.iter().sum();
    let b = LossBreakdown {
        cl,
        adj: 0.0,
        node,
        total: cl + w.lambda2 * node,
        per_node_cl,
        per_node_adj: vec![0.0; n],
        per_node_node,
    };
    let scores = anomaly_scores(&b, &w);
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(JanusError::NonFinite("anomaly scores"));
    }
    Ok((b, scores))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub scores: Vec<f64>,
    pub eval: RankedEval,
    pub best_epoch: usize,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedSummary {
    pub runs: Vec<SeedResult>,
    pub roc_auc_mean: f64,
    pub roc_auc_std: f64,
    pub ap_mean: f64,
    pub ap_std: f64,
    pub cg_area_mean: f64,
    pub cg_area_std: f64,
}

/// Trains and evaluates once per seed, sequentially and in the given order.
pub fn run_seeds(g: &Graph, cfg: &TrainConfig, seeds: &[u64]) -> Result<SeedSummary> {
    if seeds.is_empty() {
        return Err(JanusError::config("seeds", "need at least one seed"));
    }
    let labels = g
        .labels()
        .ok_or_else(|| JanusError::DegenerateLabels("graph has no labels".into()))?
        .to_vec();
    let views = prepare_views(g, cfg)?;
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let c = TrainConfig { seed, ..cfg.clone() };
        let trained = train_on_views(g, &views, &c)?;
        let scores = score(g, &views, &trained.checkpoint)?;
        let eval = evaluate(&scores, &labels)?;
        let report = &trained.report;
        runs.push(SeedResult {
            seed,
            scores,
            eval,
            best_epoch: report.best_epoch,
            final_loss: report.history[report.best_epoch].total,
        });
    }
    let stat = |f: fn(&SeedResult) -> f64| mean_std(&runs.iter().map(f).collect::<Vec<_>>());
    let (roc_auc_mean, roc_auc_std) = stat(|r| r.eval.roc_auc);
    let (ap_mean, ap_std) = stat(|r| r.eval.ap);
    let (cg_area_mean, cg_area_std) = stat(|r| r.eval.cg_area);
    Ok(SeedSummary {
        runs,
        roc_auc_mean,
        roc_auc_std,
        ap_mean,
        ap_std,
        cg_area_mean,
        cg_area_std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{inject_anomalies, BaseModel, InjectionSpec};
    use crate::hypgeom::HPoint;
    use crate::matrix::Matrix;

    fn small_spec(seed: u64) -> InjectionSpec {
        InjectionSpec {
            n: 30,
            base_model: BaseModel::ErdosRenyi { p: 0.15 },
            feature_dim: 4,
            contextual_count: 2,
            structural_count: 3,
            clique_size: 3,
            outlier_scale: 6.0,
            seed,
        }
    }

    fn quick(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            layers: 2,
            hidden: 8,
            d_rw: 4,
            lr: 0.01,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_lr_keeps_parameters_and_loss() {
        let g = inject_anomalies(&small_spec(1)).unwrap();
        let cfg = TrainConfig { lr: 0.0, ..quick(5) };
        let t = train(&g, &cfg).unwrap();
        let init = JanusModel::init(cfg.encoder(), 4, t.checkpoint.model.xg_dim(), cfg.seed).unwrap();
        assert_eq!(t.checkpoint.model, init);
        let h = &t.report.history;
        assert!(h.iter().all(|e| e.total == h[0].total));
    }

    #[test]
    fn training_is_deterministic() {
        let g = inject_anomalies(&small_spec(2)).unwrap();
        let a = train(&g, &quick(8)).unwrap();
        let b = train(&g, &quick(8)).unwrap();
        assert_eq!(a.report.history, b.report.history);
        assert_eq!(a.checkpoint, b.checkpoint);
    }

    #[test]
    fn loss_drops_by_a_fifth_on_fixture() {
        let g = inject_anomalies(&InjectionSpec::synth_30()).unwrap();
        let cfg = TrainConfig { epochs: 200, ..TrainConfig::default() };
        let t = train(&g, &cfg).unwrap();
        let h = &t.report.history;
        assert_eq!(h.len(), 200);
        let best = h[t.report.best_epoch].total;
        assert!(best <= 0.8 * h[0].total, "first {} best {}", h[0].total, best);
    }

    #[test]
    fn embeddings_stay_on_manifold() {
        let g = inject_anomalies(&small_spec(4)).unwrap();
        let t = train(&g, &quick(20)).unwrap();
        let views = prepare_views(&g, &quick(20)).unwrap();
        let m = &t.checkpoint.model;
        let tape = Tape::new();
        let vars = m.bind(&tape);
        let fwd = m.forward(&tape, &vars, &views, &m.operator(&g, None), true).unwrap();
        for pts in [fwd.hhs, fwd.hhg, fwd.recon.unwrap().rec_hs] {
            let v = pts.value();
            for i in 0..v.rows() {
                let p = HPoint::new(v.row(i).to_vec()).unwrap();
                assert!(p.manifold_deviation() < 1e-8);
            }
        }
    }

    #[test]
    fn zero_weights_score_a_cycle_uniformly() {
        let n = 12;
        let g = Graph::new(
            Matrix::from_vec(n, 2, vec![0.5; 2 * n]).unwrap(),
            (0..n).map(|i| (i, (i + 1) % n)),
            None,
        )
        .unwrap();
        let cfg = quick(1);
        let views = prepare_views(&g, &cfg).unwrap();
        let ck = Checkpoint {
            model: JanusModel::zeros(cfg.encoder(), 2, views.xg.cols()).unwrap(),
            config: cfg.clone(),
            d_rw: views.d_rw,
            max_deg: views.max_deg,
        };
        let s = score(&g, &views, &ck).unwrap();
        assert_eq!(s.len(), n);
        assert!(s.iter().all(|v| (v - s[0]).abs() < 1e-9));
    }

    #[test]
    fn scoring_matches_tape_loss_parts() {
        let g = inject_anomalies(&small_spec(5)).unwrap();
        let cfg = quick(3);
        let t = train(&g, &cfg).unwrap();
        let views = prepare_views(&g, &cfg).unwrap();
        let (b, s) = score_breakdown(&g, &views, &t.checkpoint).unwrap();

        let m = &t.checkpoint.model;
        let tape = Tape::new();
        let vars = m.bind(&tape);
        let fwd = m.forward(&tape, &vars, &views, &m.operator(&g, None), true).unwrap();
        let mut w = cfg.weights();
        w.lambda1 = 0.0;
        let lv = objective(&fwd, None, &w, cfg.variant).unwrap();
        let tb = lv.breakdown(g.num_nodes());
        assert!((tb.cl - b.cl).abs() < 1e-12);
        assert!((tb.total - b.total).abs() < 1e-12);
        let direct = anomaly_scores(&tb, &w);
        for (x, y) in direct.iter().zip(&s) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((tb.per_node_cl.iter().sum::<f64>() - tb.cl).abs() < 1e-9);
    }

    #[test]
    fn minibatch_training_runs_and_is_deterministic() {
        let g = inject_anomalies(&small_spec(6)).unwrap();
        let cfg = TrainConfig {
            batch_size: Some(8),
            fanouts: Some(vec![3, 2]),
            ..quick(4)
        };
        let a = train(&g, &cfg).unwrap();
        let b = train(&g, &cfg).unwrap();
        assert_eq!(a.checkpoint, b.checkpoint);
        assert_eq!(a.report.history.len(), 4);
        assert!(a.report.history.iter().all(|e| e.total.is_finite()));
    }

    #[test]
    fn variants_train_and_score() {
        let g = inject_anomalies(&small_spec(7)).unwrap();
        for v in [crate::loss::Variant::ClOnly, crate::loss::Variant::AeOnly] {
            let cfg = TrainConfig { variant: v, ..quick(3) };
            let t = train(&g, &cfg).unwrap();
            let views = prepare_views(&g, &cfg).unwrap();
            let s = score(&g, &views, &t.checkpoint).unwrap();
            assert_eq!(s.len(), 30);
            assert!(s.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn gin_backbone_trains() {
        let g = inject_anomalies(&small_spec(8)).unwrap();
        let cfg = TrainConfig {
            backbone: crate::model::Backbone::Gin,
            layers: 1,
            ..quick(3)
        };
        train(&g, &cfg).unwrap();
    }

    #[test]
    fn run_seeds_statistics() {
        let g = inject_anomalies(&small_spec(9)).unwrap();
        let one = run_seeds(&g, &quick(3), &[4]).unwrap();
        assert_eq!(one.roc_auc_std, 0.0);
        let same = run_seeds(&g, &quick(3), &[4, 4, 4]).unwrap();
        assert_eq!(same.roc_auc_std, 0.0);
        assert_eq!(same.ap_std, 0.0);
        assert!(run_seeds(&g, &quick(3), &[]).is_err());
    }

    #[test]
    fn huge_steps_diverge_with_diagnostic() {
        let g = inject_anomalies(&small_spec(10)).unwrap();
        let cfg = TrainConfig { lr: 1e200, ..quick(10) };
        match train(&g, &cfg) {
            Err(JanusError::Divergence { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn split_batches_never_leaves_singletons() {
        let order: Vec<usize> = (0..9).collect();
        let b = split_batches(&order, 4);
        assert_eq!(b.len(), 2);
        assert_eq!(b[1].len(), 5);
    }
}
