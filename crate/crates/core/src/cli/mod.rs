//! Command-line front end.
//!
//! Every command writes into a fresh run directory (`--out`, or an
//! auto-named directory under `$JANUS_RUN_ROOT`, default `runs/`) holding
//! its outputs and one `manifest.txt`. Exit codes: 0 success, 1 I/O
//! failure, 2 validation error, 3 training divergence.

mod bundle;
mod run;

pub use bundle::{read_bundle, write_bundle, Bundle};
pub use run::{fresh_run_dir, sha256_file, sha256_hex, KvFile, RunManifest, RUN_ROOT_ENV};

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::error::{JanusError, Result};
use crate::eval::{curve_csv, evaluate, inject_anomalies, mean_std, BaseModel, InjectionSpec, RankedEval};
use crate::graph::{build_views, default_max_deg, read_edge_list, read_features_csv, read_labels, Graph};
use crate::trainer::{
    load_checkpoint, run_seeds, save_checkpoint, score, train_on_views, Checkpoint, TrainConfig,
};

#[derive(Debug, Parser)]
#[command(name = "janus", version, about = "Node anomaly detection with Euclidean and hyperbolic graph autoencoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a dataset bundle from an edge list, a feature CSV and optional labels.
    Prepare(PrepareArgs),
    /// Train a model on a bundle and save a checkpoint.
    Train(TrainArgs),
    /// Score every node of a bundle with a trained checkpoint.
    Score(ScoreArgs),
    /// Compute ROC-AUC, AP and the cumulative gain curve for score files.
    Eval(EvalArgs),
    /// Generate a synthetic bundle with injected anomalies.
    Synth(SynthArgs),
    /// Train, score and evaluate once per seed.
    RunSeeds(RunSeedsArgs),
}

#[derive(Debug, Args)]
struct OutArg {
    /// Output directory; must not exist or be empty.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ViewArgs {
    /// Random-walk feature length.
    #[arg(long, default_value_t = 8)]
    d_rw: usize,
    /// Degree one-hot cap; defaults to the 95th-percentile degree.
    #[arg(long)]
    max_deg: Option<usize>,
}

#[derive(Debug, Args)]
struct PrepareArgs {
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[command(flatten)]
    views: ViewArgs,
    #[command(flatten)]
    out: OutArg,
}

/// Flags mirroring [`TrainConfig`] fields; they override the config file.
#[derive(Debug, Args, Default)]
struct ConfigArgs {
    /// `key = value` file with TrainConfig fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    layers: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    d_rw: Option<String>,
    #[arg(long)]
    max_deg: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    lambda1: Option<String>,
    #[arg(long)]
    lambda2: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    /// Comma-separated per-layer fanouts.
    #[arg(long)]
    fanouts: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// `norm_conv` or `gin`.
    #[arg(long)]
    backbone: Option<String>,
    #[arg(long)]
    gin_eps: Option<String>,
    /// `full`, `cl_only` or `ae_only`.
    #[arg(long)]
    variant: Option<String>,
    /// Restrict values to the published hyperparameter grid.
    #[arg(long)]
    grid_mode: bool,
}

impl ConfigArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let fields: [(&'static str, &Option<String>); 15] = [
            ("lr", &self.lr),
            ("epochs", &self.epochs),
            ("layers", &self.layers),
            ("hidden", &self.hidden),
            ("d_rw", &self.d_rw),
            ("max_deg", &self.max_deg),
            ("tau", &self.tau),
            ("lambda1", &self.lambda1),
            ("lambda2", &self.lambda2),
            ("batch_size", &self.batch_size),
            ("fanouts", &self.fanouts),
            ("seed", &self.seed),
            ("backbone", &self.backbone),
            ("gin_eps", &self.gin_eps),
            ("variant", &self.variant),
        ];
        let mut out: Vec<(&'static str, String)> = fields
            .into_iter()
            .filter_map(|(k, v)| v.clone().map(|v| (k, v)))
            .collect();
        if self.grid_mode {
            out.push(("grid_mode", "true".into()));
        }
        out
    }

    /// Defaults, then the bundle's view parameters, then the file, then
    /// flags. View parameters that disagree with the bundle are rejected.
    fn resolve(&self, bundle: &Bundle) -> Result<TrainConfig> {
        let mut cfg = TrainConfig {
            d_rw: bundle.views.d_rw,
            max_deg: Some(bundle.views.max_deg),
            ..TrainConfig::default()
        };
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| JanusError::io(path, e))?;
            cfg.apply_kv_text(&text, path)?;
        }
        for (k, v) in self.overrides() {
            cfg.set(k, &v)?;
        }
        if cfg.d_rw != bundle.views.d_rw {
            return Err(JanusError::config(
                "d_rw",
                format!("bundle was prepared with d_rw = {}", bundle.views.d_rw),
            ));
        }
        if cfg.max_deg != Some(bundle.views.max_deg) {
            return Err(JanusError::config(
                "max_deg",
                format!("bundle was prepared with max_deg = {}", bundle.views.max_deg),
            ));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    bundle: PathBuf,
    /// Checkpoint directory, or a `train` run directory containing one.
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// One or more score files; several are aggregated as mean and std.
    #[arg(long, required = true, num_args = 1..)]
    scores: Vec<PathBuf>,
    /// Labels file with one 0/1 per line.
    #[arg(long, conflicts_with = "bundle")]
    labels: Option<PathBuf>,
    /// Take labels from this bundle.
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Start from a named fixture (`synth-500` or `synth-30`); other flags override it.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// `er` or `ba`.
    #[arg(long)]
    base: Option<String>,
    /// Edge probability of the `er` base graph.
    #[arg(long)]
    p: Option<f64>,
    /// Attachments per node of the `ba` base graph.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    contextual: Option<usize>,
    #[arg(long)]
    structural: Option<usize>,
    #[arg(long)]
    clique_size: Option<usize>,
    #[arg(long)]
    outlier_scale: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    views: ViewArgs,
    #[command(flatten)]
    out: OutArg,
}

impl SynthArgs {
    fn spec(&self) -> Result<InjectionSpec> {
        let mut spec = match self.preset.as_deref() {
            None | Some("synth-500") => InjectionSpec::synth_500(),
            Some("synth-30") => InjectionSpec::synth_30(),
            Some(other) => {
                return Err(JanusError::config("preset", format!("unknown preset `{other}`")))
            }
        };
        if let Some(v) = self.n {
            spec.n = v;
        }
        spec.base_model = match (self.base.as_deref(), spec.base_model) {
            (None | Some("er"), BaseModel::ErdosRenyi { p }) => {
                BaseModel::ErdosRenyi { p: self.p.unwrap_or(p) }
            }
            (Some("er"), _) => BaseModel::ErdosRenyi { p: self.p.unwrap_or(0.02) },
            (None | Some("ba"), BaseModel::BarabasiAlbert { m }) => {
                BaseModel::BarabasiAlbert { m: self.m.unwrap_or(m) }
            }
            (Some("ba"), _) => BaseModel::BarabasiAlbert { m: self.m.unwrap_or(5) },
            (Some(other), _) => {
                return Err(JanusError::config("base", format!("expected `er` or `ba`, got `{other}`")))
            }
        };
        if let Some(v) = self.feature_dim {
            spec.feature_dim = v;
        }
        if let Some(v) = self.contextual {
            spec.contextual_count = v;
        }
        if let Some(v) = self.structural {
            spec.structural_count = v;
        }
        if let Some(v) = self.clique_size {
            spec.clique_size = v;
        }
        if let Some(v) = self.outlier_scale {
            spec.outlier_scale = v;
        }
        if let Some(v) = self.seed {
            spec.seed = v;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Args)]
struct RunSeedsArgs {
    #[arg(long)]
    bundle: PathBuf,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2, 3, 4, 5])]
    seeds: Vec<u64>,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    out: OutArg,
}

/// Runs the command line in `std::env::args_os` and returns the exit code.
pub fn run_from_env() -> i32 {
    run(std::env::args_os())
}

/// Parses `args` (including the program name), executes the command and
/// returns the process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let command_line = args
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join(" ");
    match execute(cli.command, command_line) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command, command_line: String) -> Result<()> {
    let start = Instant::now();
    let mut manifest = RunManifest::new(command_line);
    let dir = match command {
        Command::Prepare(a) => cmd_prepare(&a, &mut manifest)?,
        Command::Train(a) => cmd_train(&a, &mut manifest)?,
        Command::Score(a) => cmd_score(&a, &mut manifest)?,
        Command::Eval(a) => cmd_eval(&a, &mut manifest)?,
        Command::Synth(a) => cmd_synth(&a, &mut manifest)?,
        Command::RunSeeds(a) => cmd_run_seeds(&a, &mut manifest)?,
    };
    manifest.wall_seconds = start.elapsed().as_secs_f64();
    manifest.write(&dir)?;
    println!("output: {}", dir.display());
    Ok(())
}

fn build_bundle(graph: Graph, views: &ViewArgs) -> Result<Bundle> {
    let max_deg = views.max_deg.unwrap_or_else(|| default_max_deg(&graph));
    let v = build_views(&graph, views.d_rw, max_deg)?;
    Ok(Bundle { graph, views: v })
}

fn cmd_prepare(a: &PrepareArgs, manifest: &mut RunManifest) -> Result<PathBuf> {
    let features = read_features_csv(&a.features)?;
    let edges = read_edge_list(&a.edges)?;
    let labels = a.labels.as_deref().map(read_labels).transpose()?;
    if let Some(l) = &labels {
        if l.len() != features.rows() {
            return Err(JanusError::mismatch("label count vs feature rows", features.rows(), l.len()));
        }
    }
    let bundle = build_bundle(Graph::new(features, edges, labels)?, &a.views)?;
    manifest.digest_input("edges", &a.edges)?;
    manifest.digest_input("features", &a.features)?;
    if let Some(l) = &a.labels {
        manifest.digest_input("labels", l)?;
    }
    let dir = fresh_run_dir(a.out.out.as_deref(), "prepare")?;
    manifest.extra = write_bundle(&dir, &bundle)?;
    println!(
        "bundle: {} nodes, {} edges, xg width {}, {}",
        bundle.graph.num_nodes(),
        bundle.graph.num_edges(),
        bundle.views.xg.cols(),
        if bundle.is_labeled() { "labeled" } else { "unlabeled" }
    );
    Ok(dir)
}

fn cmd_synth(a: &SynthArgs, manifest: &mut RunManifest) -> Result<PathBuf> {
    let spec = a.spec()?;
    let bundle = build_bundle(inject_anomalies(&spec)?, &a.views)?;
    let dir = fresh_run_dir(a.out.out.as_deref(), "synth")?;
    let mut kv = write_bundle(&dir, &bundle)?;
    let base = match spec.base_model {
        BaseModel::ErdosRenyi { p } => format!("er p={p}"),
        BaseModel::BarabasiAlbert { m } => format!("ba m={m}"),
    };
    kv.push("synth.base", base);
    kv.push("synth.contextual", spec.contextual_count);
    kv.push("synth.structural", spec.structural_count);
    kv.push("synth.clique_size", spec.clique_size);
    kv.push("synth.outlier_scale", spec.outlier_scale);
    kv.push("synth.seed", spec.seed);
    manifest.extra = kv;
    println!(
        "synth: {} nodes, {} edges, {} anomalies",
        bundle.graph.num_nodes(),
        bundle.graph.num_edges(),
        spec.contextual_count + spec.structural_count
    );
    Ok(dir)
}

fn digest_bundle(manifest: &mut RunManifest, dir: &Path) -> Result<()> {
    manifest.digest_input("bundle.manifest", &dir.join("manifest.txt"))
}

fn config_lines(cfg: &TrainConfig) -> Vec<(String, String)> {
    KvFile::from_text(&cfg.to_kv_string())
        .entries()
        .to_vec()
}

fn history_csv(history: &[crate::trainer::EpochLoss]) -> String {
    let mut s = String::from("epoch,cl,adj,node,total\n");
    for (i, e) in history.iter().enumerate() {
        let _ = writeln!(s, "{i},{},{},{},{}", e.cl, e.adj, e.node, e.total);
    }
    s
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| JanusError::io(path, e))
}

fn cmd_train(a: &TrainArgs, manifest: &mut RunManifest) -> Result<PathBuf> {
    let bundle = read_bundle(&a.bundle)?;
    let cfg = a.config.resolve(&bundle)?;
    digest_bundle(manifest, &a.bundle)?;
    manifest.config = config_lines(&cfg);
    manifest.seeds = vec![cfg.seed];
    let dir = fresh_run_dir(a.out.out.as_deref(), "train")?;
    let trained = train_on_views(&bundle.graph, &bundle.views, &cfg)?;
    save_checkpoint(&dir.join("checkpoint"), &trained.checkpoint)?;
    let r = &trained.report;
    write_text(&dir.join("history.csv"), &history_csv(&r.history))?;
    let best = r.history[r.best_epoch];
    manifest.extra.push("checkpoint", "checkpoint");
    manifest.extra.push("best_epoch", r.best_epoch);
    manifest.extra.push("best_total", best.total);
    manifest.extra.push("train_seconds", format!("{:.3}", r.wall_seconds));
    println!(
        "trained {} epochs in {:.1}s; best epoch {} total {:.6}",
        r.history.len(),
        r.wall_seconds,
        r.best_epoch,
        best.total
    );
    Ok(dir)
}

fn locate_checkpoint(path: &Path) -> Result<Checkpoint> {
    let nested = path.join("checkpoint");
    if nested.join("manifest.txt").exists() {
        load_checkpoint(&nested)
    } else {
        load_checkpoint(path)
    }
}

/// `node_id<TAB>score` lines, scores with 17 significant digits.
pub fn format_scores(scores: &[f64]) -> String {
    let mut s = String::with_capacity(scores.len() * 28);
    for (i, v) in scores.iter().enumerate() {
        let _ = writeln!(s, "{i}\t{v:.16e}");
    }
    s
}

/// Parses a score file; node ids must be `0..n` in order.
pub fn read_scores(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| JanusError::io(path, e))?;
    let bad = |line: usize, message: String| JanusError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, v) = line
            .split_once('\t')
            .ok_or_else(|| bad(i + 1, "expected `node_id<TAB>score`".into()))?;
        let id: usize = id.trim().parse().map_err(|_| bad(i + 1, format!("bad node id `{id}`")))?;
        if id != out.len() {
            return Err(bad(i + 1, format!("expected node id {}, found {id}", out.len())));
        }
        let v: f64 = v.trim().parse().map_err(|_| bad(i + 1, format!("bad score `{v}`")))?;
        out.push(v);
    }
    Ok(out)
}

fn cmd_score(a: &ScoreArgs, manifest: &mut RunManifest) -> Result<PathBuf> {
    let bundle = read_bundle(&a.bundle)?;
    let ck = locate_checkpoint(&a.checkpoint)?;
    digest_bundle(manifest, &a.bundle)?;
    manifest.config = config_lines(&ck.config);
    let scores = score(&bundle.graph, &bundle.views, &ck)?;
    let dir = fresh_run_dir(a.out.out.as_deref(), "score")?;
    write_text(&dir.join("scores.tsv"), &format_scores(&scores))?;
    manifest.extra.push("scores", "scores.tsv");
    manifest.extra.push("nodes", scores.len());
    println!("scored {} nodes", scores.len());
    Ok(dir)
}

fn metric_lines(kv: &mut KvFile, prefix: &str, e: &RankedEval) {
    kv.push(format!("{prefix}roc_auc"), e.roc_auc);
    kv.push(format!("{prefix}ap"), e.ap);
    kv.push(format!("{prefix}cg_area"), e.cg_area);
}

/// Metrics report for one or more evaluations. Values use the shortest
/// exact decimal form, so identical inputs give identical bytes.
pub fn metrics_report(evals: &[RankedEval], names: &[String]) -> KvFile {
    let mut kv = KvFile::default();
    if let [e] = evals {
        metric_lines(&mut kv, "", e);
        return kv;
    }
    for (name, e) in names.iter().zip(evals) {
        metric_lines(&mut kv, &format!("{name}."), e);
    }
    let stat = |f: fn(&RankedEval) -> f64| mean_std(&evals.iter().map(f).collect::<Vec<_>>());
    for (key, (m, s)) in [
        ("roc_auc", stat(|e| e.roc_auc)),
        ("ap", stat(|e| e.ap)),
        ("cg_area", stat(|e| e.cg_area)),
    ] {
        kv.push(format!("{key}.mean"), m);
        kv.push(format!("{key}.std"), s);
    }
    kv
}

fn print_summary(evals: &[RankedEval]) {
    let stat = |f: fn(&RankedEval) -> f64| mean_std(&evals.iter().map(f).collect::<Vec<_>>());
    let (auc, auc_s) = stat(|e| e.roc_auc);
    let (ap, ap_s) = stat(|e| e.ap);
    let (cg, cg_s) = stat(|e| e.cg_area);
    println!("roc_auc = {auc:.4} ± {auc_s:.4}");
    println!("ap      = {ap:.4} ± {ap_s:.4}");
    println!("cg_area = {cg:.4} ± {cg_s:.4}");
}

fn cmd_eval(a: &EvalArgs, manifest: &mut RunManifest) -> Result<PathBuf> {
    let labels = match (&a.labels, &a.bundle) {
        (Some(path), _) => {
            manifest.digest_input("labels", path)?;
            read_labels(path)?
        }
        (None, Some(b)) => {
            digest_bundle(manifest, b)?;
            read_bundle(b)?.labels()?.to_vec()
        }
        (None, None) => {
            return Err(JanusError::config("labels", "pass --labels or --bundle"));
        }
    };
    let mut evals = Vec::with_capacity(a.scores.len());
    let mut names = Vec::with_capacity(a.scores.len());
    for (i, path) in a.scores.iter().enumerate() {
        manifest.digest_input(&format!("scores.{i}"), path)?;
        let s = read_scores(path)?;
        if s.len() != labels.len() {
            return Err(JanusError::mismatch("scores vs labels", labels.len(), s.len()));
        }
        evals.push(evaluate(&s, &labels)?);
        names.push(format!("run{i}"));
    }
    let dir = fresh_run_dir(a.out.out.as_deref(), "eval")?;
    metrics_report(&evals, &names).write(&dir.join("metrics.txt"))?;
    if let [e] = evals.as_slice() {
        write_text(&dir.join("cg_curve.csv"), &curve_csv(&e.cg_curve))?;
    } else {
        for (name, e) in names.iter().zip(&evals) {
            write_text(&dir.join(format!("cg_curve.{name}.csv")), &curve_csv(&e.cg_curve))?;
        }
    }
    print_summary(&evals);
    Ok(dir)
}

fn cmd_run_seeds(a: &RunSeedsArgs, manifest: &mut RunManifest) -> Result<PathBuf> {
    let bundle = read_bundle(&a.bundle)?;
    bundle.labels()?;
    let cfg = a.config.resolve(&bundle)?;
    digest_bundle(manifest, &a.bundle)?;
    manifest.config = config_lines(&cfg);
    manifest.seeds = a.seeds.clone();
    let dir = fresh_run_dir(a.out.out.as_deref(), "run-seeds")?;
    let summary = run_seeds(&bundle.graph, &cfg, &a.seeds)?;
    let mut names = Vec::with_capacity(summary.runs.len());
    for r in &summary.runs {
        let name = format!("seed-{}", r.seed);
        let sub = dir.join(&name);
        fs::create_dir_all(&sub).map_err(|e| JanusError::io(&sub, e))?;
        write_text(&sub.join("scores.tsv"), &format_scores(&r.scores))?;
        write_text(&sub.join("cg_curve.csv"), &curve_csv(&r.eval.cg_curve))?;
        names.push(name);
    }
    let evals: Vec<RankedEval> = summary.runs.iter().map(|r| r.eval.clone()).collect();
    metrics_report(&evals, &names).write(&dir.join("metrics.txt"))?;
    print_summary(&evals);
    Ok(dir)
}
