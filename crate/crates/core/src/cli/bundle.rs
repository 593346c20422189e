//! Dataset bundles: a graph plus its precomputed views.
//!
//! ```text
//! bundle/
//!   graph.edges    one `u v` pair per line
//!   features.bin   Xs, row-major little-endian f64
//!   views.bin      Xg, row-major little-endian f64
//!   labels.txt     one 0/1 per line (labeled bundles only)
//!   manifest.txt   shapes, view parameters and a SHA-256 per file
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{JanusError, Result};
use crate::graph::{read_edge_list, read_labels, write_edge_list, Graph, NodeViews};
use crate::matrix::Matrix;
use crate::trainer::{read_f64_le, write_f64_le};

use super::run::{sha256_file, KvFile};

const FORMAT: &str = "janus-bundle-1";
const DATA_FILES: [&str; 4] = ["graph.edges", "features.bin", "views.bin", "labels.txt"];

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub graph: Graph,
    pub views: NodeViews,
}

impl Bundle {
    pub fn is_labeled(&self) -> bool {
        self.graph.labels().is_some()
    }

    /// Labels, or an error naming the bundle as unlabeled.
    pub fn labels(&self) -> Result<&[u8]> {
        self.graph
            .labels()
            .ok_or_else(|| JanusError::DegenerateLabels("bundle is unlabeled".into()))
    }
}

/// Writes the data files and returns their `(name, sha256)` pairs, followed
/// by manifest lines describing shapes. The caller appends run metadata and
/// writes `manifest.txt`.
pub fn write_bundle(dir: &Path, bundle: &Bundle) -> Result<KvFile> {
    let g = &bundle.graph;
    let v = &bundle.views;
    write_edge_list(&dir.join("graph.edges"), g.edges())?;
    write_f64_le(&dir.join("features.bin"), v.xs.data())?;
    write_f64_le(&dir.join("views.bin"), v.xg.data())?;
    if let Some(labels) = g.labels() {
        let mut s = String::with_capacity(labels.len() * 2);
        for l in labels {
            let _ = writeln!(s, "{l}");
        }
        let path = dir.join("labels.txt");
        fs::write(&path, s).map_err(|e| JanusError::io(&path, e))?;
    }

    let mut kv = KvFile::default();
    kv.push("format", FORMAT);
    kv.push("nodes", g.num_nodes());
    kv.push("edges", g.num_edges());
    kv.push("feature_dim", v.xs.cols());
    kv.push("xg_dim", v.xg.cols());
    kv.push("d_rw", v.d_rw);
    kv.push("max_deg", v.max_deg);
    kv.push("labeled", g.labels().is_some());
    for name in DATA_FILES {
        let path = dir.join(name);
        if path.exists() {
            kv.push(format!("sha256.{name}"), sha256_file(&path)?);
        }
    }
    Ok(kv)
}

/// Loads a bundle, checking every recorded digest and shape.
pub fn read_bundle(dir: &Path) -> Result<Bundle> {
    let manifest_path = dir.join("manifest.txt");
    let kv = KvFile::read(&manifest_path)?;
    if kv.get("format") != Some(FORMAT) {
        return Err(JanusError::InvalidInput(format!(
            "{} is not a {FORMAT} manifest",
            manifest_path.display()
        )));
    }
    for name in DATA_FILES {
        let path = dir.join(name);
        match kv.get(&format!("sha256.{name}")) {
            Some(expected) => {
                let found = sha256_file(&path)?;
                if found != expected {
                    return Err(JanusError::InvalidInput(format!(
                        "{}: digest {found} does not match manifest {expected}",
                        path.display()
                    )));
                }
            }
            None if path.exists() => {
                return Err(JanusError::InvalidInput(format!(
                    "{} is not listed in the manifest",
                    path.display()
                )));
            }
            None => {}
        }
    }
    let n: usize = kv.parse("nodes")?;
    let d: usize = kv.parse("feature_dim")?;
    let xg_dim: usize = kv.parse("xg_dim")?;
    let labeled: bool = kv.parse("labeled")?;

    let xs = Matrix::from_vec(n, d, read_f64_le(&dir.join("features.bin"))?)?;
    let xg = Matrix::from_vec(n, xg_dim, read_f64_le(&dir.join("views.bin"))?)?;
    let edges = read_edge_list(&dir.join("graph.edges"))?;
    let labels = if labeled {
        Some(read_labels(&dir.join("labels.txt"))?)
    } else {
        None
    };
    let graph = Graph::new(xs.clone(), edges, labels)?;
    let views = NodeViews {
        xs,
        xg,
        d_rw: kv.parse("d_rw")?,
        max_deg: kv.parse("max_deg")?,
    };
    if views.d_rw + views.max_deg + 1 != xg_dim {
        return Err(JanusError::mismatch(
            "bundle xg width",
            views.d_rw + views.max_deg + 1,
            xg_dim,
        ));
    }
    Ok(Bundle { graph, views })
}
