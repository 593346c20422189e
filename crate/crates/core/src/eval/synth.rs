use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{JanusError, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseModel {
    /// Each pair is an edge independently with probability `p`.
    ErdosRenyi { p: f64 },
    /// Preferential attachment with `m` edges per new node.
    BarabasiAlbert { m: usize },
}

/// Recipe for a synthetic attributed graph with injected anomalies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectionSpec {
    pub n: usize,
    pub base_model: BaseModel,
    pub feature_dim: usize,
    /// Nodes whose features are redrawn at `outlier_scale` times the
    /// standard deviation.
    pub contextual_count: usize,
    /// Nodes wired into disjoint cliques of `clique_size`.
    pub structural_count: usize,
    pub clique_size: usize,
    pub outlier_scale: f64,
    pub seed: u64,
}

impl InjectionSpec {
    /// The 500-node benchmark fixture (5% anomalies).
    pub fn synth_500() -> Self {
        InjectionSpec {
            n: 500,
            base_model: BaseModel::ErdosRenyi { p: 0.02 },
            feature_dim: 16,
            contextual_count: 13,
            structural_count: 12,
            clique_size: 6,
            outlier_scale: 10.0,
            seed: 7,
        }
    }

    /// The 30-node training fixture (2 contextual, one 3-clique).
    pub fn synth_30() -> Self {
        InjectionSpec {
            n: 30,
            base_model: BaseModel::ErdosRenyi { p: 0.15 },
            feature_dim: 8,
            contextual_count: 2,
            structural_count: 3,
            clique_size: 3,
            outlier_scale: 10.0,
            seed: 11,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let infeasible = |m: String| Err(JanusError::Infeasible(m));
        if self.feature_dim == 0 {
            return infeasible("feature_dim must be >= 1".into());
        }
        if self.contextual_count + self.structural_count >= self.n {
            return infeasible(format!(
                "{} anomalies leave no normal node among {}",
                self.contextual_count + self.structural_count,
                self.n
            ));
        }
        if self.structural_count > 0 {
            if self.clique_size < 2 {
                return infeasible("clique_size must be >= 2".into());
            }
            if self.clique_size > self.structural_count {
                return infeasible(format!(
                    "clique of {} exceeds structural_count {}",
                    self.clique_size, self.structural_count
                ));
            }
            if self.structural_count % self.clique_size != 0 {
                return infeasible(format!(
                    "structural_count {} is not a multiple of clique_size {}",
                    self.structural_count, self.clique_size
                ));
            }
        }
        if !(self.outlier_scale.is_finite() && self.outlier_scale > 0.0) {
            return infeasible("outlier_scale must be a finite value > 0".into());
        }
        match self.base_model {
            BaseModel::ErdosRenyi { p } if !(0.0..=1.0).contains(&p) => {
                infeasible(format!("edge probability {p} outside [0, 1]"))
            }
            BaseModel::BarabasiAlbert { m } if m == 0 || m >= self.n => {
                infeasible(format!("attachment count {m} must be in 1..n"))
            }
            _ => Ok(()),
        }
    }
}

/// Generates the base graph, standard-normal features and the anomalies.
/// Every random draw comes from one ChaCha8 stream seeded by `spec.seed`.
pub fn inject_anomalies(spec: &InjectionSpec) -> Result<Graph> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;

    let mut edges = match spec.base_model {
        BaseModel::ErdosRenyi { p } => erdos_renyi(&mut rng, n, p),
        BaseModel::BarabasiAlbert { m } => barabasi_albert(&mut rng, n, m),
    };

    let d = spec.feature_dim;
    let mut feats: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();

    let total = spec.contextual_count + spec.structural_count;
    let chosen = rand::seq::index::sample(&mut rng, n, total).into_vec();
    let (contextual, structural) = chosen.split_at(spec.contextual_count);
    let mut labels = vec![0u8; n];

    for &v in contextual {
        for x in &mut feats[v * d..(v + 1) * d] {
            let z: f64 = rng.sample(StandardNormal);
            *x = spec.outlier_scale * z;
        }
        labels[v] = 1;
    }
    for group in structural.chunks(spec.clique_size.max(1)) {
        for (a, &u) in group.iter().enumerate() {
            labels[u] = 1;
            for &v in &group[a + 1..] {
                edges.push((u, v));
            }
        }
    }

    Graph::new(Matrix::from_vec(n, d, feats)?, edges, Some(labels))
}

fn erdos_renyi(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// Starts from a clique on `m + 1` nodes; each later node links to `m`
/// distinct earlier nodes drawn proportionally to degree.
fn barabasi_albert(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    // Each endpoint appears once per incident edge.
    let mut endpoints = Vec::new();
    let seed_nodes = (m + 1).min(n);
    for u in 0..seed_nodes {
        for v in u + 1..seed_nodes {
            edges.push((u, v));
            endpoints.push(u);
            endpoints.push(v);
        }
    }
    for v in seed_nodes..n {
        let mut targets: Vec<usize> = Vec::with_capacity(m);
        while targets.len() < m {
            let t = endpoints[rng.random_range(0..endpoints.len())];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for t in targets {
            edges.push((t, v));
            endpoints.push(t);
            endpoints.push(v);
        }
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_anomalies_means_all_normal() {
        let spec = InjectionSpec {
            contextual_count: 0,
            structural_count: 0,
            ..InjectionSpec::synth_500()
        };
        let g = inject_anomalies(&spec).unwrap();
        assert!(g.labels().unwrap().iter().all(|&l| l == 0));
    }

    #[test]
    fn synth_500_shape_and_determinism() {
        let spec = InjectionSpec::synth_500();
        let a = inject_anomalies(&spec).unwrap();
        let b = inject_anomalies(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.num_nodes(), 500);
        assert_eq!(a.feature_dim(), 16);
        let labels = a.labels().unwrap();
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 25);
    }

    #[test]
    fn clique_members_are_connected() {
        let spec = InjectionSpec {
            n: 60,
            base_model: BaseModel::ErdosRenyi { p: 0.0 },
            feature_dim: 2,
            contextual_count: 0,
            structural_count: 8,
            clique_size: 4,
            outlier_scale: 5.0,
            seed: 1,
        };
        let g = inject_anomalies(&spec).unwrap();
        let anomalous: Vec<usize> = (0..60).filter(|&i| g.labels().unwrap()[i] == 1).collect();
        assert_eq!(anomalous.len(), 8);
        for &v in &anomalous {
            assert!(g.degree(v) >= 3);
        }
        assert_eq!(g.num_edges(), 2 * 6);
    }

    #[test]
    fn contextual_features_are_scaled() {
        let spec = InjectionSpec {
            n: 400,
            base_model: BaseModel::BarabasiAlbert { m: 2 },
            feature_dim: 8,
            contextual_count: 20,
            structural_count: 0,
            clique_size: 2,
            outlier_scale: 10.0,
            seed: 2,
        };
        let g = inject_anomalies(&spec).unwrap();
        let labels = g.labels().unwrap();
        let mean_norm = |want: u8| {
            let rows: Vec<f64> = (0..400)
                .filter(|&i| labels[i] == want)
                .map(|i| g.features().row(i).iter().map(|x| x * x).sum::<f64>().sqrt())
                .collect();
            rows.iter().sum::<f64>() / rows.len() as f64
        };
        assert!(mean_norm(1) > 5.0 * mean_norm(0));
        assert!(g.num_edges() >= 2 * (400 - 3));
    }

    #[test]
    fn infeasible_specs() {
        let base = InjectionSpec::synth_500();
        let bad = [
            InjectionSpec { clique_size: 13, ..base },
            InjectionSpec { clique_size: 5, ..base },
            InjectionSpec { contextual_count: 490, ..base },
            InjectionSpec { base_model: BaseModel::ErdosRenyi { p: 1.5 }, ..base },
            InjectionSpec { base_model: BaseModel::BarabasiAlbert { m: 0 }, ..base },
            InjectionSpec { feature_dim: 0, ..base },
        ];
        for s in bad {
            assert!(matches!(inject_anomalies(&s), Err(JanusError::Infeasible(_))), "{s:?}");
        }
    }
}
