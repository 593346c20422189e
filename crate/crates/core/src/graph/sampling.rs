use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{JanusError, Result};

use super::operator::induced_normalized_adjacency;
use super::{Graph, SparseOperator};

/// A GraphSAGE-style sampled neighborhood around a set of seed nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborBatch {
    /// Deduplicated seeds in first-seen order.
    pub seed_nodes: Vec<usize>,
    /// Global ids of every node in the batch; seeds come first.
    pub nodes: Vec<usize>,
    /// Normalized adjacency of the subgraph induced by `nodes`.
    pub sampled_adjacency: SparseOperator,
    /// `(frontier node, sampled neighbor)` pairs in draw order.
    pub sampled_edges: Vec<(usize, usize)>,
    pub layer_fanouts: Vec<usize>,
}

/// Per layer, every frontier node draws `min(fanout, degree)` distinct
/// neighbors uniformly without replacement. Newly reached nodes form the
/// next frontier.
pub fn sample_neighborhood(
    g: &Graph,
    seeds: &[usize],
    fanouts: &[usize],
    rng_seed: u64,
) -> Result<NeighborBatch> {
    if seeds.is_empty() {
        return Err(JanusError::InvalidInput("no seed nodes".into()));
    }
    if fanouts.is_empty() || fanouts.contains(&0) {
        return Err(JanusError::config("fanouts", "need at least one positive fanout"));
    }
    let n = g.num_nodes();
    let mut in_batch = vec![false; n];
    let mut nodes = Vec::new();
    for &s in seeds {
        if s >= n {
            return Err(JanusError::UnknownNode(s));
        }
        if !in_batch[s] {
            in_batch[s] = true;
            nodes.push(s);
        }
    }
    let seed_nodes = nodes.clone();

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut frontier = seed_nodes.clone();
    let mut sampled_edges = Vec::new();
    for &fanout in fanouts {
        let mut next = Vec::new();
        for &u in &frontier {
            let nbrs = g.neighbors(u);
            let k = fanout.min(nbrs.len());
            let mut picks = rand::seq::index::sample(&mut rng, nbrs.len(), k).into_vec();
            picks.sort_unstable();
            for p in picks {
                let v = nbrs[p];
                sampled_edges.push((u, v));
                if !in_batch[v] {
                    in_batch[v] = true;
                    nodes.push(v);
                    next.push(v);
                }
            }
        }
        frontier = next;
    }

    let sampled_adjacency = induced_normalized_adjacency(g, &nodes);
    Ok(NeighborBatch {
        seed_nodes,
        nodes,
        sampled_adjacency,
        sampled_edges,
        layer_fanouts: fanouts.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::super::fixtures;
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn fanout_bound_on_star_center() {
        let g = fixtures::star(5);
        let b = sample_neighborhood(&g, &[0], &[2], 11).unwrap();
        assert_eq!(b.sampled_edges.len(), 2);
        assert_eq!(b.nodes.len(), 3);
        assert_eq!(b.nodes[0], 0);
        let distinct: BTreeSet<_> = b.sampled_edges.iter().map(|e| e.1).collect();
        assert_eq!(distinct.len(), 2);
    }

    #[test]
    fn saturated_fanout_gives_k_hop() {
        let g = Graph::new(
            fixtures::unit_features(6),
            [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)],
            None,
        )
        .unwrap();
        let b = sample_neighborhood(&g, &[0], &[10, 10], 3).unwrap();
        let got: BTreeSet<_> = b.nodes.iter().copied().collect();
        assert_eq!(got, BTreeSet::from([0, 1, 2]));
        assert_eq!(b.sampled_adjacency.dim(), 3);
    }

    #[test]
    fn deterministic() {
        let g = fixtures::star(30);
        let a = sample_neighborhood(&g, &[0, 3], &[4, 2], 99).unwrap();
        let b = sample_neighborhood(&g, &[0, 3], &[4, 2], 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn errors() {
        let g = fixtures::star(3);
        assert!(matches!(
            sample_neighborhood(&g, &[9], &[1], 0),
            Err(JanusError::UnknownNode(9))
        ));
        assert!(sample_neighborhood(&g, &[], &[1], 0).is_err());
        assert!(sample_neighborhood(&g, &[0], &[], 0).is_err());
    }
}
