use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::{CatalogError, PairStream, Provenance, WeightedGraph};

/// Parameters for second-order biased random walks over the session graph.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct WalkConfig {
    /// Nodes per walk.
    pub walk_length: usize,
    pub walks_per_node: usize,
    /// Return bias: weight 1/p for stepping back to the previous node.
    pub p: f64,
    /// In-out bias: weight 1/q for nodes not adjacent to the previous node.
    pub q: f64,
    /// Window over each walk when emitting (center, previous) pairs.
    pub context_size: usize,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            walk_length: 40,
            walks_per_node: 10,
            p: 1.0,
            q: 1.0,
            context_size: 5,
            seed: 0,
        }
    }
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn walk_rng(seed: u64, node: u32, walk: usize) -> ChaCha8Rng {
    let mixed = splitmix64(seed ^ splitmix64(u64::from(node)) ^ splitmix64(walk as u64) << 1);
    ChaCha8Rng::seed_from_u64(mixed)
}

fn second_order_walk(
    graph: &WeightedGraph,
    start: u32,
    length: usize,
    p: f64,
    q: f64,
    rng: &mut ChaCha8Rng,
    weights: &mut Vec<f64>,
) -> Vec<u32> {
    let mut walk = Vec::with_capacity(length);
    walk.push(start);
    if length == 1 {
        return walk;
    }
    let first_neighbors = graph.neighbors(start);
    weights.clear();
    weights.extend(first_neighbors.iter().map(|&(_, w)| w as f64));
    let dist = WeightedIndex::new(weights.iter().copied()).expect("non-empty neighbor list");
    walk.push(first_neighbors[dist.sample(rng)].0);

    while walk.len() < length {
        let current = walk[walk.len() - 1];
        let previous = walk[walk.len() - 2];
        let neighbors = graph.neighbors(current);
        weights.clear();
        weights.extend(neighbors.iter().map(|&(node, w)| {
            let bias = if node == previous {
                1.0 / p
            } else if graph.has_edge(previous, node) {
                1.0
            } else {
                1.0 / q
            };
            w as f64 * bias
        }));
        let dist = WeightedIndex::new(weights.iter().copied()).expect("non-empty neighbor list");
        walk.push(neighbors[dist.sample(rng)].0);
    }
    walk
}

/// Generates node2vec-style walks (per-node seeded for determinism) and
/// emits (center, previous-within-window) pairs from each walk. Isolated
/// nodes are skipped with a warning.
pub fn random_walk_pairs(
    graph: &WeightedGraph,
    config: &WalkConfig,
) -> Result<PairStream, CatalogError> {
    if graph.num_nodes() == 0 {
        return Err(CatalogError::EmptyGraph);
    }
    let mut pairs = Vec::new();
    let mut suppressed = 0u64;
    let mut weights = Vec::new();
    let mut skipped = 0usize;
    for node in 0..graph.num_nodes() as u32 {
        if graph.neighbors(node).is_empty() {
            skipped += 1;
            continue;
        }
        for walk_idx in 0..config.walks_per_node {
            let mut rng = walk_rng(config.seed, node, walk_idx);
            let walk = second_order_walk(
                graph,
                node,
                config.walk_length,
                config.p,
                config.q,
                &mut rng,
                &mut weights,
            );
            for t in 0..walk.len() {
                for m in 1..=config.context_size.min(t) {
                    let (center, context) = (walk[t], walk[t - m]);
                    if center == context {
                        suppressed += 1;
                    } else {
                        pairs.push((center, context));
                    }
                }
            }
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} isolated nodes during walk generation");
    }
    Ok(PairStream::new(pairs, Provenance::RandomWalk, suppressed))
}
