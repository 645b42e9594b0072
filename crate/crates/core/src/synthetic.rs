//! Generated graph pairs with a known 1:1 alignment, for sanity experiments
//! and tests.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::diffmath::Matrix;
use crate::error::{Error, Result};
use crate::graphstore::{GraphPair, KnowledgeGraph};

/// A random directed multigraph with `n_triples` distinct triples, no
/// self-loops, and every relation used at least once.
pub fn random_graph<R: Rng + ?Sized>(
    prefix: &str,
    n_entities: usize,
    n_relations: usize,
    n_triples: usize,
    rng: &mut R,
) -> Result<KnowledgeGraph> {
    if n_entities < 2 || n_relations == 0 {
        return Err(Error::invalid("random graph needs 2 entities and 1 relation"));
    }
    let capacity = n_entities * (n_entities - 1) * n_relations;
    if n_triples < n_relations || n_triples > capacity {
        return Err(Error::invalid(format!(
            "cannot place {n_triples} triples over {n_relations} relations"
        )));
    }
    let mut triples = BTreeSet::new();
    let draw = |rng: &mut R, r: usize| loop {
        let h = rng.random_range(0..n_entities);
        let t = rng.random_range(0..n_entities);
        if h != t {
            return (h, r, t);
        }
    };
    for r in 0..n_relations {
        triples.insert(draw(rng, r));
    }
    while triples.len() < n_triples {
        let r = rng.random_range(0..n_relations);
        triples.insert(draw(rng, r));
    }
    let triples: Vec<_> = triples.into_iter().collect();
    KnowledgeGraph::from_indexed(prefix, n_entities, n_relations, &triples)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub entities: usize,
    /// Mean total (in + out) degree.
    pub mean_degree: f64,
    pub relations: usize,
    pub dim: usize,
    /// Standard deviation of the per-side Gaussian noise added to the shared
    /// features (which are standard normal).
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            entities: 100,
            mean_degree: 4.0,
            relations: 3,
            dim: 32,
            noise: 1.0,
            seed: 0,
        }
    }
}

/// Isomorphic graph pair where the right side is a random relabeling of the
/// left side.
#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub pair: GraphPair,
    pub features_left: Matrix,
    pub features_right: Matrix,
    /// `permutation[i]` is the right index of left entity `i`.
    pub permutation: Vec<usize>,
}

pub fn synthetic_pair(config: &SyntheticConfig) -> Result<SyntheticPair> {
    let n = config.entities;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_triples = (n as f64 * config.mean_degree / 2.0).round() as usize;
    let left = random_graph("l", n, config.relations, n_triples, &mut rng)?;
    let mut permutation: Vec<usize> = (0..n).collect();
    permutation.shuffle(&mut rng);
    let right_triples: Vec<_> = left
        .triples()
        .iter()
        .map(|t| (permutation[t.head], t.relation, permutation[t.tail]))
        .collect();
    let right = KnowledgeGraph::from_indexed("r", n, config.relations, &right_triples)?;

    let shared = gaussian(&mut rng, n, config.dim, 1.0);
    let noise_left = gaussian(&mut rng, n, config.dim, config.noise);
    let noise_right = gaussian(&mut rng, n, config.dim, config.noise);
    let features_left = &shared + &noise_left;
    let mut features_right = Matrix::zeros((n, config.dim));
    for (i, &j) in permutation.iter().enumerate() {
        let row = &shared.row(i) + &noise_right.row(i);
        features_right.row_mut(j).assign(&row);
    }
    let alignments = (0..n).map(|i| (i, permutation[i])).collect();
    Ok(SyntheticPair {
        pair: GraphPair::new(left, right, alignments)?,
        features_left,
        features_right,
        permutation,
    })
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Matrix {
    Matrix::from_shape_simple_fn((rows, cols), || {
        let z: f64 = StandardNormal.sample(&mut *rng);
        std * z
    })
}
