//! Structures derived from a [`KnowledgeGraph`] that the models consume.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use ndarray::Array2;

use super::graph::{KnowledgeGraph, RelationIncidence};
use crate::diffmath::{Matrix, Segments, SparseMatrix};

/// Symmetrically normalized undirected adjacency with self-loops,
/// `D^{-1/2} (A + I) D^{-1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    pub matrix: Arc<SparseMatrix>,
    pub self_loops: bool,
}

pub fn build_normalized_adjacency(kg: &KnowledgeGraph) -> NormalizedAdjacency {
    let n = kg.num_entities();
    let mut edges: BTreeSet<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
    for t in kg.triples() {
        edges.insert((t.head, t.tail));
        edges.insert((t.tail, t.head));
    }
    let mut degree = vec![0usize; n];
    for &(i, _) in &edges {
        degree[i] += 1;
    }
    let entries = edges
        .into_iter()
        .map(|(i, j)| (i, j, 1.0 / ((degree[i] * degree[j]) as f64).sqrt()))
        .collect();
    NormalizedAdjacency {
        matrix: Arc::new(SparseMatrix::from_triplets(n, n, entries).expect("indexes in bounds")),
        self_loops: true,
    }
}

/// Row-normalized directed adjacency `norm(A)` and of its transpose
/// `norm(Aᵀ)`. Parallel edges collapse; rows without edges stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedAdjacency {
    pub forward: Arc<SparseMatrix>,
    pub backward: Arc<SparseMatrix>,
}

pub fn build_directed_row_normalized(kg: &KnowledgeGraph) -> DirectedAdjacency {
    let n = kg.num_entities();
    let edges: BTreeSet<(usize, usize)> = kg.triples().iter().map(|t| (t.head, t.tail)).collect();
    let a = SparseMatrix::from_triplets(n, n, edges.iter().map(|&(i, j)| (i, j, 1.0)).collect())
        .expect("indexes in bounds");
    DirectedAdjacency {
        forward: Arc::new(a.row_normalized()),
        backward: Arc::new(a.transpose().row_normalized()),
    }
}

/// Relation similarity `J_ij = jac(H_i, H_j) + jac(T_i, T_j)`, where the
/// Jaccard term of two empty sets is 0.
pub fn jaccard_relation_similarity(inc: &RelationIncidence) -> Matrix {
    let n = inc.num_relations();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = jaccard(&inc.heads[i], &inc.heads[j]) + jaccard(&inc.tails[i], &inc.tails[j]);
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

/// Jaccard index of two sorted, deduplicated index lists.
fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Entity pairs linked by at least one triple, for relation-aware attention.
///
/// `sources[k] -> targets[k]` is the k-th distinct directed pair, sorted by
/// source. `pair_relations` maps each pair to the distinct relations linking
/// it (one unit entry per relation).
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalEdges {
    pub sources: Arc<Vec<usize>>,
    pub targets: Arc<Vec<usize>>,
    pub pair_relations: Arc<SparseMatrix>,
    pub segments: Arc<Segments>,
}

pub fn build_primal_edges(kg: &KnowledgeGraph) -> PrimalEdges {
    let mut by_pair: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
    for t in kg.triples() {
        by_pair.entry((t.head, t.tail)).or_default().insert(t.relation);
    }
    let mut sources = Vec::with_capacity(by_pair.len());
    let mut targets = Vec::with_capacity(by_pair.len());
    let mut entries = Vec::new();
    for (k, ((s, t), rels)) in by_pair.into_iter().enumerate() {
        sources.push(s);
        targets.push(t);
        entries.extend(rels.into_iter().map(|r| (k, r, 1.0)));
    }
    let pair_relations =
        SparseMatrix::from_triplets(sources.len(), kg.num_relations(), entries).expect("indexes in bounds");
    let segments = Segments::new(sources.clone(), kg.num_entities()).expect("sources in range");
    PrimalEdges {
        sources: Arc::new(sources),
        targets: Arc::new(targets),
        pair_relations: Arc::new(pair_relations),
        segments: Arc::new(segments),
    }
}

/// Everything a model needs to run on one graph, built once per dataset and
/// shared read-only across trials.
#[derive(Debug, Clone)]
pub struct GraphIndexes {
    pub num_entities: usize,
    pub num_relations: usize,
    pub incidence: RelationIncidence,
    /// Row-normalized head incidence (`|R|×|E|`), so that `heads_mean · X`
    /// averages each relation's distinct head entities.
    pub heads_mean: Arc<SparseMatrix>,
    pub tails_mean: Arc<SparseMatrix>,
    pub jaccard: Arc<Matrix>,
    pub jaccard_mask: Arc<Array2<bool>>,
    pub adjacency: NormalizedAdjacency,
    pub directed: DirectedAdjacency,
    pub primal: PrimalEdges,
}

impl GraphIndexes {
    pub fn build(kg: &KnowledgeGraph) -> Self {
        let incidence = kg.incidence();
        let (nr, ne) = (kg.num_relations(), kg.num_entities());
        let mean_matrix = |sets: &[Vec<usize>]| {
            let entries = sets
                .iter()
                .enumerate()
                .flat_map(|(r, s)| s.iter().map(move |&e| (r, e, 1.0)))
                .collect();
            Arc::new(
                SparseMatrix::from_triplets(nr, ne, entries)
                    .expect("indexes in bounds")
                    .row_normalized(),
            )
        };
        let heads_mean = mean_matrix(&incidence.heads);
        let tails_mean = mean_matrix(&incidence.tails);
        let jaccard = jaccard_relation_similarity(&incidence);
        let jaccard_mask = jaccard.mapv(|v| v > 0.0);
        Self {
            num_entities: ne,
            num_relations: nr,
            heads_mean,
            tails_mean,
            jaccard: Arc::new(jaccard),
            jaccard_mask: Arc::new(jaccard_mask),
            adjacency: build_normalized_adjacency(kg),
            directed: build_directed_row_normalized(kg),
            primal: build_primal_edges(kg),
            incidence,
        }
    }
}
