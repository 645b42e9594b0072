//! Ranking metrics for entity alignment: Hits@k and MRR in both directions.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use ndarray::ArrayView1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffmath::Matrix;
use crate::error::{Error, Result};
use crate::graphstore::AlignmentPair;
use crate::models::{similarity_matrix, GraphInput, Model, SimilarityKind};

/// How a match tied with other candidates is ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TiePolicy {
    /// Best position among the tied candidates.
    Optimistic,
    /// Worst position among the tied candidates.
    Pessimistic,
    /// Mean of the optimistic and pessimistic ranks.
    Realistic,
}

/// Which entities compete with the true match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateSet {
    /// Every entity of the opposite graph.
    #[default]
    All,
    /// Only opposite-side entities occurring in the evaluated pairs.
    AlignedOnly,
}

/// Rank of `scores[matched]` among `candidates` (all entries if `None`).
pub fn rank_of_match(
    scores: ArrayView1<'_, f64>,
    matched: usize,
    policy: TiePolicy,
    candidates: Option<&[usize]>,
) -> Result<f64> {
    if matched >= scores.len() {
        return Err(Error::invalid(format!(
            "match index {matched} out of range for {} candidates",
            scores.len()
        )));
    }
    let target = scores[matched];
    let mut better = 0usize;
    let mut tied = 0usize;
    let mut visit = |j: usize, s: f64| -> Result<()> {
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("score of candidate {j}")));
        }
        if j != matched {
            if s > target {
                better += 1;
            } else if s == target {
                tied += 1;
            }
        }
        Ok(())
    };
    match candidates {
        None => {
            for (j, &s) in scores.iter().enumerate() {
                visit(j, s)?;
            }
        }
        Some(c) => {
            for &j in c {
                visit(j, scores[j])?;
            }
            if !target.is_finite() {
                return Err(Error::NonFinite(format!("score of candidate {matched}")));
            }
        }
    }
    let best = 1.0 + better as f64;
    Ok(match policy {
        TiePolicy::Optimistic => best,
        TiePolicy::Pessimistic => best + tied as f64,
        TiePolicy::Realistic => best + tied as f64 / 2.0,
    })
}

/// Hits@1, Hits@10 and MRR of one direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionMetrics {
    pub hits1: f64,
    pub hits10: f64,
    pub mrr: f64,
}

impl DirectionMetrics {
    fn from_ranks(ranks: &[f64]) -> Self {
        let n = ranks.len() as f64;
        let mut h1 = 0usize;
        let mut h10 = 0usize;
        let mut rr = 0.0;
        for &r in ranks {
            h1 += usize::from(r <= 1.0);
            h10 += usize::from(r <= 10.0);
            rr += 1.0 / r;
        }
        Self {
            hits1: h1 as f64 / n,
            hits10: h10 as f64 / n,
            mrr: rr / n,
        }
    }

    fn mean(a: &Self, b: &Self) -> Self {
        Self {
            hits1: (a.hits1 + b.hits1) / 2.0,
            hits10: (a.hits10 + b.hits10) / 2.0,
            mrr: (a.mrr + b.mrr) / 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankMetrics {
    pub left_to_right: DirectionMetrics,
    pub right_to_left: DirectionMetrics,
    pub mean: DirectionMetrics,
    pub pairs: usize,
    pub tie_policy: TiePolicy,
    pub candidates: CandidateSet,
}

impl RankMetrics {
    /// Mean Hits@1 of both directions, the number used for model selection.
    pub fn hits1(&self) -> f64 {
        self.mean.hits1
    }
}

struct Prepared<'a> {
    pairs: &'a [AlignmentPair],
    right_candidates: Option<Vec<usize>>,
    left_candidates: Option<Vec<usize>>,
}

fn prepare<'a>(scores: &Matrix, pairs: &'a [AlignmentPair], candidates: CandidateSet) -> Result<Prepared<'a>> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no alignment pairs to evaluate".into()));
    }
    let (n, m) = scores.dim();
    if let Some(&(l, r)) = pairs.iter().find(|&&(l, r)| l >= n || r >= m) {
        return Err(Error::invalid(format!(
            "pair ({l}, {r}) outside the {n}x{m} score matrix"
        )));
    }
    let (left_candidates, right_candidates) = match candidates {
        CandidateSet::All => (None, None),
        CandidateSet::AlignedOnly => {
            let l: BTreeSet<usize> = pairs.iter().map(|p| p.0).collect();
            let r: BTreeSet<usize> = pairs.iter().map(|p| p.1).collect();
            (Some(l.into_iter().collect()), Some(r.into_iter().collect()))
        }
    };
    Ok(Prepared {
        pairs,
        right_candidates,
        left_candidates,
    })
}

fn rank_pair(scores: &Matrix, p: &Prepared<'_>, k: usize, forward: bool) -> Result<f64> {
    let (l, r) = p.pairs[k];
    if forward {
        rank_of_match(scores.row(l), r, TiePolicy::Realistic, p.right_candidates.as_deref())
    } else {
        rank_of_match(scores.column(r), l, TiePolicy::Realistic, p.left_candidates.as_deref())
    }
}

fn assemble(fwd: &[f64], bwd: &[f64], candidates: CandidateSet) -> RankMetrics {
    let left_to_right = DirectionMetrics::from_ranks(fwd);
    let right_to_left = DirectionMetrics::from_ranks(bwd);
    RankMetrics {
        mean: DirectionMetrics::mean(&left_to_right, &right_to_left),
        left_to_right,
        right_to_left,
        pairs: fwd.len(),
        tie_policy: TiePolicy::Realistic,
        candidates,
    }
}

/// Metrics of `pairs` under `scores` (`|left| × |right|`, higher is better),
/// with realistic tie handling. Left-to-right ranks the rows, right-to-left
/// the columns.
pub fn rank_metrics(scores: &Matrix, pairs: &[AlignmentPair], candidates: CandidateSet) -> Result<RankMetrics> {
    let p = prepare(scores, pairs, candidates)?;
    let fwd = (0..pairs.len())
        .map(|k| rank_pair(scores, &p, k, true))
        .collect::<Result<Vec<_>>>()?;
    let bwd = (0..pairs.len())
        .map(|k| rank_pair(scores, &p, k, false))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(&fwd, &bwd, candidates))
}

/// As [`rank_metrics`], ranking pairs in parallel. Ranks are reduced in
/// pair order, so results are bitwise identical to the serial path.
pub fn rank_metrics_parallel(
    scores: &Matrix,
    pairs: &[AlignmentPair],
    candidates: CandidateSet,
) -> Result<RankMetrics> {
    let p = prepare(scores, pairs, candidates)?;
    let fwd = (0..pairs.len())
        .into_par_iter()
        .map(|k| rank_pair(scores, &p, k, true))
        .collect::<Result<Vec<_>>>()?;
    let bwd = (0..pairs.len())
        .into_par_iter()
        .map(|k| rank_pair(scores, &p, k, false))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(&fwd, &bwd, candidates))
}

/// Zero-shot evaluation of fixed representations.
pub fn evaluate_embeddings(
    left: &Matrix,
    right: &Matrix,
    pairs: &[AlignmentPair],
    kind: SimilarityKind,
    candidates: CandidateSet,
) -> Result<RankMetrics> {
    let scores = similarity_matrix(left, right, kind)?;
    rank_metrics_parallel(&scores, pairs, candidates)
}

/// Inference-mode evaluation of a model on `pairs`.
pub fn evaluate_model(
    model: &Model,
    left: GraphInput<'_>,
    right: GraphInput<'_>,
    pairs: &[AlignmentPair],
    kind: SimilarityKind,
    eval_seed: u64,
    candidates: CandidateSet,
) -> Result<RankMetrics> {
    let scores = model.score_matrix(left, right, kind, eval_seed)?;
    rank_metrics_parallel(&scores, pairs, candidates)
}

/// One line of a metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub dataset: String,
    pub subset: String,
    pub model: String,
    pub init: String,
    pub metrics: RankMetrics,
}

pub const METRICS_HEADER: &str =
    "dataset\tsubset\tmodel\tinit\tH@1 l-r\tH@10 l-r\tMRR l-r\tH@1 r-l\tH@10 r-l\tMRR r-l\tH@1\tH@10\tMRR";

/// Tab-separated table with percentages to two decimals.
pub fn metrics_table(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for row in rows {
        let m = &row.metrics;
        let _ = write!(out, "{}\t{}\t{}\t{}", row.dataset, row.subset, row.model, row.init);
        for d in [&m.left_to_right, &m.right_to_left, &m.mean] {
            let _ = write!(
                out,
                "\t{:.2}\t{:.2}\t{:.2}",
                100.0 * d.hits1,
                100.0 * d.hits10,
                100.0 * d.mrr
            );
        }
        out.push('\n');
    }
    out
}
