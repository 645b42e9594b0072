//! Losses, negative sampling and the full-batch training loop with early
//! stopping on validation Hits@1.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use log::{debug, info};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffmath::{adam_step, AdamState, Matrix, Tape, Tensor};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_model, CandidateSet, RankMetrics};
use crate::graphstore::{AlignmentPair, TrainingView};
use crate::models::{
    pair_similarity, similarity_matrix, Checkpoint, Correspondence, ForwardCtx, GraphInput, Model, ModelConfig,
    ModelOutput, SimilarityKind,
};

pub const DGMC_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub learning_rate: f64,
    pub margin: f64,
    pub negatives: usize,
    /// Epochs between negative refreshes.
    pub refresh_every: usize,
    pub hard_negatives: bool,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Scoring function of the margin loss and of evaluation.
    pub similarity: SimilarityKind,
    pub candidates: CandidateSet,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        Self {
            model,
            learning_rate: 1e-3,
            margin: 1.0,
            negatives: 10,
            refresh_every: 10,
            hard_negatives: true,
            max_epochs: 1000,
            patience: 20,
            seed: 0,
            similarity: SimilarityKind::L1Negative,
            candidates: CandidateSet::All,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::invalid(msg)) };
        check(self.margin > 0.0, "margin must be positive")?;
        check(self.negatives >= 1, "need at least one negative per positive")?;
        check(self.refresh_every >= 1, "refresh period must be at least one epoch")?;
        check(self.patience >= 1, "patience must be at least one epoch")?;
        check(
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            "learning rate must be positive",
        )?;
        check(
            !matches!(self.model, ModelConfig::ZeroShot),
            "the zero-shot baseline has nothing to train",
        )
    }
}

/// Negatives of every training pair: `right[p]` replaces the right entity of
/// pair `p`, `left[p]` its left entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeCache {
    pub left: Vec<Vec<usize>>,
    pub right: Vec<Vec<usize>>,
    pub refreshed_at: usize,
}

impl NegativeCache {
    /// Corrupted pairs and the index of the positive pair each belongs to.
    pub fn pairs(&self, positives: &[AlignmentPair]) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
        let mut li = Vec::new();
        let mut ri = Vec::new();
        let mut owner = Vec::new();
        for (p, &(l, r)) in positives.iter().enumerate() {
            for &n in &self.right[p] {
                li.push(l);
                ri.push(n);
                owner.push(p);
            }
            for &n in &self.left[p] {
                li.push(n);
                ri.push(r);
                owner.push(p);
            }
        }
        (li, ri, owner)
    }
}

/// Known counterparts of every entity among `pairs`, per side.
fn counterparts(pairs: &[AlignmentPair]) -> (HashMap<usize, HashSet<usize>>, HashMap<usize, HashSet<usize>>) {
    let mut of_left: HashMap<usize, HashSet<usize>> = HashMap::new();
    let mut of_right: HashMap<usize, HashSet<usize>> = HashMap::new();
    for &(l, r) in pairs {
        of_left.entry(l).or_default().insert(r);
        of_right.entry(r).or_default().insert(l);
    }
    (of_left, of_right)
}

fn top_excluding(scores: impl Iterator<Item = f64>, exclude: &HashSet<usize>, k: usize) -> Vec<usize> {
    let mut cand: Vec<(usize, f64)> = scores.enumerate().filter(|(j, _)| !exclude.contains(j)).collect();
    let cmp = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if k < cand.len() {
        cand.select_nth_unstable_by(k, cmp);
        cand.truncate(k);
    }
    cand.sort_by(cmp);
    cand.into_iter().map(|(j, _)| j).collect()
}

/// The `k` most similar non-matching entities of each side of each pair,
/// ties to the lowest index. Known counterparts of the anchor are never
/// returned.
pub fn mine_hard_negatives(
    left: &Matrix,
    right: &Matrix,
    pairs: &[AlignmentPair],
    k: usize,
    kind: SimilarityKind,
) -> Result<NegativeCache> {
    let anchors_left = Matrix::from_shape_fn((pairs.len(), left.ncols()), |(p, c)| left[[pairs[p].0, c]]);
    let anchors_right = Matrix::from_shape_fn((pairs.len(), right.ncols()), |(p, c)| right[[pairs[p].1, c]]);
    let vs_right = similarity_matrix(&anchors_left, right, kind)?;
    let vs_left = similarity_matrix(&anchors_right, left, kind)?;
    let (of_left, of_right) = counterparts(pairs);
    let mut cache = NegativeCache {
        left: Vec::with_capacity(pairs.len()),
        right: Vec::with_capacity(pairs.len()),
        refreshed_at: 0,
    };
    for (p, &(l, r)) in pairs.iter().enumerate() {
        cache
            .right
            .push(top_excluding(vs_right.row(p).iter().copied(), &of_left[&l], k));
        cache
            .left
            .push(top_excluding(vs_left.row(p).iter().copied(), &of_right[&r], k));
    }
    Ok(cache)
}

/// Uniformly drawn non-matching negatives.
pub fn random_negatives<R: Rng + ?Sized>(
    n_left: usize,
    n_right: usize,
    pairs: &[AlignmentPair],
    k: usize,
    rng: &mut R,
) -> NegativeCache {
    let (of_left, of_right) = counterparts(pairs);
    let draw = |n: usize, exclude: &HashSet<usize>, rng: &mut R| -> Vec<usize> {
        let pool: Vec<usize> = (0..n).filter(|j| !exclude.contains(j)).collect();
        let take = k.min(pool.len());
        let mut picked: Vec<usize> = sample(rng, pool.len(), take).into_iter().map(|i| pool[i]).collect();
        picked.sort_unstable();
        picked
    };
    let mut cache = NegativeCache {
        left: Vec::with_capacity(pairs.len()),
        right: Vec::with_capacity(pairs.len()),
        refreshed_at: 0,
    };
    for &(l, r) in pairs {
        cache.right.push(draw(n_right, &of_left[&l], rng));
        cache.left.push(draw(n_left, &of_right[&r], rng));
    }
    cache
}

/// Mean hinge `max(0, γ + s(neg) - s(pos))` over all (positive, negative)
/// terms. `owners[t]` is the positive of negative score `t`.
pub fn margin_loss_from_scores<'t>(
    positive: &Tensor<'t>,
    negative: &Tensor<'t>,
    owners: &Arc<Vec<usize>>,
    gamma: f64,
) -> Result<Tensor<'t>> {
    if positive.shape().0 == 0 {
        return Err(Error::EmptyInput("margin loss without positives".into()));
    }
    if owners.is_empty() {
        return Err(Error::EmptyInput("margin loss without negatives".into()));
    }
    let pos = positive.gather_rows(owners)?;
    Ok(negative.sub(&pos)?.add_scalar(gamma).relu().mean())
}

/// Margin loss of `positives` against the cached negatives under `kind`.
pub fn margin_loss<'t>(
    left: &Tensor<'t>,
    right: &Tensor<'t>,
    positives: &[AlignmentPair],
    negatives: &NegativeCache,
    kind: SimilarityKind,
    gamma: f64,
) -> Result<Tensor<'t>> {
    if positives.is_empty() {
        return Err(Error::EmptyInput("margin loss without positives".into()));
    }
    let pl = Arc::new(positives.iter().map(|p| p.0).collect::<Vec<_>>());
    let pr = Arc::new(positives.iter().map(|p| p.1).collect::<Vec<_>>());
    let (nl, nr, owners) = negatives.pairs(positives);
    let pos = pair_similarity(left, right, &pl, &pr, kind)?;
    let neg = pair_similarity(left, right, &Arc::new(nl), &Arc::new(nr), kind)?;
    margin_loss_from_scores(&pos, &neg, &Arc::new(owners), gamma)
}

/// Mean of `-log(S_ij + ε)` over `pairs`; pairs outside the support of `S`
/// contribute the constant `-log ε`.
pub fn dgmc_loss<'t>(s: &Correspondence<'t>, pairs: &[AlignmentPair]) -> Result<Tensor<'t>> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("DGMC loss without pairs".into()));
    }
    let mut inside = Vec::new();
    let mut outside = 0usize;
    for &(i, j) in pairs {
        match s.position(i, j) {
            Some(k) => inside.push(k),
            None => outside += 1,
        }
    }
    let n = pairs.len() as f64;
    let penalty = outside as f64 * -DGMC_EPSILON.ln();
    let tape = s.values.tape();
    let total = if inside.is_empty() {
        tape.constant(Matrix::from_elem((1, 1), penalty))
    } else {
        s.values
            .gather_rows(&Arc::new(inside))?
            .add_scalar(DGMC_EPSILON)
            .ln()
            .neg()
            .sum()
            .add_scalar(penalty)
    };
    Ok(total.scale(1.0 / n))
}

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub config: TrainConfig,
    /// Validation Hits@1 before the first update.
    pub initial_validation_hits1: f64,
    /// Validation Hits@1 after each epoch; entry `e` belongs to epoch `e + 1`.
    pub history: Vec<f64>,
    pub loss_history: Vec<f64>,
    /// 1-based epoch of the first maximum of `history`.
    pub best_epoch: usize,
    pub best_validation: RankMetrics,
    pub stopped_early: bool,
    /// Where the best checkpoint was written, if anywhere.
    pub checkpoint: Option<String>,
    /// Test metrics; filled only for selected trials.
    pub test: Option<RankMetrics>,
}

impl TrialRecord {
    pub fn best_validation_hits1(&self) -> f64 {
        self.history[self.best_epoch - 1]
    }
}

/// A trained model restored to its best epoch, with its record.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub record: TrialRecord,
    pub model: Model,
    pub checkpoint: Checkpoint,
}

/// Patience-based stopping on a score where higher is better. The best
/// epoch is the first occurrence of the maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    epochs: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            epochs: 0,
            best: None,
            stale: 0,
        }
    }

    /// Records the score of the next epoch; returns whether it is a new best.
    pub fn observe(&mut self, value: f64) -> bool {
        self.epochs += 1;
        if self.best.is_none_or(|(_, b)| value > b) {
            self.best = Some((self.epochs, value));
            self.stale = 0;
            true
        } else {
            self.stale += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.stale >= self.patience
    }

    /// 1-based epoch of the best score.
    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|b| b.0)
    }
}

/// Derives an independent stream seed.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_INIT: u64 = 1;
const STREAM_EPOCH: u64 = 2;
const STREAM_EVAL: u64 = 3;
const STREAM_NEGATIVES: u64 = 4;

/// Seed of the inference pass used for validation and test scoring.
pub fn eval_seed(config: &TrainConfig) -> u64 {
    derive_seed(config.seed, STREAM_EVAL, 0)
}

/// Trains a fresh model on `view.train`, evaluating `view.validation` after
/// every epoch, and returns it restored to the best epoch.
pub fn train(
    left: GraphInput<'_>,
    right: GraphInput<'_>,
    view: TrainingView<'_>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if view.train.is_empty() {
        return Err(Error::EmptyInput("no training alignments".into()));
    }
    let mut model = Model::new(
        &config.model,
        left.features,
        right.features,
        derive_seed(config.seed, STREAM_INIT, 0),
    )?;
    let eval = eval_seed(config);
    let validate = |m: &Model| {
        evaluate_model(
            m,
            left,
            right,
            view.validation,
            config.similarity,
            eval,
            config.candidates,
        )
    };
    let initial = validate(&model)?;
    let mut adam = AdamState::new(config.learning_rate);
    let mut neg_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, STREAM_NEGATIVES, 0));
    let mut negatives: Option<NegativeCache> = None;
    let mut history = Vec::new();
    let mut losses = Vec::new();
    let mut stopping = EarlyStopping::new(config.patience);
    let mut best: Option<(f64, RankMetrics, Checkpoint)> = None;
    let mut stopped_early = false;

    for epoch in 0..config.max_epochs {
        let tape = Tape::new();
        let store = model.store().expect("trainable model");
        let bound = store.bind(&tape, true);
        let mut ctx = ForwardCtx::train(derive_seed(config.seed, STREAM_EPOCH, epoch as u64));
        let out = model.forward(&tape, Some(&bound), left, right, &mut ctx, view.train)?;
        let loss = match &out {
            ModelOutput::Embeddings(e) => {
                if epoch % config.refresh_every == 0 || negatives.is_none() {
                    let mut cache = if config.hard_negatives {
                        mine_hard_negatives(
                            &e.left.value(),
                            &e.right.value(),
                            view.train,
                            config.negatives,
                            config.similarity,
                        )?
                    } else {
                        random_negatives(
                            left.graph.num_entities,
                            right.graph.num_entities,
                            view.train,
                            config.negatives,
                            &mut neg_rng,
                        )
                    };
                    cache.refreshed_at = epoch;
                    negatives = Some(cache);
                }
                let cache = negatives.as_ref().expect("negatives mined");
                margin_loss(&e.left, &e.right, view.train, cache, config.similarity, config.margin)?
            }
            ModelOutput::Correspondence(o) => {
                dgmc_loss(&o.initial, view.train)?.add(&dgmc_loss(&o.refined, view.train)?)?
            }
        };
        let loss_value = loss.scalar();
        if !loss_value.is_finite() {
            let origin = tape.first_non_finite().unwrap_or("unknown operation");
            return Err(Error::TrainingAborted(format!(
                "non-finite loss {loss_value} at epoch {} (first produced by {origin})",
                epoch + 1
            )));
        }
        let grads = tape.backward(&loss)?;
        let grad_values: Vec<Matrix> = bound.tensors().iter().map(|t| grads.wrt(t)).collect();
        drop(bound);
        drop(out);
        let store = model.store_mut().expect("trainable model");
        let mut params: Vec<&mut Matrix> = store.values_mut().collect();
        adam_step(&mut params, &grad_values, &mut adam)?;
        ctx.apply_batch_stats(model.bn_states_mut());

        let metrics = validate(&model)?;
        let h1 = metrics.hits1();
        debug!("epoch {}: loss {loss_value:.6}, validation H@1 {h1:.4}", epoch + 1);
        history.push(h1);
        losses.push(loss_value);
        if stopping.observe(h1) {
            best = Some((h1, metrics, Checkpoint::capture(&model)));
        } else if stopping.should_stop() {
            stopped_early = true;
            break;
        }
    }
    let (Some((best_h1, best_validation, checkpoint)), Some(best_epoch)) = (best, stopping.best_epoch()) else {
        return Err(Error::TrainingAborted("no epochs were run".into()));
    };
    checkpoint.restore(&mut model)?;
    info!(
        "{}: best validation H@1 {best_h1:.4} at epoch {best_epoch} of {}",
        config.model.name(),
        history.len()
    );
    Ok(TrainOutcome {
        record: TrialRecord {
            config: config.clone(),
            initial_validation_hits1: initial.hits1(),
            history,
            loss_history: losses,
            best_epoch,
            best_validation,
            stopped_early,
            checkpoint: None,
            test: None,
        },
        model,
        checkpoint,
    })
}
