//! Oracles and fixtures shared by the integration tests and the acceptance
//! suite.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use kgalign_core::diffmath::{
    batch_norm, dropout, grad_check, Activation, BatchNormState, Matrix, Segments, SparseMatrix, Tape, Tensor,
};
use kgalign_core::graphstore::{AlignmentPair, GraphIndexes, KnowledgeGraph};
use kgalign_core::models::{
    pair_similarity, Bound, Correspondence, DgmcConfig, ForwardCtx, GcnAlignConfig, GraphInput, Model, ModelConfig,
    ModelOutput, NormalizationMode, RdgcnConfig, RdgcnModel, SimilarityKind,
};
use kgalign_core::synthetic::random_graph;
use kgalign_core::training::{dgmc_loss, margin_loss, NegativeCache};
use kgalign_core::Result;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRAD_EPS: f64 = 1e-5;

pub type OpFn = Box<dyn for<'t> Fn(&'t Tape, Tensor<'t>) -> Result<Tensor<'t>>>;

fn op<F>(f: F) -> OpFn
where
    F: for<'t> Fn(&'t Tape, Tensor<'t>) -> Result<Tensor<'t>> + 'static,
{
    Box::new(f)
}

/// One finite-difference case: a scalar function of `input`.
pub struct GradCase {
    pub name: String,
    pub input: Matrix,
    pub f: OpFn,
}

impl GradCase {
    fn new(name: impl Into<String>, input: Matrix, f: OpFn) -> Self {
        Self {
            name: name.into(),
            input,
            f,
        }
    }

    pub fn error(&self) -> Result<f64> {
        grad_check(&*self.f, &self.input, GRAD_EPS)
    }
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, low: f64, high: f64) -> Matrix {
    Matrix::from_shape_simple_fn((rows, cols), || rng.random_range(low..high))
}

/// Like [`uniform`] on (-1, 1), but keeps every entry at least 0.01 from zero so
/// central differences never straddle the kink of relu, abs and friends.
pub fn off_kink(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    uniform(rng, rows, cols, -1.0, 1.0).mapv(|v| if v.abs() < 0.01 { v + 0.02f64.copysign(v) } else { v })
}

/// Fixed, non-symmetric readout weights so every output entry matters.
pub fn readout_weights(rows: usize, cols: usize) -> Matrix {
    Matrix::from_shape_fn((rows, cols), |(i, j)| (1.0 + 0.7 * i as f64 + 1.3 * j as f64).sin())
}

pub fn readout<'t>(tape: &'t Tape, y: Tensor<'t>) -> Result<Tensor<'t>> {
    let (r, c) = y.shape();
    Ok(y.mul(&tape.constant(readout_weights(r, c)))?.sum())
}

fn random_sparse(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Arc<SparseMatrix> {
    let mut entries = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if rng.random_bool(0.5) {
                entries.push((r, c, rng.random_range(-1.0..1.0)));
            }
        }
    }
    Arc::new(SparseMatrix::from_triplets(rows, cols, entries).unwrap())
}

fn random_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Arc<Array2<bool>> {
    let mut mask = Array2::from_shape_simple_fn((rows, cols), || rng.random_bool(0.6));
    for r in 0..rows {
        let keep = rng.random_range(0..cols);
        mask[[r, keep]] = true;
    }
    Arc::new(mask)
}

/// Every differentiable tensor operation plus the losses, on random inputs
/// drawn from `seed`.
pub fn op_cases(seed: u64) -> Vec<GradCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=6);
    let m = rng.random_range(2..=5);
    let k = rng.random_range(1..=4);
    let mut cases = Vec::new();
    let mut x = || off_kink(&mut rng, n, m);
    let (x0, x1, x2) = (x(), x(), x());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let other = off_kink(&mut rng, n, m);
    let row = off_kink(&mut rng, 1, m);
    let col = off_kink(&mut rng, n, 1);
    let positive = uniform(&mut rng, n, m, 0.5, 2.0);

    let b = uniform(&mut rng, m, k, -1.0, 1.0);
    cases.push(GradCase::new(
        "matmul (left)",
        x0.clone(),
        op(move |t: &Tape, x: Tensor<'_>| readout(t, x.matmul(&t.constant(b.clone()))?)),
    ));
    let a = uniform(&mut rng, k, n, -1.0, 1.0);
    cases.push(GradCase::new(
        "matmul (right)",
        x1.clone(),
        op(move |t: &Tape, x: Tensor<'_>| readout(t, t.constant(a.clone()).matmul(&x)?)),
    ));
    let s = random_sparse(&mut rng, k + 1, n);
    cases.push(GradCase::new(
        "sparse_matmul",
        x2.clone(),
        op(move |t: &Tape, x: Tensor<'_>| readout(t, x.sparse_matmul(&s)?)),
    ));
    cases.push(GradCase::new(
        "transpose",
        x0.clone(),
        op(|t: &Tape, x: Tensor<'_>| readout(t, x.t())),
    ));
    let c = other.clone();
    cases.push(GradCase::new(
        "add",
        x1.clone(),
        op(move |t: &Tape, x: Tensor<'_>| readout(t, x.add(&t.constant(c.clone()))?)),
    ));
    let c = other.clone();
    cases.push(GradCase::new(
        "sub",
        x2.clone(),
        op(move |t: &Tape, x: Tensor<'_>| readout(t, t.constant(c.clone()).sub(&x)?)),
    ));
    cases.push(GradCase::new(
        "mul",
        x0.clone(),
        op(|t: &Tape, x: Tensor<'_>| readout(t, x.mul(&x)?)),
    ));
    let r = row.clone();
    cases.push(GradCase::new(
        "add_row (matrix)",
        x1.clone(),
        op(move |t: &Tape, x: Tensor<'_>| readout(t, x.add_row(&t.constant(r.clone()))?)),
    ));
    let c = other.clone();
    cases.push(GradCase::new(
        "add_row (row)",
        row.clone(),
        op(move |t: &Tape, x: Tensor<'_>| readout(t, t.constant(c.clone()).add_row(&x)?)),
    ));
    let r = row.clone();
    cases.push(GradCase::new(
        "mul_row (matrix)",
        x2.clone(),
        op(move |t: &Tape, x: Tensor<'_>| readout(t, x.mul_row(&t.constant(r.clone()))?)),
    ));
    let c = other.clone();
    cases.push(GradCase::new(
        "mul_row (row)",
        row.clone(),
        op(move |t: &Tape, x: Tensor<'_>| readout(t, t.constant(c.clone()).mul_row(&x)?)),
    ));
    let cl = col.clone();
    cases.push(GradCase::new(
        "mul_col (matrix)",
        x0.clone(),
        op(move |t: &Tape, x: Tensor<'_>| readout(t, x.mul_col(&t.constant(cl.clone()))?)),
    ));
    let c = other.clone();
    cases.push(GradCase::new(
        "mul_col (column)",
        col.clone(),
        op(move |t: &Tape, x: Tensor<'_>| readout(t, t.constant(c.clone()).mul_col(&x)?)),
    ));
    let b = uniform(&mut rng, k + 1, 1, -1.0, 1.0);
    cases.push(GradCase::new(
        "outer_add (left)",
        col.clone(),
        op(move |t: &Tape, x: Tensor<'_>| readout(t, x.outer_add(&t.constant(b.clone()))?)),
    ));
    let b = uniform(&mut rng, k + 1, 1, -1.0, 1.0);
    cases.push(GradCase::new(
        "outer_add (right)",
        col.clone(),
        op(move |t: &Tape, x: Tensor<'_>| readout(t, t.constant(b.clone()).outer_add(&x)?)),
    ));
    cases.push(GradCase::new(
        "scale",
        x1.clone(),
        op(|t: &Tape, x: Tensor<'_>| readout(t, x.scale(-2.5))),
    ));
    cases.push(GradCase::new(
        "neg",
        x2.clone(),
        op(|t: &Tape, x: Tensor<'_>| readout(t, x.neg())),
    ));
    cases.push(GradCase::new(
        "add_scalar",
        x0.clone(),
        op(|t: &Tape, x: Tensor<'_>| readout(t, x.add_scalar(0.3).mul(&x)?)),
    ));
    cases.push(GradCase::new(
        "relu",
        x1.clone(),
        op(|t: &Tape, x: Tensor<'_>| readout(t, x.relu())),
    ));
    cases.push(GradCase::new(
        "leaky_relu",
        x2.clone(),
        op(|t: &Tape, x: Tensor<'_>| readout(t, x.leaky_relu(Activation::DEFAULT_LEAKY_SLOPE))),
    ));
    cases.push(GradCase::new(
        "sigmoid",
        x0.clone(),
        op(|t: &Tape, x: Tensor<'_>| readout(t, x.sigmoid())),
    ));
    cases.push(GradCase::new(
        "exp",
        x1.clone(),
        op(|t: &Tape, x: Tensor<'_>| readout(t, x.exp())),
    ));
    cases.push(GradCase::new(
        "ln",
        positive.clone(),
        op(|t: &Tape, x: Tensor<'_>| readout(t, x.ln())),
    ));
    cases.push(GradCase::new(
        "abs",
        x2.clone(),
        op(|t: &Tape, x: Tensor<'_>| readout(t, x.abs())),
    ));
    cases.push(GradCase::new(
        "sqrt",
        positive.clone(),
        op(|t: &Tape, x: Tensor<'_>| readout(t, x.sqrt())),
    ));
    cases.push(GradCase::new(
        "recip",
        positive.clone(),
        op(|t: &Tape, x: Tensor<'_>| readout(t, x.recip())),
    ));
    let mask = random_mask(&mut rng, n, m);
    cases.push(GradCase::new(
        "masked_row_softmax",
        x0.clone(),
        op(move |t: &Tape, x: Tensor<'_>| readout(t, x.masked_row_softmax(&mask)?)),
    ));
    let entries = rng.random_range(2..=12);
    let groups = rng.random_range(1..=4);
    let seg = Arc::new(Segments::new((0..entries).map(|_| rng.random_range(0..groups)).collect(), groups).unwrap());
    let logits = uniform(&mut rng, entries, 1, -2.0, 2.0);
    cases.push(GradCase::new(
        "segment_softmax",
        logits.clone(),
        op(move |t: &Tape, x: Tensor<'_>| readout(t, x.segment_softmax(&seg)?)),
    ));
    let idx = Arc::new((0..n + 2).map(|_| rng.random_range(0..n)).collect::<Vec<_>>());
    let gather = Arc::clone(&idx);
    cases.push(GradCase::new(
        "gather_rows",
        x1.clone(),
        op(move |t: &Tape, x: Tensor<'_>| readout(t, x.gather_rows(&gather)?)),
    ));
    let target = Arc::new((0..n).map(|_| rng.random_range(0..k + 1)).collect::<Vec<_>>());
    cases.push(GradCase::new(
        "scatter_add_rows",
        x2.clone(),
        op(move |t: &Tape, x: Tensor<'_>| readout(t, x.scatter_add_rows(&target, k + 1)?)),
    ));
    cases.push(GradCase::new(
        "row_sum",
        x0.clone(),
        op(|t: &Tape, x: Tensor<'_>| readout(t, x.row_sum())),
    ));
    cases.push(GradCase::new(
        "sum",
        x1.clone(),
        op(|t: &Tape, x: Tensor<'_>| readout(t, x.mul(&x)?.sum())),
    ));
    cases.push(GradCase::new(
        "mean",
        x2.clone(),
        op(|t: &Tape, x: Tensor<'_>| readout(t, x.exp().mean())),
    ));
    let c = other.clone();
    cases.push(GradCase::new(
        "concat_cols",
        x0.clone(),
        op(move |t: &Tape, x: Tensor<'_>| readout(t, t.constant(c.clone()).concat_cols(&x)?.concat_cols(&x)?)),
    ));
    cases.push(GradCase::new(
        "l2_normalize_rows",
        x1.clone(),
        op(|t: &Tape, x: Tensor<'_>| readout(t, x.l2_normalize_rows())),
    ));
    cases.push(GradCase::new(
        "l1_normalize_rows",
        x2.clone(),
        op(|t: &Tape, x: Tensor<'_>| readout(t, x.l1_normalize_rows())),
    ));
    cases.push(GradCase::new(
        "standardize_columns",
        x0.clone(),
        op(|t: &Tape, x: Tensor<'_>| readout(t, x.standardize_columns(1e-5).0)),
    ));

    let gamma = uniform(&mut rng, 1, m, 0.5, 1.5);
    let beta = uniform(&mut rng, 1, m, -0.5, 0.5);
    let (g, b) = (gamma.clone(), beta.clone());
    cases.push(GradCase::new(
        "batch_norm (input)",
        x1.clone(),
        op(move |t: &Tape, x: Tensor<'_>| {
            let state = BatchNormState::new(x.shape().1);
            let (y, _) = batch_norm(&x, &t.constant(g.clone()), &t.constant(b.clone()), &state, true)?;
            readout(t, y)
        }),
    ));
    let (c, b) = (x2.clone(), beta.clone());
    cases.push(GradCase::new(
        "batch_norm (scale)",
        gamma.clone(),
        op(move |t: &Tape, g: Tensor<'_>| {
            let state = BatchNormState::new(g.shape().1);
            let (y, _) = batch_norm(&t.constant(c.clone()), &g, &t.constant(b.clone()), &state, true)?;
            readout(t, y)
        }),
    ));
    let (c, g) = (x0.clone(), gamma.clone());
    cases.push(GradCase::new(
        "batch_norm (shift)",
        beta.clone(),
        op(move |t: &Tape, b: Tensor<'_>| {
            let state = BatchNormState::new(b.shape().1);
            let (y, _) = batch_norm(&t.constant(c.clone()), &t.constant(g.clone()), &b, &state, true)?;
            readout(t, y)
        }),
    ));
    let drop_seed = rng.random();
    cases.push(GradCase::new(
        "dropout",
        x1.clone(),
        op(move |t: &Tape, x: Tensor<'_>| {
            let mut r = ChaCha8Rng::seed_from_u64(drop_seed);
            readout(t, dropout(&x, 0.3, &mut r)?)
        }),
    ));

    let right = uniform(&mut rng, n + 1, m, -1.0, 1.0);
    let li = Arc::new((0..n + 3).map(|_| rng.random_range(0..n)).collect::<Vec<_>>());
    let ri = Arc::new((0..n + 3).map(|_| rng.random_range(0..n + 1)).collect::<Vec<_>>());
    for kind in SimilarityKind::ALL {
        let (r, li, ri) = (right.clone(), Arc::clone(&li), Arc::clone(&ri));
        cases.push(GradCase::new(
            format!("pair_similarity ({kind})"),
            x2.clone(),
            op(move |t: &Tape, x: Tensor<'_>| readout(t, pair_similarity(&x, &t.constant(r.clone()), &li, &ri, kind)?)),
        ));
    }

    let positives: Vec<AlignmentPair> = (0..n.min(n + 1)).map(|i| (i, (i + 1) % (n + 1))).collect();
    let negatives = NegativeCache {
        left: positives.iter().map(|_| vec![rng.random_range(0..n)]).collect(),
        right: positives
            .iter()
            .map(|_| vec![rng.random_range(0..n + 1), rng.random_range(0..n + 1)])
            .collect(),
        refreshed_at: 0,
    };
    for kind in [SimilarityKind::L2Negative, SimilarityKind::Cos] {
        let (r, pos, neg) = (right.clone(), positives.clone(), negatives.clone());
        // A large margin keeps every hinge term active, away from its kink.
        cases.push(GradCase::new(
            format!("margin_loss ({kind})"),
            x0.clone(),
            op(move |t: &Tape, x: Tensor<'_>| margin_loss(&x, &t.constant(r.clone()), &pos, &neg, kind, 10.0)),
        ));
    }

    let n_right = rng.random_range(2..=5);
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    for i in 0..n {
        let mut js: Vec<usize> = (0..n_right).collect();
        js.shuffle(&mut rng);
        for &j in &js[..rng.random_range(1..=n_right)] {
            rows.push(i);
            cols.push(j);
        }
    }
    let pairs: Vec<AlignmentPair> = (0..n)
        .map(|i| (i, cols[rows.iter().position(|&r| r == i).unwrap()]))
        .collect();
    let corr_logits = uniform(&mut rng, rows.len(), 1, -1.0, 1.0);
    let (rows, cols) = (Arc::new(rows), Arc::new(cols));
    let segments = Arc::new(Segments::new(rows.to_vec(), n).unwrap());
    cases.push(GradCase::new(
        "dgmc_loss",
        corr_logits,
        op(move |_: &Tape, x: Tensor<'_>| {
            let s = Correspondence {
                rows: Arc::clone(&rows),
                cols: Arc::clone(&cols),
                segments: Arc::clone(&segments),
                n_right,
                values: x.segment_softmax(&segments)?,
            };
            dgmc_loss(&s, &pairs)
        }),
    ));
    cases
}

/// Random graph with at most ten entities and six relations.
pub fn small_graph(seed: u64) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=10);
    let r = rng.random_range(1..=6);
    let t = rng.random_range(r..=(3 * n).clamp(r, n * (n - 1) * r));
    random_graph("e", n, r, t, &mut rng).unwrap()
}

/// Finite-difference errors of every parameter of one model forward, on a
/// pair of small random graphs.
pub fn model_grad_errors(config: &ModelConfig, seed: u64) -> Result<Vec<(String, f64)>> {
    let (gl, gr) = (small_graph(seed), small_graph(seed + 10_000));
    let (il, ir) = (GraphIndexes::build(&gl), GraphIndexes::build(&gr));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = match config {
        ModelConfig::Rdgcn(c) => c.dim,
        ModelConfig::GcnAlign(c) => c.in_dim,
        ModelConfig::Dgmc(c) => c.in_dim,
        ModelConfig::ZeroShot => 1,
    };
    let fl = uniform(&mut rng, il.num_entities, dim, -1.0, 1.0);
    let fr = uniform(&mut rng, ir.num_entities, dim, -1.0, 1.0);
    let (l, r) = (GraphInput::new(&fl, &il)?, GraphInput::new(&fr, &ir)?);
    let pairs: Vec<AlignmentPair> = (0..il.num_entities.min(ir.num_entities)).map(|i| (i, i)).collect();
    let mut model = Model::new(config, &fl, &fr, seed)?;
    // Spread every parameter away from its initialization (zero biases,
    // unit diagonals) so no operation sits at a special point.
    if let Some(store) = model.store_mut() {
        for v in store.values_mut() {
            v.mapv_inplace(|a| a + rng.random_range(-0.5..0.5));
        }
    }
    let store = model.store().expect("trainable model").clone();
    let names = store.names().to_vec();
    let mut errors = Vec::new();
    for (pi, name) in names.iter().enumerate() {
        let err = grad_check(
            |tape: &Tape, p: Tensor<'_>| {
                let tensors = store
                    .values()
                    .iter()
                    .enumerate()
                    .map(|(i, v)| if i == pi { p } else { tape.constant(v.clone()) })
                    .collect();
                let bound = Bound::from_tensors(tensors);
                let mut ctx = ForwardCtx::train(7);
                match model.forward(tape, Some(&bound), l, r, &mut ctx, &pairs)? {
                    ModelOutput::Embeddings(e) => readout(tape, e.left)?.add(&readout(tape, e.right)?),
                    ModelOutput::Correspondence(o) => {
                        readout(tape, o.refined.values)?.add(&dgmc_loss(&o.refined, &pairs)?)
                    }
                }
            },
            &store.values()[pi],
            GRAD_EPS,
        )?;
        errors.push((name.clone(), err));
    }
    Ok(errors)
}

/// The three gradient-checked architectures at their smallest depth. Every
/// second instance trains the embeddings and normalizes with L2.
pub fn small_models(seed: u64) -> Vec<ModelConfig> {
    let dim = 3;
    let flag = seed.is_multiple_of(2);
    let norm = if flag {
        NormalizationMode::AlwaysL2
    } else {
        NormalizationMode::Never
    };
    let mut rd = RdgcnConfig::new(dim);
    rd.interaction_layers = 1;
    rd.gcn_layers = 1;
    rd.hidden = 3;
    rd.trainable_embeddings = flag;
    rd.normalization = norm;
    let mut ga = GcnAlignConfig::new(dim);
    ga.output_dim = 3;
    ga.layers = 1;
    ga.trainable_embeddings = flag;
    ga.batch_norm = !flag;
    ga.normalization = norm;
    let mut dg = DgmcConfig::new(dim);
    dg.psi1.dim = 4;
    dg.psi1.layers = 1;
    dg.psi2.dim = 4;
    dg.psi2.layers = 1;
    dg.rnd_dim = 4;
    // Every right entity is a candidate, so the top-k selection is constant
    // under small perturbations.
    dg.k = 10;
    dg.steps = 2;
    dg.normalization = norm;
    vec![ModelConfig::Rdgcn(rd), ModelConfig::GcnAlign(ga), ModelConfig::Dgmc(dg)]
}

/// Rank of `matched` by exhaustive sorting: the mean of the first and last
/// 1-based positions of its score group in the descending order.
pub fn oracle_rank(scores: &[f64], matched: usize, candidates: &[usize]) -> f64 {
    let mut order: Vec<usize> = candidates.to_vec();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let target = scores[matched];
    let first = order.iter().position(|&j| scores[j] == target).unwrap() + 1;
    let last = order.iter().rposition(|&j| scores[j] == target).unwrap() + 1;
    (first + last) as f64 / 2.0
}

/// `(hits@1, hits@10, mrr)` of a list of ranks.
pub fn oracle_metrics(ranks: &[f64]) -> (f64, f64, f64) {
    let n = ranks.len() as f64;
    let h1 = ranks.iter().filter(|&&r| r <= 1.0).count() as f64 / n;
    let h10 = ranks.iter().filter(|&&r| r <= 10.0).count() as f64 / n;
    let mut rr = 0.0;
    for &r in ranks {
        rr += 1.0 / r;
    }
    (h1, h10, rr / n)
}

/// Score matrix with many exact ties, plus random evaluation pairs.
pub fn tied_scores(seed: u64) -> (Matrix, Vec<AlignmentPair>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = rng.random_range(1..=40);
    let cols = rng.random_range(1..=40);
    let levels = rng.random_range(1..=6);
    let tie_share = rng.random_range(0.0..1.0);
    let scores = Matrix::from_shape_simple_fn((rows, cols), || {
        if rng.random_bool(tie_share) {
            rng.random_range(0..levels) as f64 / 2.0
        } else {
            rng.random_range(-1.0..3.0)
        }
    });
    let count = rng.random_range(1..=rows.max(cols));
    let pairs = (0..count)
        .map(|_| (rng.random_range(0..rows), rng.random_range(0..cols)))
        .collect();
    (scores, pairs)
}

/// Distinct entities of one side of `pairs`, sorted.
pub fn side(pairs: &[AlignmentPair], left: bool) -> Vec<usize> {
    let set: BTreeSet<usize> = pairs.iter().map(|p| if left { p.0 } else { p.1 }).collect();
    set.into_iter().collect()
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn softmax_weights(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
    scores.iter().map(|s| (s - max).exp() / z).collect()
}

fn jaccard_sets(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

/// Dense dual attention: each relation attends to the relations sharing
/// heads or tails with it, scored by `J_ab · leaky(l_a + r_b)` where `J_ab`
/// sums the Jaccard indices of the head sets and of the tail sets.
pub fn dual_oracle(rel: &Matrix, context: &Matrix, kg: &KnowledgeGraph, m: &RdgcnModel) -> Matrix {
    let p = &m.interaction[0];
    let slope = m.config.leaky_slope;
    let proj = context.dot(m.store.get(p.w_shared));
    let l = proj.dot(m.store.get(p.w_left));
    let r = proj.dot(m.store.get(p.w_right));
    let nr = rel.nrows();
    let mut heads = vec![BTreeSet::new(); nr];
    let mut tails = vec![BTreeSet::new(); nr];
    for t in kg.triples() {
        heads[t.relation].insert(t.head);
        tails[t.relation].insert(t.tail);
    }
    let mut out = Matrix::zeros(rel.dim());
    for a in 0..nr {
        let mut partners = Vec::new();
        let mut scores = Vec::new();
        for b in 0..nr {
            let jac = jaccard_sets(&heads[a], &heads[b]) + jaccard_sets(&tails[a], &tails[b]);
            if jac > 0.0 {
                partners.push(b);
                scores.push(jac * leaky(l[[a, 0]] + r[[b, 0]], slope));
            }
        }
        for (&b, w) in partners.iter().zip(softmax_weights(&scores)) {
            for c in 0..rel.ncols() {
                out[[a, c]] += w * rel[[b, c]];
            }
        }
    }
    out.mapv(|v| v.max(0.0))
}

/// Dense primal attention from the raw triples: entity `i` attends to its
/// out-neighbours `j`, scored by the summed relation scores of the links
/// `i → j`.
pub fn primal_oracle(x: &Matrix, rel: &Matrix, kg: &KnowledgeGraph, m: &RdgcnModel) -> Matrix {
    let p = &m.interaction[0];
    let slope = m.config.leaky_slope;
    let w = m.store.get(p.w_primal);
    let b = m.store.get(p.b_primal)[[0, 0]];
    let rel_score: Vec<f64> = (0..rel.nrows())
        .map(|r| leaky(rel.row(r).dot(&w.column(0)) + b, slope))
        .collect();
    let n = x.nrows();
    let mut links = vec![vec![BTreeSet::new(); n]; n];
    for t in kg.triples() {
        links[t.head][t.tail].insert(t.relation);
    }
    let mut out = Matrix::zeros(x.dim());
    for i in 0..n {
        let nbrs: Vec<usize> = (0..n).filter(|&j| !links[i][j].is_empty()).collect();
        let scores: Vec<f64> = nbrs
            .iter()
            .map(|&j| links[i][j].iter().map(|&r| rel_score[r]).sum())
            .collect();
        for (&j, wgt) in nbrs.iter().zip(softmax_weights(&scores)) {
            for c in 0..x.ncols() {
                out[[i, c]] += wgt * x[[j, c]];
            }
        }
    }
    out.mapv(|v| v.max(0.0))
}

/// Dense relation context: per relation, the mean features of its distinct
/// head entities next to those of its distinct tail entities.
pub fn context_oracle(x: &Matrix, kg: &KnowledgeGraph) -> Matrix {
    let d = x.ncols();
    let nr = kg.num_relations();
    let mut heads = vec![BTreeSet::new(); nr];
    let mut tails = vec![BTreeSet::new(); nr];
    for t in kg.triples() {
        heads[t.relation].insert(t.head);
        tails[t.relation].insert(t.tail);
    }
    let mut out = Matrix::zeros((nr, 2 * d));
    for r in 0..nr {
        for (offset, set) in [(0, &heads[r]), (d, &tails[r])] {
            for &e in set {
                for c in 0..d {
                    out[[r, offset + c]] += x[[e, c]] / set.len() as f64;
                }
            }
        }
    }
    out
}

/// RDGCN with one interaction round and weights spread by `seed`.
pub fn attention_model(dim: usize, seed: u64) -> RdgcnModel {
    let mut c = RdgcnConfig::new(dim);
    c.interaction_layers = 1;
    c.gcn_layers = 0;
    c.hidden = 4;
    let z = Matrix::zeros((1, dim));
    let mut m = RdgcnModel::new(c, &z, &z, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa77e);
    for v in m.store.values_mut() {
        v.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    }
    m
}
