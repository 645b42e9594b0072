//! Deep graph matching consensus: a Siamese enrichment network `ψ1` yields
//! initial top-k soft correspondences, which are refined by propagating
//! random node colourings through a second network `ψ2` on both graphs.

use std::sync::Arc;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::enrichment::{EnrichmentConfig, EnrichmentStack};
use super::params::{Bound, ParamId, ParamStore};
use super::similarity::{pair_similarity, similarity_matrix, SimilarityKind};
use super::{Embeddings, ForwardCtx, GraphInput, NormalizationMode};
use crate::diffmath::{BatchNormState, Matrix, Segments, Tape, Tensor};
use crate::error::{Error, Result};

/// Settings of one enrichment network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiConfig {
    pub dim: usize,
    pub layers: usize,
    pub batch_norm: bool,
    pub concat: bool,
}

impl PsiConfig {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            layers: 2,
            batch_norm: false,
            concat: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgmcConfig {
    pub in_dim: usize,
    pub psi1: PsiConfig,
    pub psi1_dropout: f64,
    pub psi2: PsiConfig,
    /// Width of the random node features.
    pub rnd_dim: usize,
    /// Candidates kept per left entity.
    pub k: usize,
    /// Refinement steps.
    pub steps: usize,
    pub normalization: NormalizationMode,
    /// Scores the enriched features to pick and weight candidates.
    pub similarity: SimilarityKind,
}

impl DgmcConfig {
    pub fn new(in_dim: usize) -> Self {
        Self {
            in_dim,
            psi1: PsiConfig::new(in_dim),
            psi1_dropout: 0.0,
            psi2: PsiConfig::new(32),
            rnd_dim: 32,
            k: 10,
            steps: 10,
            normalization: NormalizationMode::Never,
            similarity: SimilarityKind::Cos,
        }
    }

    fn psi1_config(&self) -> EnrichmentConfig {
        EnrichmentConfig {
            in_dim: self.in_dim,
            dim: self.psi1.dim,
            layers: self.psi1.layers,
            batch_norm: self.psi1.batch_norm,
            concat: self.psi1.concat,
            projection: Some(self.psi1.dim),
            dropout: self.psi1_dropout,
            share_horizontal: false,
        }
    }

    fn psi2_config(&self) -> EnrichmentConfig {
        EnrichmentConfig {
            in_dim: self.rnd_dim,
            dim: self.psi2.dim,
            layers: self.psi2.layers,
            batch_norm: self.psi2.batch_norm,
            concat: self.psi2.concat,
            projection: Some(self.psi2.dim),
            dropout: 0.0,
            share_horizontal: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("DGMC needs at least one candidate"));
        }
        if self.rnd_dim == 0 {
            return Err(Error::invalid("random feature width must be positive"));
        }
        if self.normalization == NormalizationMode::InitialL2 {
            return Err(Error::invalid("DGMC normalization is never, always-l1 or always-l2"));
        }
        self.psi1_config().validate()?;
        self.psi2_config().validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgmcModel {
    pub config: DgmcConfig,
    pub store: ParamStore,
    pub bn_states: Vec<BatchNormState>,
    pub psi1: EnrichmentStack,
    pub psi2: EnrichmentStack,
    /// Update MLP `(w1, b1, w2, b2)`.
    pub mlp: (ParamId, ParamId, ParamId, ParamId),
}

/// Sparse soft correspondence between left and right entities. Entries are
/// grouped by left entity; `values` holds one score per entry.
#[derive(Debug, Clone)]
pub struct Correspondence<'t> {
    pub rows: Arc<Vec<usize>>,
    pub cols: Arc<Vec<usize>>,
    pub segments: Arc<Segments>,
    pub n_right: usize,
    pub values: Tensor<'t>,
}

impl Correspondence<'_> {
    pub fn nnz(&self) -> usize {
        self.rows.len()
    }

    /// Entry index of `(i, j)`, if it is in the support.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.rows.partition_point(|&r| r < i);
        let end = self.rows.partition_point(|&r| r <= i);
        (start..end).find(|&k| self.cols[k] == j)
    }

    pub fn to_dense(&self) -> Matrix {
        let mut out = Matrix::zeros((self.segments.count(), self.n_right));
        let v = self.values.value();
        for k in 0..self.rows.len() {
            out[[self.rows[k], self.cols[k]]] += v[[k, 0]];
        }
        out
    }
}

/// Result of a DGMC forward pass.
#[derive(Debug, Clone)]
pub struct DgmcOutput<'t> {
    pub enriched: Embeddings<'t>,
    pub initial: Correspondence<'t>,
    pub refined: Correspondence<'t>,
}

/// Picks the `k` highest-scoring columns of every row, ties to the lowest
/// column, in descending score order. `forced` pairs are appended to their
/// rows when not already present. Returns `(rows, cols)` grouped by row.
pub fn top_k_candidates(scores: &Matrix, k: usize, forced: &[(usize, usize)]) -> Result<(Vec<usize>, Vec<usize>)> {
    let (n, m) = scores.dim();
    if k == 0 {
        return Err(Error::invalid("candidate count must be positive"));
    }
    if m == 0 {
        return Err(Error::EmptyInput("no candidate entities".into()));
    }
    let k = if k > m {
        warn!("candidate count {k} exceeds {m} entities; using {m}");
        m
    } else {
        k
    };
    let mut extra: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(i, j) in forced {
        if i >= n || j >= m {
            return Err(Error::invalid(format!("forced pair ({i}, {j}) out of range")));
        }
        extra[i].push(j);
    }
    let mut rows = Vec::with_capacity(n * k);
    let mut cols = Vec::with_capacity(n * k);
    for (i, row) in scores.rows().into_iter().enumerate() {
        let mut order: Vec<usize> = (0..m).collect();
        let cmp = |a: &usize, b: &usize| row[*b].total_cmp(&row[*a]).then(a.cmp(b));
        if k < m {
            order.select_nth_unstable_by(k - 1, cmp);
            order.truncate(k);
        }
        order.sort_by(cmp);
        for &j in &extra[i] {
            if !order.contains(&j) {
                order.push(j);
            }
        }
        rows.extend(std::iter::repeat_n(i, order.len()));
        cols.extend(order);
    }
    Ok((rows, cols))
}

impl DgmcModel {
    pub fn new(config: DgmcConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut bn_states = Vec::new();
        let psi1 = EnrichmentStack::new(config.psi1_config(), "psi1", &mut store, &mut bn_states, &mut rng)?;
        let psi2 = EnrichmentStack::new(config.psi2_config(), "psi2", &mut store, &mut bn_states, &mut rng)?;
        let d = config.psi2.dim;
        let mlp = (
            store.add_uniform("mlp.w1", d, d, d, &mut rng),
            store.add("mlp.b1", Matrix::zeros((1, d))),
            store.add_uniform("mlp.w2", d, 1, d, &mut rng),
            store.add("mlp.b2", Matrix::zeros((1, 1))),
        );
        Ok(Self {
            config,
            store,
            bn_states,
            psi1,
            psi2,
            mlp,
        })
    }

    /// Enrichment of one graph with `ψ1`.
    pub fn enrich<'t>(
        &self,
        bound: &Bound<'t>,
        x: Tensor<'t>,
        input: GraphInput<'_>,
        ctx: &mut ForwardCtx,
    ) -> Result<Tensor<'t>> {
        self.psi1.forward(
            bound,
            x,
            &input.graph.directed,
            &self.bn_states,
            self.config.normalization,
            ctx,
        )
    }

    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        bound: &Bound<'t>,
        left: GraphInput<'_>,
        right: GraphInput<'_>,
        ctx: &mut ForwardCtx,
        forced: &[(usize, usize)],
    ) -> Result<DgmcOutput<'t>> {
        let z_left = self.enrich(bound, tape.constant(left.features.clone()), left, ctx)?;
        let z_right = self.enrich(bound, tape.constant(right.features.clone()), right, ctx)?;
        let enriched = Embeddings {
            left: z_left,
            right: z_right,
        };
        let (initial, refined) = dgmc_refine(self, bound, enriched, left, right, ctx, forced)?;
        Ok(DgmcOutput {
            enriched,
            initial,
            refined,
        })
    }
}

/// Builds the initial top-k correspondence from enriched features and runs
/// the configured number of consensus refinement steps.
///
/// Returns `(S_0, S_L)`; with zero steps both are the same.
pub fn dgmc_refine<'t>(
    model: &DgmcModel,
    bound: &Bound<'t>,
    enriched: Embeddings<'t>,
    left: GraphInput<'_>,
    right: GraphInput<'_>,
    ctx: &mut ForwardCtx,
    forced: &[(usize, usize)],
) -> Result<(Correspondence<'t>, Correspondence<'t>)> {
    let cfg = &model.config;
    let tape = enriched.left.tape();
    let (n_left, n_right) = (left.graph.num_entities, right.graph.num_entities);
    let scores = similarity_matrix(&enriched.left.value(), &enriched.right.value(), cfg.similarity)?;
    let (rows, cols) = top_k_candidates(&scores, cfg.k, forced)?;
    let segments = Arc::new(Segments::new(rows.clone(), n_left)?);
    let rows = Arc::new(rows);
    let cols = Arc::new(cols);

    let mut logits = pair_similarity(&enriched.left, &enriched.right, &rows, &cols, cfg.similarity)?;
    let correspondence = |values: Tensor<'t>| Correspondence {
        rows: Arc::clone(&rows),
        cols: Arc::clone(&cols),
        segments: Arc::clone(&segments),
        n_right,
        values,
    };
    let mut s = logits.segment_softmax(&segments)?;
    let initial = correspondence(s);
    let (w1, b1, w2, b2) = model.mlp;
    for _ in 0..cfg.steps {
        let rng = ctx.rng();
        let r = Matrix::from_shape_simple_fn((n_left, cfg.rnd_dim), || StandardNormal.sample(rng));
        let r_left = tape.constant(r);
        let r_right = r_left
            .gather_rows(&rows)?
            .mul_col(&s)?
            .scatter_add_rows(&cols, n_right)?;
        let never = NormalizationMode::Never;
        let o_left = model
            .psi2
            .forward(bound, r_left, &left.graph.directed, &model.bn_states, never, ctx)?;
        let o_right = model
            .psi2
            .forward(bound, r_right, &right.graph.directed, &model.bn_states, never, ctx)?;
        let diff = o_left.gather_rows(&rows)?.sub(&o_right.gather_rows(&cols)?)?;
        let update = diff
            .matmul(&bound.get(w1))?
            .add_row(&bound.get(b1))?
            .relu()
            .matmul(&bound.get(w2))?
            .add_row(&bound.get(b2))?;
        logits = logits.add(&update)?;
        s = logits.segment_softmax(&segments)?;
    }
    Ok((initial, correspondence(s)))
}
