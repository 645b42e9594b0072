//! Relation-aware dual-graph convolution.
//!
//! Entity representations pass through a number of interaction rounds
//! (relation context → dual attention over relations → primal attention over
//! entities → weighted skip from the initial features) and then through
//! highway GCN layers with diagonal weights.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{Bound, ParamId, ParamStore};
use super::{Embeddings, GraphInput, NormalizationMode};
use crate::diffmath::{Activation, Matrix, Tape, Tensor};
use crate::error::{Error, Result};
use crate::graphstore::GraphIndexes;

pub const DEFAULT_BETAS: [f64; 2] = [0.1, 0.3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdgcnConfig {
    pub dim: usize,
    pub interaction_layers: usize,
    pub gcn_layers: usize,
    /// Skip weight of each interaction round; rounds past the end reuse the
    /// last entry.
    pub betas: Vec<f64>,
    /// Width `h` of the shared dual-attention projection.
    pub hidden: usize,
    pub leaky_slope: f64,
    pub normalization: NormalizationMode,
    pub trainable_embeddings: bool,
}

impl RdgcnConfig {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            interaction_layers: 2,
            gcn_layers: 2,
            betas: DEFAULT_BETAS.to_vec(),
            hidden: 128,
            leaky_slope: Activation::DEFAULT_LEAKY_SLOPE,
            normalization: NormalizationMode::Never,
            trainable_embeddings: false,
        }
    }

    pub fn beta(&self, round: usize) -> f64 {
        self.betas
            .get(round)
            .or(self.betas.last())
            .copied()
            .unwrap_or(DEFAULT_BETAS[0])
    }

    pub fn validate(&self) -> Result<()> {
        if self.interaction_layers > 3 || self.gcn_layers > 3 {
            return Err(Error::invalid("RDGCN layer counts must lie in 0..=3"));
        }
        if self.interaction_layers > 0 && self.betas.is_empty() {
            return Err(Error::invalid("interaction rounds need skip weights"));
        }
        if self.betas.iter().any(|&b| b <= 0.0) {
            return Err(Error::invalid("interaction skip weights must be positive"));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::invalid("leaky ReLU slope must lie in (0, 1)"));
        }
        if self.dim == 0 || self.hidden == 0 {
            return Err(Error::invalid("RDGCN widths must be positive"));
        }
        Ok(())
    }
}

/// Weights of one interaction round.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionParams {
    /// `W_C` stored transposed, `2d × h`.
    pub w_shared: ParamId,
    /// `W_L'` as an `h × 1` column.
    pub w_left: ParamId,
    pub w_right: ParamId,
    /// Relation score weights `W` (`2d × 1`) and bias `b` (`1 × 1`).
    pub w_primal: ParamId,
    pub b_primal: ParamId,
}

/// Weights of one highway GCN layer.
#[derive(Debug, Clone, PartialEq)]
pub struct HighwayParams {
    /// Diagonal of the GCN weight as a `1 × d` row, initialized to ones.
    pub diag: ParamId,
    pub gate_w: ParamId,
    pub gate_b: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdgcnModel {
    pub config: RdgcnConfig,
    pub store: ParamStore,
    pub interaction: Vec<InteractionParams>,
    pub gcn: Vec<HighwayParams>,
    pub embeddings: Option<(ParamId, ParamId)>,
}

impl RdgcnModel {
    /// Initializes weights from `seed`. With trainable embeddings the initial
    /// features become parameters.
    pub fn new(config: RdgcnConfig, init_left: &Matrix, init_right: &Matrix, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.dim;
        if init_left.ncols() != d || init_right.ncols() != d {
            return Err(Error::invalid(format!(
                "RDGCN configured for width {d}, features have {} / {}",
                init_left.ncols(),
                init_right.ncols()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let h = config.hidden;
        let interaction = (0..config.interaction_layers)
            .map(|i| InteractionParams {
                w_shared: store.add_uniform(format!("interaction.{i}.w_shared"), 2 * d, h, 2 * d, &mut rng),
                w_left: store.add_uniform(format!("interaction.{i}.w_left"), h, 1, h, &mut rng),
                w_right: store.add_uniform(format!("interaction.{i}.w_right"), h, 1, h, &mut rng),
                w_primal: store.add_uniform(format!("interaction.{i}.w_primal"), 2 * d, 1, 2 * d, &mut rng),
                b_primal: store.add(format!("interaction.{i}.b_primal"), Matrix::zeros((1, 1))),
            })
            .collect();
        let gcn = (0..config.gcn_layers)
            .map(|i| HighwayParams {
                diag: store.add(format!("gcn.{i}.diag"), Matrix::ones((1, d))),
                gate_w: store.add_uniform(format!("gcn.{i}.gate_w"), d, d, d, &mut rng),
                gate_b: store.add(format!("gcn.{i}.gate_b"), Matrix::zeros((1, d))),
            })
            .collect();
        let embeddings = config.trainable_embeddings.then(|| {
            (
                store.add("embedding.left", init_left.clone()),
                store.add("embedding.right", init_right.clone()),
            )
        });
        Ok(Self {
            config,
            store,
            interaction,
            gcn,
            embeddings,
        })
    }

    /// Runs both graphs with shared weights.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        bound: &Bound<'t>,
        left: GraphInput<'_>,
        right: GraphInput<'_>,
    ) -> Result<Embeddings<'t>> {
        let (x_left, x_right) = match self.embeddings {
            Some((l, r)) => (bound.get(l), bound.get(r)),
            None => (
                tape.constant(left.features.clone()),
                tape.constant(right.features.clone()),
            ),
        };
        Ok(Embeddings {
            left: self.forward_graph(bound, x_left, left.graph)?,
            right: self.forward_graph(bound, x_right, right.graph)?,
        })
    }

    /// Runs one graph.
    pub fn forward_graph<'t>(&self, bound: &Bound<'t>, x0: Tensor<'t>, graph: &GraphIndexes) -> Result<Tensor<'t>> {
        let norm = self.config.normalization;
        let slope = self.config.leaky_slope;
        let x0 = norm.initial(x0);
        let mut x = x0;
        let mut relations: Option<Tensor<'t>> = None;
        for (i, p) in self.interaction.iter().enumerate() {
            let xin = norm.before_layer(x);
            let (next, rel) = interaction_round(
                &xin,
                &x0,
                relations.as_ref(),
                graph,
                p,
                bound,
                self.config.beta(i),
                slope,
            )?;
            x = next;
            relations = Some(rel);
        }
        for p in &self.gcn {
            x = highway_gcn_layer(&norm.before_layer(x), graph, p, bound)?;
        }
        Ok(x)
    }
}

/// `[mean of X over H_r ‖ mean of X over T_r]` for every relation.
pub fn relation_context<'t>(x: &Tensor<'t>, graph: &GraphIndexes) -> Result<Tensor<'t>> {
    for r in 0..graph.num_relations {
        if graph.incidence.heads[r].is_empty() || graph.incidence.tails[r].is_empty() {
            return Err(Error::invalid(format!("relation {r} has no head or no tail entities")));
        }
    }
    let heads = x.sparse_matmul(&graph.heads_mean)?;
    let tails = x.sparse_matmul(&graph.tails_mean)?;
    heads.concat_cols(&tails)
}

/// Attention over the relation graph, restricted to pairs with `J_ij > 0`.
pub fn dual_attention<'t>(
    relations: &Tensor<'t>,
    context: &Tensor<'t>,
    graph: &GraphIndexes,
    p: &InteractionParams,
    bound: &Bound<'t>,
    slope: f64,
) -> Result<Tensor<'t>> {
    let tape = relations.tape();
    let projected = context.matmul(&bound.get(p.w_shared))?;
    let left = projected.matmul(&bound.get(p.w_left))?;
    let right = projected.matmul(&bound.get(p.w_right))?;
    let jaccard = tape.constant((*graph.jaccard).clone());
    let scores = left.outer_add(&right)?.leaky_relu(slope).mul(&jaccard)?;
    let weights = scores.masked_row_softmax(&graph.jaccard_mask)?;
    Ok(weights.matmul(relations)?.relu())
}

/// Attention over each entity's out-neighbours, scored by the summed scalar
/// scores of the relations linking the pair.
pub fn primal_attention<'t>(
    entities: &Tensor<'t>,
    relations: &Tensor<'t>,
    graph: &GraphIndexes,
    p: &InteractionParams,
    bound: &Bound<'t>,
    slope: f64,
) -> Result<Tensor<'t>> {
    let rel_scores = relations
        .matmul(&bound.get(p.w_primal))?
        .add_row(&bound.get(p.b_primal))?
        .leaky_relu(slope);
    let edges = &graph.primal;
    let pair_scores = rel_scores.sparse_matmul(&edges.pair_relations)?;
    let weights = pair_scores.segment_softmax(&edges.segments)?;
    let messages = entities.gather_rows(&edges.targets)?.mul_col(&weights)?;
    Ok(messages.scatter_add_rows(&edges.sources, graph.num_entities)?.relu())
}

/// One interaction round: returns `X⁰ + β · PA(X, DA(X_r, RC(X)))` together
/// with the new relation representations.
#[allow(clippy::too_many_arguments)]
pub fn interaction_round<'t>(
    x: &Tensor<'t>,
    x0: &Tensor<'t>,
    relations: Option<&Tensor<'t>>,
    graph: &GraphIndexes,
    p: &InteractionParams,
    bound: &Bound<'t>,
    beta: f64,
    slope: f64,
) -> Result<(Tensor<'t>, Tensor<'t>)> {
    let context = relation_context(x, graph)?;
    let rel_in = relations.copied().unwrap_or(context);
    let rel = dual_attention(&rel_in, &context, graph, p, bound, slope)?;
    let updated = primal_attention(x, &rel, graph, p, bound, slope)?;
    Ok((x0.add(&updated.scale(beta))?, rel))
}

/// Highway GCN layer with diagonal weight:
/// `g ⊙ ReLU(A X diag(w)) + (1 - g) ⊙ X` with `g = σ(X W_g + b_g)`.
pub fn highway_gcn_layer<'t>(
    x: &Tensor<'t>,
    graph: &GraphIndexes,
    p: &HighwayParams,
    bound: &Bound<'t>,
) -> Result<Tensor<'t>> {
    let transformed = x
        .sparse_matmul(&graph.adjacency.matrix)?
        .mul_row(&bound.get(p.diag))?
        .relu();
    let gate = x.matmul(&bound.get(p.gate_w))?.add_row(&bound.get(p.gate_b))?.sigmoid();
    x.add(&gate.mul(&transformed.sub(x)?)?)
}
