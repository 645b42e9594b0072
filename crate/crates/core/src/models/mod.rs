//! Alignment models: RDGCN, DGMC, GCN-Align and the zero-shot baseline,
//! plus similarity functions and parameter checkpoints.

mod checkpoint;
mod dgmc;
mod enrichment;
mod gcnalign;
mod params;
mod rdgcn;
mod similarity;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_HEADER};
pub use dgmc::{dgmc_refine, top_k_candidates, Correspondence, DgmcConfig, DgmcModel, DgmcOutput, PsiConfig};
pub use enrichment::{EnrichmentConfig, EnrichmentLayer, EnrichmentStack};
pub use gcnalign::{GcnAlignConfig, GcnAlignModel};
pub use params::{Bound, ParamId, ParamStore};
pub use rdgcn::{
    dual_attention, highway_gcn_layer, interaction_round, primal_attention, relation_context, HighwayParams,
    InteractionParams, RdgcnConfig, RdgcnModel, DEFAULT_BETAS,
};
pub use similarity::{pair_similarity, similarity_matrix, SimilarityKind};

use crate::diffmath::{BatchNormState, BatchStats, Matrix, Tape, Tensor};
use crate::error::{Error, Result};
use crate::graphstore::GraphIndexes;

/// Row normalization applied to entity representations inside a model.
///
/// `InitialL2` normalizes the initial features only; the `Always*` modes
/// normalize the input of every layer as well.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationMode {
    Never,
    InitialL2,
    AlwaysL2,
    AlwaysL1,
}

impl NormalizationMode {
    pub const ALL: [NormalizationMode; 4] = [
        NormalizationMode::Never,
        NormalizationMode::InitialL2,
        NormalizationMode::AlwaysL2,
        NormalizationMode::AlwaysL1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NormalizationMode::Never => "never",
            NormalizationMode::InitialL2 => "initial-l2",
            NormalizationMode::AlwaysL2 => "always-l2",
            NormalizationMode::AlwaysL1 => "always-l1",
        }
    }

    /// Applied once to the initial features.
    pub fn initial<'t>(self, x: Tensor<'t>) -> Tensor<'t> {
        match self {
            NormalizationMode::Never => x,
            NormalizationMode::InitialL2 | NormalizationMode::AlwaysL2 => x.l2_normalize_rows(),
            NormalizationMode::AlwaysL1 => x.l1_normalize_rows(),
        }
    }

    /// Applied to the input of every layer.
    pub fn before_layer<'t>(self, x: Tensor<'t>) -> Tensor<'t> {
        match self {
            NormalizationMode::Never | NormalizationMode::InitialL2 => x,
            NormalizationMode::AlwaysL2 => x.l2_normalize_rows(),
            NormalizationMode::AlwaysL1 => x.l1_normalize_rows(),
        }
    }
}

impl fmt::Display for NormalizationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NormalizationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NormalizationMode::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown normalization `{s}`")))
    }
}

/// Mutable state of one forward pass: mode, randomness for dropout and
/// random features, and batch statistics to fold into running averages.
#[derive(Debug)]
pub struct ForwardCtx {
    pub training: bool,
    rng: ChaCha8Rng,
    batch_stats: Vec<(usize, BatchStats)>,
}

impl ForwardCtx {
    pub fn train(seed: u64) -> Self {
        Self::new(true, seed)
    }

    pub fn eval(seed: u64) -> Self {
        Self::new(false, seed)
    }

    fn new(training: bool, seed: u64) -> Self {
        Self {
            training,
            rng: ChaCha8Rng::seed_from_u64(seed),
            batch_stats: Vec::new(),
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn record_batch_stats(&mut self, state: usize, stats: BatchStats) {
        self.batch_stats.push((state, stats));
    }

    /// Folds the recorded statistics into `states`, in recording order.
    pub fn apply_batch_stats(&mut self, states: &mut [BatchNormState]) {
        for (i, stats) in self.batch_stats.drain(..) {
            states[i].update(&stats.mean, &stats.var);
        }
    }
}

/// One graph of a pair together with its initial features.
#[derive(Debug, Clone, Copy)]
pub struct GraphInput<'a> {
    pub features: &'a Matrix,
    pub graph: &'a GraphIndexes,
}

impl<'a> GraphInput<'a> {
    pub fn new(features: &'a Matrix, graph: &'a GraphIndexes) -> Result<Self> {
        if features.nrows() != graph.num_entities {
            return Err(Error::invalid(format!(
                "{} feature rows for {} entities",
                features.nrows(),
                graph.num_entities
            )));
        }
        Ok(Self { features, graph })
    }
}

/// Entity representations of both graphs.
#[derive(Debug, Clone, Copy)]
pub struct Embeddings<'t> {
    pub left: Tensor<'t>,
    pub right: Tensor<'t>,
}

/// Which model to build, with its architecture settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum ModelConfig {
    ZeroShot,
    Rdgcn(RdgcnConfig),
    GcnAlign(GcnAlignConfig),
    Dgmc(DgmcConfig),
}

impl ModelConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::ZeroShot => "zero-shot",
            ModelConfig::Rdgcn(_) => "rdgcn",
            ModelConfig::GcnAlign(_) => "gcn-align",
            ModelConfig::Dgmc(_) => "dgmc",
        }
    }
}

/// Output of a forward pass.
pub enum ModelOutput<'t> {
    Embeddings(Embeddings<'t>),
    Correspondence(DgmcOutput<'t>),
}

/// A model instance with its parameters and batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    ZeroShot,
    Rdgcn(RdgcnModel),
    GcnAlign(GcnAlignModel),
    Dgmc(DgmcModel),
}

impl Model {
    /// Builds a model with weights drawn from `seed`.
    pub fn new(config: &ModelConfig, init_left: &Matrix, init_right: &Matrix, seed: u64) -> Result<Self> {
        Ok(match config {
            ModelConfig::ZeroShot => Model::ZeroShot,
            ModelConfig::Rdgcn(c) => Model::Rdgcn(RdgcnModel::new(c.clone(), init_left, init_right, seed)?),
            ModelConfig::GcnAlign(c) => Model::GcnAlign(GcnAlignModel::new(c.clone(), init_left, init_right, seed)?),
            ModelConfig::Dgmc(c) => Model::Dgmc(DgmcModel::new(c.clone(), seed)?),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Model::ZeroShot => "zero-shot",
            Model::Rdgcn(_) => "rdgcn",
            Model::GcnAlign(_) => "gcn-align",
            Model::Dgmc(_) => "dgmc",
        }
    }

    pub fn store(&self) -> Option<&ParamStore> {
        match self {
            Model::ZeroShot => None,
            Model::Rdgcn(m) => Some(&m.store),
            Model::GcnAlign(m) => Some(&m.store),
            Model::Dgmc(m) => Some(&m.store),
        }
    }

    pub fn store_mut(&mut self) -> Option<&mut ParamStore> {
        match self {
            Model::ZeroShot => None,
            Model::Rdgcn(m) => Some(&mut m.store),
            Model::GcnAlign(m) => Some(&mut m.store),
            Model::Dgmc(m) => Some(&mut m.store),
        }
    }

    pub fn bn_states(&self) -> &[BatchNormState] {
        match self {
            Model::GcnAlign(m) => &m.bn_states,
            Model::Dgmc(m) => &m.bn_states,
            _ => &[],
        }
    }

    pub fn bn_states_mut(&mut self) -> &mut [BatchNormState] {
        match self {
            Model::GcnAlign(m) => &mut m.bn_states,
            Model::Dgmc(m) => &mut m.bn_states,
            _ => &mut [],
        }
    }

    /// Runs the model on both graphs. `train_pairs` are forced into the DGMC
    /// candidate sets when non-empty and ignored by the other models.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        bound: Option<&Bound<'t>>,
        left: GraphInput<'_>,
        right: GraphInput<'_>,
        ctx: &mut ForwardCtx,
        train_pairs: &[(usize, usize)],
    ) -> Result<ModelOutput<'t>> {
        let need = || Error::invalid("model parameters are not bound");
        match self {
            Model::ZeroShot => Ok(ModelOutput::Embeddings(Embeddings {
                left: tape.constant(left.features.clone()),
                right: tape.constant(right.features.clone()),
            })),
            Model::Rdgcn(m) => Ok(ModelOutput::Embeddings(m.forward(
                tape,
                bound.ok_or_else(need)?,
                left,
                right,
            )?)),
            Model::GcnAlign(m) => Ok(ModelOutput::Embeddings(m.forward(
                tape,
                bound.ok_or_else(need)?,
                left,
                right,
                ctx,
            )?)),
            Model::Dgmc(m) => Ok(ModelOutput::Correspondence(m.forward(
                tape,
                bound.ok_or_else(need)?,
                left,
                right,
                ctx,
                train_pairs,
            )?)),
        }
    }

    /// Inference-mode scores between every left and right entity. Embedding
    /// models score with `similarity`; DGMC returns its refined
    /// correspondence with zeros outside the candidate sets.
    pub fn score_matrix(
        &self,
        left: GraphInput<'_>,
        right: GraphInput<'_>,
        similarity: SimilarityKind,
        seed: u64,
    ) -> Result<Matrix> {
        match self.infer(left, right, seed)? {
            Inference::Embeddings(l, r) => similarity_matrix(&l, &r, similarity),
            Inference::Correspondence { refined, .. } => Ok(refined),
        }
    }

    /// Inference-mode forward pass returning plain values.
    pub fn infer(&self, left: GraphInput<'_>, right: GraphInput<'_>, seed: u64) -> Result<Inference> {
        let tape = Tape::new();
        let bound = self.store().map(|s| s.bind(&tape, false));
        let mut ctx = ForwardCtx::eval(seed);
        let out = self.forward(&tape, bound.as_ref(), left, right, &mut ctx, &[])?;
        Ok(match out {
            ModelOutput::Embeddings(e) => Inference::Embeddings(e.left.to_matrix(), e.right.to_matrix()),
            ModelOutput::Correspondence(o) => Inference::Correspondence {
                enriched: (o.enriched.left.to_matrix(), o.enriched.right.to_matrix()),
                initial: o.initial.to_dense(),
                refined: o.refined.to_dense(),
            },
        })
    }
}

/// Values produced by [`Model::infer`].
#[derive(Debug, Clone)]
pub enum Inference {
    Embeddings(Matrix, Matrix),
    Correspondence {
        enriched: (Matrix, Matrix),
        initial: Matrix,
        refined: Matrix,
    },
}
