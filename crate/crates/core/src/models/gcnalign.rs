//! GCN-Align variant: the DGMC enrichment stack applied Siamese-style,
//! without correspondence refinement.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::enrichment::{EnrichmentConfig, EnrichmentStack};
use super::params::{Bound, ParamId, ParamStore};
use super::{Embeddings, ForwardCtx, GraphInput, NormalizationMode};
use crate::diffmath::{BatchNormState, Matrix, Tape, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnAlignConfig {
    /// Width of the initial features.
    pub in_dim: usize,
    pub output_dim: usize,
    pub layers: usize,
    pub batch_norm: bool,
    pub concat: bool,
    pub projection: bool,
    pub dropout: f64,
    pub share_horizontal: bool,
    pub normalization: NormalizationMode,
    pub trainable_embeddings: bool,
}

impl GcnAlignConfig {
    pub fn new(in_dim: usize) -> Self {
        Self {
            in_dim,
            output_dim: in_dim,
            layers: 2,
            batch_norm: false,
            concat: false,
            projection: false,
            dropout: 0.0,
            share_horizontal: false,
            normalization: NormalizationMode::Never,
            trainable_embeddings: false,
        }
    }

    pub fn enrichment(&self) -> EnrichmentConfig {
        EnrichmentConfig {
            in_dim: self.in_dim,
            dim: self.output_dim,
            layers: self.layers,
            batch_norm: self.batch_norm,
            concat: self.concat,
            projection: self.projection.then_some(self.output_dim),
            dropout: self.dropout,
            share_horizontal: self.share_horizontal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.layers) {
            return Err(Error::invalid("GCN-Align layer count must lie in 1..=3"));
        }
        if self.output_dim == 0 || self.output_dim > self.in_dim {
            return Err(Error::invalid(format!(
                "GCN-Align output width {} must lie in 1..={}",
                self.output_dim, self.in_dim
            )));
        }
        self.enrichment().validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnAlignModel {
    pub config: GcnAlignConfig,
    pub store: ParamStore,
    pub bn_states: Vec<BatchNormState>,
    pub stack: EnrichmentStack,
    pub embeddings: Option<(ParamId, ParamId)>,
}

impl GcnAlignModel {
    pub fn new(config: GcnAlignConfig, init_left: &Matrix, init_right: &Matrix, seed: u64) -> Result<Self> {
        config.validate()?;
        if init_left.ncols() != config.in_dim || init_right.ncols() != config.in_dim {
            return Err(Error::invalid(format!(
                "GCN-Align configured for width {}, features have {} / {}",
                config.in_dim,
                init_left.ncols(),
                init_right.ncols()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut bn_states = Vec::new();
        let stack = EnrichmentStack::new(config.enrichment(), "gcn", &mut store, &mut bn_states, &mut rng)?;
        let embeddings = config.trainable_embeddings.then(|| {
            (
                store.add("embedding.left", init_left.clone()),
                store.add("embedding.right", init_right.clone()),
            )
        });
        Ok(Self {
            config,
            store,
            bn_states,
            stack,
            embeddings,
        })
    }

    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        bound: &Bound<'t>,
        left: GraphInput<'_>,
        right: GraphInput<'_>,
        ctx: &mut ForwardCtx,
    ) -> Result<Embeddings<'t>> {
        let (x_left, x_right) = match self.embeddings {
            Some((l, r)) => (bound.get(l), bound.get(r)),
            None => (
                tape.constant(left.features.clone()),
                tape.constant(right.features.clone()),
            ),
        };
        Ok(Embeddings {
            left: self.forward_graph(bound, x_left, left, ctx)?,
            right: self.forward_graph(bound, x_right, right, ctx)?,
        })
    }

    fn forward_graph<'t>(
        &self,
        bound: &Bound<'t>,
        x: Tensor<'t>,
        input: GraphInput<'_>,
        ctx: &mut ForwardCtx,
    ) -> Result<Tensor<'t>> {
        self.stack.forward(
            bound,
            x,
            &input.graph.directed,
            &self.bn_states,
            self.config.normalization,
            ctx,
        )
    }
}
