//! Stack of directional message-passing layers
//! `φ(X) = ReLU(norm(A) X W1 + norm(Aᵀ) X W2 + X W3)`, each optionally
//! followed by batch normalization and dropout, with optional output
//! concatenation and a final linear projection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{Bound, ParamId, ParamStore};
use super::{ForwardCtx, NormalizationMode};
use crate::diffmath::{batch_norm, concat_cols, dropout, BatchNormState, Matrix, Tensor};
use crate::error::{Error, Result};
use crate::graphstore::DirectedAdjacency;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentConfig {
    pub in_dim: usize,
    /// Width of every layer.
    pub dim: usize,
    pub layers: usize,
    pub batch_norm: bool,
    pub concat: bool,
    /// Output width of the final projection, if any.
    pub projection: Option<usize>,
    pub dropout: f64,
    /// Tie the forward and backward adjacency weights (`W1 = W2`).
    pub share_horizontal: bool,
}

impl EnrichmentConfig {
    pub fn output_dim(&self) -> usize {
        match (self.projection, self.concat) {
            (Some(d), _) => d,
            (None, true) => self.dim * self.layers,
            (None, false) if self.layers == 0 => self.in_dim,
            (None, false) => self.dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if self.dim == 0 || self.in_dim == 0 {
            return Err(Error::invalid("enrichment widths must be positive"));
        }
        if self.layers == 0 {
            return Err(Error::invalid("enrichment needs at least one layer"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrichmentLayer {
    pub w_forward: ParamId,
    pub w_backward: ParamId,
    pub w_self: ParamId,
    pub norm: Option<(ParamId, ParamId, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrichmentStack {
    pub config: EnrichmentConfig,
    pub layers: Vec<EnrichmentLayer>,
    pub projection: Option<(ParamId, ParamId)>,
}

impl EnrichmentStack {
    /// Registers the stack's parameters in `store` under `prefix` and appends
    /// one batch-norm state per layer to `bn_states` when enabled.
    pub fn new<R: Rng + ?Sized>(
        config: EnrichmentConfig,
        prefix: &str,
        store: &mut ParamStore,
        bn_states: &mut Vec<BatchNormState>,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::with_capacity(config.layers);
        let mut d_in = config.in_dim;
        for l in 0..config.layers {
            let d = config.dim;
            let w_forward = store.add_uniform(format!("{prefix}.{l}.w_forward"), d_in, d, d_in, rng);
            let w_backward = if config.share_horizontal {
                w_forward
            } else {
                store.add_uniform(format!("{prefix}.{l}.w_backward"), d_in, d, d_in, rng)
            };
            let w_self = store.add_uniform(format!("{prefix}.{l}.w_self"), d_in, d, d_in, rng);
            let norm = config.batch_norm.then(|| {
                let gamma = store.add(format!("{prefix}.{l}.bn_gamma"), Matrix::ones((1, d)));
                let beta = store.add(format!("{prefix}.{l}.bn_beta"), Matrix::zeros((1, d)));
                bn_states.push(BatchNormState::new(d));
                (gamma, beta, bn_states.len() - 1)
            });
            layers.push(EnrichmentLayer {
                w_forward,
                w_backward,
                w_self,
                norm,
            });
            d_in = d;
        }
        let concat_width = if config.concat {
            config.dim * config.layers
        } else {
            d_in
        };
        let projection = config.projection.map(|out| {
            let w = store.add_uniform(format!("{prefix}.proj.w"), concat_width, out, concat_width, rng);
            let b = store.add(format!("{prefix}.proj.b"), Matrix::zeros((1, out)));
            (w, b)
        });
        Ok(Self {
            config,
            layers,
            projection,
        })
    }

    /// Runs the stack on one graph, normalizing layer inputs per `norm`.
    pub fn forward<'t>(
        &self,
        bound: &Bound<'t>,
        x: Tensor<'t>,
        adj: &DirectedAdjacency,
        bn_states: &[BatchNormState],
        norm: NormalizationMode,
        ctx: &mut ForwardCtx,
    ) -> Result<Tensor<'t>> {
        let mut h = norm.initial(x);
        let mut outputs = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            h = norm.before_layer(h);
            let fwd = h.sparse_matmul(&adj.forward)?.matmul(&bound.get(layer.w_forward))?;
            let bwd = h.sparse_matmul(&adj.backward)?.matmul(&bound.get(layer.w_backward))?;
            let own = h.matmul(&bound.get(layer.w_self))?;
            let mut out = fwd.add(&bwd)?.add(&own)?.relu();
            if let Some((gamma, beta, state)) = layer.norm {
                let (y, stats) = batch_norm(
                    &out,
                    &bound.get(gamma),
                    &bound.get(beta),
                    &bn_states[state],
                    ctx.training,
                )?;
                if let Some(stats) = stats {
                    ctx.record_batch_stats(state, stats);
                }
                out = y;
            }
            if ctx.training && self.config.dropout > 0.0 {
                out = dropout(&out, self.config.dropout, ctx.rng())?;
            }
            outputs.push(out);
            h = out;
        }
        let mut z = if self.config.concat && !outputs.is_empty() {
            concat_cols(&outputs)?
        } else {
            h
        };
        if let Some((w, b)) = self.projection {
            z = z.matmul(&bound.get(w))?.add_row(&bound.get(b))?;
        }
        Ok(z)
    }
}
