//! Dense/sparse tensor arithmetic with reverse-mode differentiation, plus the
//! optimizer and the finite-difference gradient checker used to verify it.

mod adam;
mod sparse;
mod tape;

use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState};
pub use sparse::SparseMatrix;
pub use tape::{
    concat_cols, l1_normalize_rows_values, l2_normalize_rows_values, masked_row_softmax_values, segment_softmax_values,
    Activation, Gradients, Matrix, Segments, Tape, Tensor,
};

use crate::error::{Error, Result};

/// Inverted dropout: zeroes entries with probability `p` and rescales the
/// survivors by `1 / (1 - p)`.
pub fn dropout<'t, R: Rng + ?Sized>(x: &Tensor<'t>, p: f64, rng: &mut R) -> Result<Tensor<'t>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid(format!("dropout rate {p} not in [0, 1)")));
    }
    if p == 0.0 {
        return Ok(*x);
    }
    let keep = 1.0 - p;
    let mask = Matrix::from_shape_simple_fn(x.shape(), || if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 });
    x.mul(&x.tape().constant(mask))
}

/// Running statistics of one batch-normalization layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormState {
    pub fn new(width: usize) -> Self {
        Self {
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn width(&self) -> usize {
        self.running_mean.len()
    }

    /// Folds one batch's statistics into the running averages.
    pub fn update(&mut self, batch_mean: &Array1<f64>, batch_var: &Array1<f64>) {
        let m = self.momentum;
        for (r, &b) in self.running_mean.iter_mut().zip(batch_mean) {
            *r = (1.0 - m) * *r + m * b;
        }
        for (r, &b) in self.running_var.iter_mut().zip(batch_var) {
            *r = (1.0 - m) * *r + m * b;
        }
    }
}

/// Batch statistics observed during a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

/// Batch normalization with affine `gamma` / `beta` rows (`1×c`).
///
/// Training mode normalizes with batch statistics and returns them so the
/// caller can update `state`; inference mode uses the running statistics.
pub fn batch_norm<'t>(
    x: &Tensor<'t>,
    gamma: &Tensor<'t>,
    beta: &Tensor<'t>,
    state: &BatchNormState,
    training: bool,
) -> Result<(Tensor<'t>, Option<BatchStats>)> {
    let cols = x.shape().1;
    if state.width() != cols {
        return Err(Error::Shape {
            op: "batch_norm",
            lhs: x.shape(),
            rhs: (1, state.width()),
        });
    }
    let tape = x.tape();
    let (normed, stats) = if training {
        let (y, mean, var) = x.standardize_columns(state.eps);
        (y, Some(BatchStats { mean, var }))
    } else {
        let shift = Matrix::from_shape_fn((1, cols), |(_, j)| -state.running_mean[j]);
        let scale = Matrix::from_shape_fn((1, cols), |(_, j)| 1.0 / (state.running_var[j] + state.eps).sqrt());
        let y = x.add_row(&tape.constant(shift))?.mul_row(&tape.constant(scale))?;
        (y, None)
    };
    Ok((normed.mul_row(gamma)?.add_row(beta)?, stats))
}

/// Largest componentwise relative error between the tape gradient of `f` at
/// `x` and central finite differences with step `eps`.
///
/// The relative error of a component is
/// `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check<F>(f: F, x: &Matrix, eps: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, Tensor<'t>) -> Result<Tensor<'t>>,
{
    if eps <= 0.0 {
        return Err(Error::invalid("grad_check step must be positive"));
    }
    let analytic = {
        let tape = Tape::new();
        let input = tape.param(x.clone());
        let out = f(&tape, input)?;
        tape.backward(&out)?.wrt(&input)
    };
    let eval = |probe: &Matrix| -> Result<f64> {
        let tape = Tape::new();
        let input = tape.constant(probe.clone());
        Ok(f(&tape, input)?.scalar())
    };

    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for (idx, &a) in analytic.indexed_iter() {
        let orig = probe[idx];
        probe[idx] = orig + eps;
        let plus = eval(&probe)?;
        probe[idx] = orig - eps;
        let minus = eval(&probe)?;
        probe[idx] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let denom = 1.0f64.max(a.abs()).max(numeric.abs());
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}
