use super::Matrix;
use crate::error::{Error, Result};

/// Moment estimates for the Adam optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
///
/// Moment buffers are allocated on the first call and must keep matching the
/// parameter shapes afterwards.
pub fn adam_step(params: &mut [&mut Matrix], grads: &[Matrix], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::invalid(format!(
            "adam_step: {} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.dim() != g.dim() {
            return Err(Error::Shape {
                op: "adam_step",
                lhs: p.dim(),
                rhs: g.dim(),
            });
        }
    }
    if state.first.is_empty() {
        state.first = grads.iter().map(|g| Matrix::zeros(g.dim())).collect();
        state.second = state.first.clone();
    } else if state.first.len() != grads.len() || state.first.iter().zip(grads).any(|(m, g)| m.dim() != g.dim()) {
        return Err(Error::invalid("adam_step: parameter set changed between steps"));
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first.iter_mut().zip(state.second.iter_mut()))
    {
        ndarray::Zip::from(&mut **p)
            .and(g)
            .and(m)
            .and(v)
            .for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
            });
    }
    Ok(())
}
