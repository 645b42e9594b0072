use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::parallel::prelude::*;
use ndarray::{ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::diffmath::{Matrix, Tensor};
use crate::error::{Error, Result};

/// Score between two entity representations; higher means more similar.
///
/// The bound-inverse variants map a distance `d` to `1 / (1 + d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityKind {
    Cos,
    Dot,
    L1BoundInverse,
    L1Negative,
    L2BoundInverse,
    L2Negative,
}

impl SimilarityKind {
    pub const ALL: [SimilarityKind; 6] = [
        SimilarityKind::Cos,
        SimilarityKind::Dot,
        SimilarityKind::L1BoundInverse,
        SimilarityKind::L1Negative,
        SimilarityKind::L2BoundInverse,
        SimilarityKind::L2Negative,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SimilarityKind::Cos => "cos",
            SimilarityKind::Dot => "dot",
            SimilarityKind::L1BoundInverse => "l1-bound-inverse",
            SimilarityKind::L1Negative => "l1-negative",
            SimilarityKind::L2BoundInverse => "l2-bound-inverse",
            SimilarityKind::L2Negative => "l2-negative",
        }
    }

    /// Score of one pair of vectors.
    pub fn score(self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
        match self {
            SimilarityKind::Cos => {
                let na = a.dot(&a).sqrt();
                let nb = b.dot(&b).sqrt();
                if na == 0.0 || nb == 0.0 {
                    0.0
                } else {
                    a.dot(&b) / (na * nb)
                }
            }
            SimilarityKind::Dot => a.dot(&b),
            SimilarityKind::L1BoundInverse => 1.0 / (1.0 + l1(a, b)),
            SimilarityKind::L1Negative => -l1(a, b),
            SimilarityKind::L2BoundInverse => 1.0 / (1.0 + l2(a, b)),
            SimilarityKind::L2Negative => -l2(a, b),
        }
    }
}

fn l1(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn l2(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl fmt::Display for SimilarityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SimilarityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SimilarityKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown similarity `{s}`")))
    }
}

/// All-pairs scores, `|left| × |right|`. Rows are computed in parallel.
pub fn similarity_matrix(left: &Matrix, right: &Matrix, kind: SimilarityKind) -> Result<Matrix> {
    if left.ncols() != right.ncols() {
        return Err(Error::Shape {
            op: "similarity_matrix",
            lhs: left.dim(),
            rhs: right.dim(),
        });
    }
    let mut out = Matrix::zeros((left.nrows(), right.nrows()));
    match kind {
        SimilarityKind::Dot => out.assign(&left.dot(&right.t())),
        SimilarityKind::Cos => {
            let l = crate::diffmath::l2_normalize_rows_values(left);
            let r = crate::diffmath::l2_normalize_rows_values(right);
            out.assign(&l.dot(&r.t()));
        }
        _ => {
            out.axis_iter_mut(Axis(0))
                .into_par_iter()
                .zip(left.axis_iter(Axis(0)))
                .for_each(|(mut row, a)| {
                    for (o, b) in row.iter_mut().zip(right.rows()) {
                        *o = kind.score(a, b);
                    }
                });
        }
    }
    Ok(out)
}

/// Differentiable scores of the pairs `(left[li[k]], right[ri[k]])` as an
/// `m×1` column.
pub fn pair_similarity<'t>(
    left: &Tensor<'t>,
    right: &Tensor<'t>,
    li: &Arc<Vec<usize>>,
    ri: &Arc<Vec<usize>>,
    kind: SimilarityKind,
) -> Result<Tensor<'t>> {
    if left.shape().1 != right.shape().1 {
        return Err(Error::Shape {
            op: "pair_similarity",
            lhs: left.shape(),
            rhs: right.shape(),
        });
    }
    if li.len() != ri.len() {
        return Err(Error::invalid("pair index lists differ in length"));
    }
    let score = match kind {
        SimilarityKind::Cos => {
            let a = left.l2_normalize_rows().gather_rows(li)?;
            let b = right.l2_normalize_rows().gather_rows(ri)?;
            a.mul(&b)?.row_sum()
        }
        SimilarityKind::Dot => {
            let a = left.gather_rows(li)?;
            let b = right.gather_rows(ri)?;
            a.mul(&b)?.row_sum()
        }
        SimilarityKind::L1Negative | SimilarityKind::L1BoundInverse => {
            let d = left.gather_rows(li)?.sub(&right.gather_rows(ri)?)?;
            let dist = d.abs().row_sum();
            if kind == SimilarityKind::L1Negative {
                dist.neg()
            } else {
                dist.add_scalar(1.0).recip()
            }
        }
        SimilarityKind::L2Negative | SimilarityKind::L2BoundInverse => {
            let d = left.gather_rows(li)?.sub(&right.gather_rows(ri)?)?;
            let dist = d.mul(&d)?.row_sum().sqrt();
            if kind == SimilarityKind::L2Negative {
                dist.neg()
            } else {
                dist.add_scalar(1.0).recip()
            }
        }
    };
    Ok(score)
}
