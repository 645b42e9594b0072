//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation applied to [`Tensor`] handles. Values
//! are computed eagerly; [`Tape::backward`] walks the record in reverse and
//! accumulates gradients for every node that depends on a parameter leaf.
//! Tapes are single-owner and meant to be rebuilt for every forward pass.

use std::cell::{Ref, RefCell};
use std::sync::Arc;

use ndarray::{Array1, Array2, Axis, Zip};

use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

pub type Matrix = Array2<f64>;

/// Elementwise nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Sigmoid,
}

impl Activation {
    pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Sigmoid => sigmoid(x),
        }
    }

    // Subgradient at the kink is taken from the left branch.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Unary {
    Act(Activation),
    Exp,
    Ln,
    Abs,
    Sqrt,
    Recip,
}

impl Unary {
    fn forward(self, x: f64) -> f64 {
        match self {
            Unary::Act(a) => a.apply(x),
            Unary::Exp => x.exp(),
            Unary::Ln => x.ln(),
            Unary::Abs => x.abs(),
            Unary::Sqrt => x.sqrt(),
            Unary::Recip => 1.0 / x,
        }
    }

    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Act(a) => a.derivative(x, y),
            Unary::Exp => y,
            Unary::Ln => 1.0 / x,
            Unary::Abs => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Unary::Sqrt => {
                if y > 0.0 {
                    0.5 / y
                } else {
                    0.0
                }
            }
            Unary::Recip => -y * y,
        }
    }
}

/// Segment membership for [`Tensor::segment_softmax`]: entry `k` belongs to
/// segment `ids[k]`, with `ids[k] < count`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segments {
    ids: Vec<usize>,
    count: usize,
}

impl Segments {
    pub fn new(ids: Vec<usize>, count: usize) -> Result<Self> {
        if let Some(&bad) = ids.iter().find(|&&s| s >= count) {
            return Err(Error::invalid(format!(
                "segment id {bad} out of range for {count} segments"
            )));
        }
        Ok(Self { ids, count })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    SpMM(Arc<SparseMatrix>, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    MulCol(usize, usize),
    OuterAdd(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Unary(usize, Unary),
    MaskedSoftmax(usize),
    SegmentSoftmax(usize, Arc<Segments>),
    Gather(usize, Arc<Vec<usize>>),
    ScatterAdd(usize, Arc<Vec<usize>>),
    RowSum(usize),
    SumAll(usize),
    Concat(Vec<usize>),
    L2Normalize(usize),
    L1Normalize(usize),
    Standardize(usize, Array1<f64>),
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Operation record for one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    non_finite: RefCell<Option<(usize, &'static str)>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Tensor<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Tensor<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient with respect to `t`; zeros if the loss does not depend on it.
    pub fn wrt(&self, t: &Tensor<'_>) -> Matrix {
        match &self.grads[t.id] {
            Some(g) => g.clone(),
            None => Matrix::zeros(self.shapes[t.id]),
        }
    }

    pub fn get(&self, t: &Tensor<'_>) -> Option<&Matrix> {
        self.grads[t.id].as_ref()
    }
}

fn shape_err(op: &'static str, a: &Matrix, b: &Matrix) -> Error {
    Error::Shape {
        op,
        lhs: a.dim(),
        rhs: b.dim(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A leaf that receives gradients.
    pub fn param(&self, value: Matrix) -> Tensor<'_> {
        self.push(value, Op::Leaf, true, "param")
    }

    /// A leaf treated as constant.
    pub fn constant(&self, value: Matrix) -> Tensor<'_> {
        self.push(value, Op::Leaf, false, "constant")
    }

    pub fn leaf(&self, value: Matrix, requires_grad: bool) -> Tensor<'_> {
        self.push(value, Op::Leaf, requires_grad, "leaf")
    }

    /// First operation that produced a non-finite value, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.non_finite.borrow().map(|(_, name)| name)
    }

    fn push(&self, value: Matrix, op: Op, requires_grad: bool, name: &'static str) -> Tensor<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        if self.non_finite.borrow().is_none() && value.iter().any(|v| !v.is_finite()) {
            *self.non_finite.borrow_mut() = Some((id, name));
        }
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Tensor { tape: self, id }
    }

    fn needs(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    fn derive(&self, value: Matrix, op: Op, inputs: &[usize], name: &'static str) -> Tensor<'_> {
        let rg = self.needs(inputs);
        self.push(value, op, rg, name)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: &Tensor<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let shapes: Vec<_> = nodes.iter().map(|n| n.value.dim()).collect();
        if nodes[loss.id].value.dim() != (1, 1) {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[loss.id].value.dim()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Matrix::ones((1, 1)));

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let val = |i: usize| &nodes[i].value;
            let mut acc = |i: usize, d: Matrix| {
                if !nodes[i].requires_grad {
                    return;
                }
                match &mut grads[i] {
                    Some(existing) => *existing += &d,
                    slot @ None => *slot = Some(d),
                }
            };
            match &node.op {
                Op::Leaf => unreachable!("leaves keep their gradient"),
                Op::MatMul(a, b) => {
                    if nodes[*a].requires_grad {
                        acc(*a, g.dot(&val(*b).t()));
                    }
                    if nodes[*b].requires_grad {
                        acc(*b, val(*a).t().dot(&g));
                    }
                }
                Op::SpMM(s, x) => acc(*x, s.transpose_matmul_dense(&g)),
                Op::Transpose(a) => acc(*a, g.t().to_owned()),
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Sub(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, -g);
                }
                Op::Mul(a, b) => {
                    if nodes[*a].requires_grad {
                        acc(*a, &g * val(*b));
                    }
                    if nodes[*b].requires_grad {
                        acc(*b, &g * val(*a));
                    }
                }
                Op::AddRow(x, r) => {
                    let dr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(*x, g);
                    acc(*r, dr);
                }
                Op::MulRow(x, r) => {
                    if nodes[*r].requires_grad {
                        let dr = (&g * val(*x)).sum_axis(Axis(0)).insert_axis(Axis(0));
                        acc(*r, dr);
                    }
                    if nodes[*x].requires_grad {
                        acc(*x, &g * val(*r));
                    }
                }
                Op::MulCol(x, w) => {
                    if nodes[*w].requires_grad {
                        let dw = (&g * val(*x)).sum_axis(Axis(1)).insert_axis(Axis(1));
                        acc(*w, dw);
                    }
                    if nodes[*x].requires_grad {
                        acc(*x, &g * val(*w));
                    }
                }
                Op::OuterAdd(a, b) => {
                    acc(*a, g.sum_axis(Axis(1)).insert_axis(Axis(1)));
                    acc(*b, g.sum_axis(Axis(0)).insert_axis(Axis(1)));
                }
                Op::Scale(x, f) => acc(*x, g * *f),
                Op::AddScalar(x) => acc(*x, g),
                Op::Unary(x, u) => {
                    let mut d = g;
                    Zip::from(&mut d)
                        .and(val(*x))
                        .and(&node.value)
                        .for_each(|d, &x, &y| *d *= u.derivative(x, y));
                    acc(*x, d);
                }
                Op::MaskedSoftmax(x) => acc(*x, softmax_rows_backward(&node.value, &g)),
                Op::SegmentSoftmax(x, seg) => {
                    let y = &node.value;
                    let mut dots = vec![0.0; seg.count];
                    for (k, &s) in seg.ids.iter().enumerate() {
                        dots[s] += y[[k, 0]] * g[[k, 0]];
                    }
                    let mut d = Matrix::zeros(y.dim());
                    for (k, &s) in seg.ids.iter().enumerate() {
                        d[[k, 0]] = y[[k, 0]] * (g[[k, 0]] - dots[s]);
                    }
                    acc(*x, d);
                }
                Op::Gather(x, idx) => {
                    let mut d = Matrix::zeros(shapes[*x]);
                    for (k, &i) in idx.iter().enumerate() {
                        d.row_mut(i).scaled_add(1.0, &g.row(k));
                    }
                    acc(*x, d);
                }
                Op::ScatterAdd(x, idx) => {
                    let mut d = Matrix::zeros(shapes[*x]);
                    for (k, &i) in idx.iter().enumerate() {
                        d.row_mut(k).assign(&g.row(i));
                    }
                    acc(*x, d);
                }
                Op::RowSum(x) => {
                    let (r, c) = shapes[*x];
                    let mut d = Matrix::zeros((r, c));
                    for (mut row, &gi) in d.rows_mut().into_iter().zip(g.column(0)) {
                        row.fill(gi);
                    }
                    acc(*x, d);
                }
                Op::SumAll(x) => acc(*x, Matrix::from_elem(shapes[*x], g[[0, 0]])),
                Op::Concat(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = shapes[p].1;
                        acc(p, g.slice(ndarray::s![.., start..start + w]).to_owned());
                        start += w;
                    }
                }
                Op::L2Normalize(x) => {
                    let xv = val(*x);
                    let y = &node.value;
                    let mut d = Matrix::zeros(y.dim());
                    for i in 0..y.nrows() {
                        let norm = xv.row(i).dot(&xv.row(i)).sqrt();
                        if norm == 0.0 {
                            continue;
                        }
                        let proj = y.row(i).dot(&g.row(i));
                        let mut dr = d.row_mut(i);
                        dr.assign(&g.row(i));
                        dr.scaled_add(-proj, &y.row(i));
                        dr.mapv_inplace(|v| v / norm);
                    }
                    acc(*x, d);
                }
                Op::L1Normalize(x) => {
                    let xv = val(*x);
                    let mut d = Matrix::zeros(xv.dim());
                    for i in 0..xv.nrows() {
                        let s: f64 = xv.row(i).iter().map(|v| v.abs()).sum();
                        if s == 0.0 {
                            continue;
                        }
                        let gx = g.row(i).dot(&xv.row(i));
                        for j in 0..xv.ncols() {
                            let sign = xv[[i, j]].signum() * (xv[[i, j]] != 0.0) as u8 as f64;
                            d[[i, j]] = g[[i, j]] / s - sign * gx / (s * s);
                        }
                    }
                    acc(*x, d);
                }
                Op::Standardize(x, inv_std) => {
                    let y = &node.value;
                    let n = y.nrows() as f64;
                    let sum_g = g.sum_axis(Axis(0));
                    let sum_gy = (&g * y).sum_axis(Axis(0));
                    let mut d = Matrix::zeros(y.dim());
                    Zip::indexed(&mut d).for_each(|(i, j), d| {
                        *d = inv_std[j] / n * (n * g[[i, j]] - sum_g[j] - y[[i, j]] * sum_gy[j]);
                    });
                    acc(*x, d);
                }
            }
        }
        Ok(Gradients { grads, shapes })
    }
}

fn softmax_rows_backward(y: &Matrix, g: &Matrix) -> Matrix {
    let mut d = Matrix::zeros(y.dim());
    for i in 0..y.nrows() {
        let dot = y.row(i).dot(&g.row(i));
        Zip::from(d.row_mut(i))
            .and(y.row(i))
            .and(g.row(i))
            .for_each(|d, &y, &g| *d = y * (g - dot));
    }
    d
}

/// Row-wise softmax restricted to `mask`; masked entries are exactly zero and
/// fully masked rows yield a zero row.
pub fn masked_row_softmax_values(logits: &Matrix, mask: &Array2<bool>) -> Matrix {
    let mut out = Matrix::zeros(logits.dim());
    for i in 0..logits.nrows() {
        let row = logits.row(i);
        let m = mask.row(i);
        let max = row
            .iter()
            .zip(m)
            .filter(|(_, &keep)| keep)
            .map(|(&v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            continue;
        }
        let mut total = 0.0;
        for j in 0..row.len() {
            if m[j] {
                let e = (row[j] - max).exp();
                out[[i, j]] = e;
                total += e;
            }
        }
        out.row_mut(i).mapv_inplace(|v| v / total);
    }
    out
}

/// Softmax of `values` within each segment.
pub fn segment_softmax_values(values: &[f64], seg: &Segments) -> Vec<f64> {
    let mut max = vec![f64::NEG_INFINITY; seg.count];
    for (&v, &s) in values.iter().zip(&seg.ids) {
        max[s] = max[s].max(v);
    }
    let exps: Vec<f64> = values.iter().zip(&seg.ids).map(|(&v, &s)| (v - max[s]).exp()).collect();
    let mut total = vec![0.0; seg.count];
    for (&e, &s) in exps.iter().zip(&seg.ids) {
        total[s] += e;
    }
    exps.iter().zip(&seg.ids).map(|(&e, &s)| e / total[s]).collect()
}

pub fn l2_normalize_rows_values(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    out
}

pub fn l1_normalize_rows_values(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let s: f64 = row.iter().map(|v| v.abs()).sum();
        if s > 0.0 {
            row.mapv_inplace(|v| v / s);
        }
    }
    out
}

impl<'t> Tensor<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Ref<'t, Matrix> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn to_matrix(&self) -> Matrix {
        self.value().clone()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value().dim()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Value of a 1×1 tensor.
    pub fn scalar(&self) -> f64 {
        let v = self.value();
        debug_assert_eq!(v.dim(), (1, 1));
        v[[0, 0]]
    }

    fn same_tape(&self, other: &Tensor<'_>) {
        assert!(std::ptr::eq(self.tape, other.tape), "tensors belong to different tapes");
    }

    pub fn matmul(&self, other: &Tensor<'t>) -> Result<Tensor<'t>> {
        self.same_tape(other);
        let v = {
            let (a, b) = (self.value(), other.value());
            if a.ncols() != b.nrows() {
                return Err(shape_err("matmul", &a, &b));
            }
            a.dot(&*b)
        };
        Ok(self
            .tape
            .derive(v, Op::MatMul(self.id, other.id), &[self.id, other.id], "matmul"))
    }

    /// `s * self` where `s` is a constant sparse matrix.
    pub fn sparse_matmul(&self, s: &Arc<SparseMatrix>) -> Result<Tensor<'t>> {
        let v = s.matmul_dense(&self.value())?;
        Ok(self
            .tape
            .derive(v, Op::SpMM(Arc::clone(s), self.id), &[self.id], "sparse_matmul"))
    }

    pub fn t(&self) -> Tensor<'t> {
        let v = self.value().t().to_owned();
        self.tape.derive(v, Op::Transpose(self.id), &[self.id], "transpose")
    }

    fn binary(
        &self,
        other: &Tensor<'t>,
        name: &'static str,
        f: impl Fn(&Matrix, &Matrix) -> Matrix,
        op: Op,
    ) -> Result<Tensor<'t>> {
        self.same_tape(other);
        let v = {
            let (a, b) = (self.value(), other.value());
            if a.dim() != b.dim() {
                return Err(shape_err(name, &a, &b));
            }
            f(&a, &b)
        };
        Ok(self.tape.derive(v, op, &[self.id, other.id], name))
    }

    pub fn add(&self, other: &Tensor<'t>) -> Result<Tensor<'t>> {
        self.binary(other, "add", |a, b| a + b, Op::Add(self.id, other.id))
    }

    pub fn sub(&self, other: &Tensor<'t>) -> Result<Tensor<'t>> {
        self.binary(other, "sub", |a, b| a - b, Op::Sub(self.id, other.id))
    }

    pub fn mul(&self, other: &Tensor<'t>) -> Result<Tensor<'t>> {
        self.binary(other, "mul", |a, b| a * b, Op::Mul(self.id, other.id))
    }

    /// Adds a `1×c` row to every row.
    pub fn add_row(&self, row: &Tensor<'t>) -> Result<Tensor<'t>> {
        self.same_tape(row);
        let v = {
            let (x, r) = (self.value(), row.value());
            if r.nrows() != 1 || r.ncols() != x.ncols() {
                return Err(shape_err("add_row", &x, &r));
            }
            &*x + &*r
        };
        Ok(self
            .tape
            .derive(v, Op::AddRow(self.id, row.id), &[self.id, row.id], "add_row"))
    }

    /// Multiplies every row elementwise by a `1×c` row.
    pub fn mul_row(&self, row: &Tensor<'t>) -> Result<Tensor<'t>> {
        self.same_tape(row);
        let v = {
            let (x, r) = (self.value(), row.value());
            if r.nrows() != 1 || r.ncols() != x.ncols() {
                return Err(shape_err("mul_row", &x, &r));
            }
            &*x * &*r
        };
        Ok(self
            .tape
            .derive(v, Op::MulRow(self.id, row.id), &[self.id, row.id], "mul_row"))
    }

    /// Scales row `i` by `col[i]` for an `m×1` column.
    pub fn mul_col(&self, col: &Tensor<'t>) -> Result<Tensor<'t>> {
        self.same_tape(col);
        let v = {
            let (x, w) = (self.value(), col.value());
            if w.ncols() != 1 || w.nrows() != x.nrows() {
                return Err(shape_err("mul_col", &x, &w));
            }
            &*x * &*w
        };
        Ok(self
            .tape
            .derive(v, Op::MulCol(self.id, col.id), &[self.id, col.id], "mul_col"))
    }

    /// For column vectors `a` (m×1) and `b` (n×1): `out[i][j] = a[i] + b[j]`.
    pub fn outer_add(&self, other: &Tensor<'t>) -> Result<Tensor<'t>> {
        self.same_tape(other);
        let v = {
            let (a, b) = (self.value(), other.value());
            if a.ncols() != 1 || b.ncols() != 1 {
                return Err(shape_err("outer_add", &a, &b));
            }
            Matrix::from_shape_fn((a.nrows(), b.nrows()), |(i, j)| a[[i, 0]] + b[[j, 0]])
        };
        Ok(self
            .tape
            .derive(v, Op::OuterAdd(self.id, other.id), &[self.id, other.id], "outer_add"))
    }

    pub fn scale(&self, f: f64) -> Tensor<'t> {
        let v = &*self.value() * f;
        self.tape.derive(v, Op::Scale(self.id, f), &[self.id], "scale")
    }

    pub fn neg(&self) -> Tensor<'t> {
        self.scale(-1.0)
    }

    pub fn add_scalar(&self, c: f64) -> Tensor<'t> {
        let v = &*self.value() + c;
        self.tape.derive(v, Op::AddScalar(self.id), &[self.id], "add_scalar")
    }

    fn unary(&self, u: Unary, name: &'static str) -> Tensor<'t> {
        let v = self.value().mapv(|x| u.forward(x));
        self.tape.derive(v, Op::Unary(self.id, u), &[self.id], name)
    }

    pub fn activation(&self, kind: Activation) -> Tensor<'t> {
        self.unary(Unary::Act(kind), "activation")
    }

    pub fn relu(&self) -> Tensor<'t> {
        self.activation(Activation::Relu)
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor<'t> {
        self.activation(Activation::LeakyRelu(slope))
    }

    pub fn sigmoid(&self) -> Tensor<'t> {
        self.activation(Activation::Sigmoid)
    }

    pub fn exp(&self) -> Tensor<'t> {
        self.unary(Unary::Exp, "exp")
    }

    pub fn ln(&self) -> Tensor<'t> {
        self.unary(Unary::Ln, "ln")
    }

    pub fn abs(&self) -> Tensor<'t> {
        self.unary(Unary::Abs, "abs")
    }

    /// Square root; the gradient at exactly zero is taken as zero.
    pub fn sqrt(&self) -> Tensor<'t> {
        self.unary(Unary::Sqrt, "sqrt")
    }

    pub fn recip(&self) -> Tensor<'t> {
        self.unary(Unary::Recip, "recip")
    }

    pub fn masked_row_softmax(&self, mask: &Arc<Array2<bool>>) -> Result<Tensor<'t>> {
        let v = {
            let x = self.value();
            if x.dim() != mask.dim() {
                return Err(Error::Shape {
                    op: "masked_row_softmax",
                    lhs: x.dim(),
                    rhs: mask.dim(),
                });
            }
            masked_row_softmax_values(&x, mask)
        };
        Ok(self
            .tape
            .derive(v, Op::MaskedSoftmax(self.id), &[self.id], "masked_row_softmax"))
    }

    /// Softmax of an `m×1` column within each segment.
    pub fn segment_softmax(&self, seg: &Arc<Segments>) -> Result<Tensor<'t>> {
        let v = {
            let x = self.value();
            if x.ncols() != 1 || x.nrows() != seg.len() {
                return Err(Error::Shape {
                    op: "segment_softmax",
                    lhs: x.dim(),
                    rhs: (seg.len(), 1),
                });
            }
            let vals: Vec<f64> = x.column(0).to_vec();
            Matrix::from_shape_vec((vals.len(), 1), segment_softmax_values(&vals, seg)).expect("column shape")
        };
        Ok(self.tape.derive(
            v,
            Op::SegmentSoftmax(self.id, Arc::clone(seg)),
            &[self.id],
            "segment_softmax",
        ))
    }

    /// Row `k` of the result is row `idx[k]` of `self`.
    pub fn gather_rows(&self, idx: &Arc<Vec<usize>>) -> Result<Tensor<'t>> {
        let v = {
            let x = self.value();
            if let Some(&bad) = idx.iter().find(|&&i| i >= x.nrows()) {
                return Err(Error::invalid(format!(
                    "gather index {bad} out of range for {} rows",
                    x.nrows()
                )));
            }
            x.select(Axis(0), idx)
        };
        Ok(self
            .tape
            .derive(v, Op::Gather(self.id, Arc::clone(idx)), &[self.id], "gather_rows"))
    }

    /// Row `k` of `self` is added into row `idx[k]` of an `n`-row result.
    pub fn scatter_add_rows(&self, idx: &Arc<Vec<usize>>, n: usize) -> Result<Tensor<'t>> {
        let v = {
            let x = self.value();
            if idx.len() != x.nrows() {
                return Err(Error::Shape {
                    op: "scatter_add_rows",
                    lhs: x.dim(),
                    rhs: (idx.len(), 1),
                });
            }
            if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
                return Err(Error::invalid(format!("scatter index {bad} out of range for {n} rows")));
            }
            let mut out = Matrix::zeros((n, x.ncols()));
            for (k, &i) in idx.iter().enumerate() {
                out.row_mut(i).scaled_add(1.0, &x.row(k));
            }
            out
        };
        Ok(self.tape.derive(
            v,
            Op::ScatterAdd(self.id, Arc::clone(idx)),
            &[self.id],
            "scatter_add_rows",
        ))
    }

    /// `m×1` column of row sums.
    pub fn row_sum(&self) -> Tensor<'t> {
        let v = self.value().sum_axis(Axis(1)).insert_axis(Axis(1));
        self.tape.derive(v, Op::RowSum(self.id), &[self.id], "row_sum")
    }

    pub fn sum(&self) -> Tensor<'t> {
        let v = Matrix::from_elem((1, 1), self.value().sum());
        self.tape.derive(v, Op::SumAll(self.id), &[self.id], "sum")
    }

    pub fn mean(&self) -> Tensor<'t> {
        let n = self.value().len().max(1) as f64;
        self.sum().scale(1.0 / n)
    }

    pub fn concat_cols(&self, other: &Tensor<'t>) -> Result<Tensor<'t>> {
        concat_cols(&[*self, *other])
    }

    /// Rows scaled to unit Euclidean norm; zero rows pass through unchanged.
    pub fn l2_normalize_rows(&self) -> Tensor<'t> {
        let v = l2_normalize_rows_values(&self.value());
        self.tape
            .derive(v, Op::L2Normalize(self.id), &[self.id], "l2_normalize_rows")
    }

    /// Rows scaled to unit l1 norm; zero rows pass through unchanged.
    pub fn l1_normalize_rows(&self) -> Tensor<'t> {
        let v = l1_normalize_rows_values(&self.value());
        self.tape
            .derive(v, Op::L1Normalize(self.id), &[self.id], "l1_normalize_rows")
    }

    /// Per-column standardization with batch statistics. Returns the output
    /// together with the batch mean and biased variance.
    pub fn standardize_columns(&self, eps: f64) -> (Tensor<'t>, Array1<f64>, Array1<f64>) {
        let (v, mean, var, inv_std) = {
            let x = self.value();
            let n = x.nrows().max(1) as f64;
            let mean = x.sum_axis(Axis(0)) / n;
            let centered = &*x - &mean;
            let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / n;
            let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
            (&centered * &inv_std, mean, var, inv_std)
        };
        let t = self
            .tape
            .derive(v, Op::Standardize(self.id, inv_std), &[self.id], "standardize_columns");
        (t, mean, var)
    }
}

/// Concatenates tensors with equal row counts along columns.
pub fn concat_cols<'t>(parts: &[Tensor<'t>]) -> Result<Tensor<'t>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::invalid("concat_cols of zero tensors"))?;
    let tape = first.tape;
    let v = {
        let values: Vec<Ref<'_, Matrix>> = parts.iter().map(|p| p.value()).collect();
        let rows = values[0].nrows();
        for v in &values[1..] {
            if v.nrows() != rows {
                return Err(shape_err("concat_cols", &values[0], v));
            }
        }
        let views: Vec<_> = values.iter().map(|v| v.view()).collect();
        ndarray::concatenate(Axis(1), &views).expect("row counts checked")
    };
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    Ok(tape.derive(v, Op::Concat(ids.clone()), &ids, "concat_cols"))
}
