use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffmath::{Matrix, Tape, Tensor};

/// Handle to one array in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(usize);

/// Named trainable arrays of one model, in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// Registers a `rows×cols` matrix drawn from `U(-b, b)` with
    /// `b = 1 / sqrt(fan_in)`.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut R,
    ) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let m = Matrix::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound));
        self.add(name, m)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn set(&mut self, id: ParamId, value: Matrix) {
        assert_eq!(self.values[id.0].dim(), value.dim(), "parameter shape changed");
        self.values[id.0] = value;
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Matrix> {
        self.values.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    /// Places every array on `tape`, as parameters or as constants.
    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> Bound<'t> {
        Bound {
            tensors: self.values.iter().map(|v| tape.leaf(v.clone(), trainable)).collect(),
        }
    }
}

/// Tape handles of a bound [`ParamStore`], indexed by [`ParamId`].
pub struct Bound<'t> {
    tensors: Vec<Tensor<'t>>,
}

impl<'t> Bound<'t> {
    /// Handles in [`ParamStore`] order, e.g. with some arrays substituted.
    pub fn from_tensors(tensors: Vec<Tensor<'t>>) -> Self {
        Self { tensors }
    }

    pub fn get(&self, id: ParamId) -> Tensor<'t> {
        self.tensors[id.0]
    }

    pub fn tensors(&self) -> &[Tensor<'t>] {
        &self.tensors
    }
}
