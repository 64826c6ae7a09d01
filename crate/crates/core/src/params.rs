//! Named parameter storage.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// What a parameter is used for; decides initialization and L2 scope.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    AttentionVector,
    Bias,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub value: Matrix,
}

/// Ordered list of named parameters. Order is stable and used for
/// checkpoints and optimizer state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
}

/// Uniform Glorot initialization: `U(−a, a)` with `a = √(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let a = libm::sqrt(6.0 / (rows + cols) as f64);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-a..a))
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a parameter and returns its index.
    pub fn push(&mut self, name: &str, kind: ParamKind, value: Matrix) -> usize {
        debug_assert!(self.index_of(name).is_none(), "duplicate parameter {name}");
        self.params.push(Param {
            name: name.to_string(),
            kind,
            value,
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.index_of(name).map(|i| &self.params[i].value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        let i = self.index_of(name)?;
        Some(&mut self.params[i].value)
    }

    pub fn at(&self, index: usize) -> &Param {
        &self.params[index]
    }

    pub fn at_mut(&mut self, index: usize) -> &mut Param {
        &mut self.params[index]
    }

    /// Replaces values with `other`'s, which must have the same names and shapes.
    pub fn load_values<'a>(&mut self, other: impl IntoIterator<Item = (&'a str, &'a Matrix)>) -> Result<()> {
        let mut seen = 0;
        for (name, value) in other {
            let i = self
                .index_of(name)
                .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
            let p = &mut self.params[i];
            if p.value.shape() != value.shape() {
                return Err(Error::ShapeMismatch {
                    op: "load_values",
                    lhs: p.value.shape(),
                    rhs: value.shape(),
                });
            }
            p.value = value.clone();
            seen += 1;
        }
        if seen != self.params.len() {
            return Err(Error::InvalidConfig(alloc::format!(
                "expected {} parameters, got {seen}",
                self.params.len()
            )));
        }
        Ok(())
    }
}
