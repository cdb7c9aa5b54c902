use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::Array;
use crate::error::{Error, Result};

/// Index of a named parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered collection of named, learnable arrays.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    arrays: Vec<Array>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, array: Array) -> Result<ParamId> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(Error::invalid("parameter name", format!("duplicate `{name}`")));
        }
        self.names.push(name);
        self.arrays.push(array);
        Ok(ParamId(self.arrays.len() - 1))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Array {
        &self.arrays[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array {
        &mut self.arrays[id.0]
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.arrays.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array)> {
        self.names.iter().map(String::as_str).zip(self.arrays.iter())
    }

    /// Same names and shapes, values ignored.
    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.names == other.names
            && self
                .arrays
                .iter()
                .zip(&other.arrays)
                .all(|(a, b)| a.shape() == b.shape())
    }
}

/// Gradient buffers mirroring a [`ParamStore`], plus a record of which
/// parameters were reached by at least one backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    values: Vec<Vec<f64>>,
    touched: Vec<bool>,
}

impl Gradients {
    pub fn zeros_like(params: &ParamStore) -> Self {
        Gradients {
            values: params.arrays.iter().map(|a| vec![0.0; a.len()]).collect(),
            touched: vec![false; params.len()],
        }
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.values[id.0]
    }

    pub fn touched(&self, id: ParamId) -> bool {
        self.touched[id.0]
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, offset: usize, grad: &[f64]) {
        self.touched[id.0] = true;
        for (dst, g) in self.values[id.0][offset..offset + grad.len()].iter_mut().zip(grad) {
            *dst += g;
        }
    }

    /// Adds `other` into `self`, entry by entry.
    pub fn merge(&mut self, other: &Gradients) {
        for (i, (dst, src)) in self.values.iter_mut().zip(&other.values).enumerate() {
            if other.touched[i] {
                self.touched[i] = true;
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.values.iter_mut().flatten() {
            *v *= factor;
        }
    }
}
