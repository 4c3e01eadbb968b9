//! Sample vectors with stable integer ids.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

/// A d-dimensional real sample vector.
pub type Vector = DVector<f64>;

/// Checks every entry is finite, returning the offending index otherwise.
pub fn check_finite(v: &Vector) -> Result<()> {
    for (i, x) in v.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::NonFiniteEntry { index: i });
        }
    }
    Ok(())
}

/// A set of vectors keyed by stable ids. Removal never renumbers; iteration
/// is always in ascending id order, which every tie-break and random draw in
/// the crate relies on.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    points: BTreeMap<u64, Vector>,
}

impl PointSet {
    pub fn new(dim: usize) -> Self {
        PointSet {
            dim,
            points: BTreeMap::new(),
        }
    }

    /// Builds a set from rows, assigning ids `0..n`.
    pub fn from_rows(dim: usize, rows: Vec<Vector>) -> Result<Self> {
        let mut set = PointSet::new(dim);
        for (i, row) in rows.into_iter().enumerate() {
            set.insert(i as u64, row)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, id: u64, v: Vector) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        check_finite(&v)?;
        if self.points.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.points.insert(id, v);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&Vector> {
        self.points.get(&id)
    }

    pub fn contains(&self, id: u64) -> bool {
        self.points.contains_key(&id)
    }

    /// Ascending-id iteration.
    pub fn iter(&self) -> impl Iterator<Item = (u64, &Vector)> {
        self.points.iter().map(|(id, v)| (*id, v))
    }

    pub fn ids(&self) -> Vec<u64> {
        self.points.keys().copied().collect()
    }

    pub fn remove(&mut self, id: u64) -> Option<Vector> {
        self.points.remove(&id)
    }

    pub fn remove_many(&mut self, ids: &[u64]) {
        for id in ids {
            self.points.remove(id);
        }
    }

    /// Replaces the vector stored under an existing id.
    pub fn replace(&mut self, id: u64, v: Vector) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        check_finite(&v)?;
        if !self.points.contains_key(&id) {
            return Err(Error::InvalidSpec(format!("no point with id {id}")));
        }
        self.points.insert(id, v);
        Ok(())
    }

    /// Dense d-by-n matrix whose columns are the members in ascending id order.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(self.dim, n);
        for (j, (_, v)) in self.points.iter().enumerate() {
            m.set_column(j, v);
        }
        m
    }
}
