//! Thin layer over faer's sparse factorizations plus a row-major matrix for residuals.

use std::collections::BTreeMap;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use nalgebra::Vector3;

use super::ArapError;

/// Square sparse matrix accumulated from (row, col, value) contributions.
#[derive(Debug, Clone, Default)]
pub(crate) struct Assembly {
    entries: BTreeMap<(usize, usize), f64>,
}

impl Assembly {
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        *self.entries.entry((i, j)).or_insert(0.0) += v;
    }

    pub fn to_faer(&self, n: usize) -> Result<SparseColMat<usize, f64>, ArapError> {
        let triplets: Vec<_> = self.entries.iter().map(|(&(i, j), &v)| Triplet::new(i, j, v)).collect();
        SparseColMat::try_new_from_triplets(n, n, &triplets).map_err(|e| ArapError::Factorization(format!("{e:?}")))
    }

    pub fn to_rows(&self, n: usize) -> RowMatrix {
        let mut rows = vec![Vec::new(); n];
        for (&(i, j), &v) in &self.entries {
            rows[i].push((j, v));
        }
        RowMatrix { rows }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct RowMatrix {
    rows: Vec<Vec<(usize, f64)>>,
}

impl RowMatrix {
    pub fn mul(&self, x: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        self.rows.iter().map(|r| r.iter().map(|&(j, v)| v * x[j]).sum()).collect()
    }
}

pub(crate) fn to_mat(x: &[Vector3<f64>]) -> Mat<f64> {
    Mat::from_fn(x.len(), 3, |i, k| x[i][k])
}

pub(crate) fn from_mat(m: &Mat<f64>) -> Result<Vec<Vector3<f64>>, ArapError> {
    let out: Vec<_> = (0..m.nrows()).map(|i| Vector3::new(m[(i, 0)], m[(i, 1)], m[(i, 2)])).collect();
    if out.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
        return Err(ArapError::NonFinite);
    }
    Ok(out)
}

pub(crate) struct Cholesky(Llt<usize, f64>);

impl Cholesky {
    pub fn new(a: &SparseColMat<usize, f64>) -> Result<Self, ArapError> {
        a.sp_cholesky(Side::Lower).map(Self).map_err(|e| ArapError::Factorization(format!("{e:?}")))
    }

    pub fn solve(&self, b: &[Vector3<f64>]) -> Result<Vec<Vector3<f64>>, ArapError> {
        from_mat(&self.0.solve(to_mat(b)))
    }
}

pub(crate) struct SparseLu(Lu<usize, f64>);

impl SparseLu {
    pub fn new(a: &SparseColMat<usize, f64>) -> Result<Self, ArapError> {
        a.sp_lu().map(Self).map_err(|e| ArapError::Factorization(format!("{e:?}")))
    }

    pub fn solve(&self, b: &[Vector3<f64>]) -> Result<Vec<Vector3<f64>>, ArapError> {
        from_mat(&self.0.solve(to_mat(b)))
    }
}
