//! As-rigid-as-possible deformation: handle-constrained surface ARAP with hard constraints by row
//! elimination, and tetrahedral ARAP whose vertices are tied to the deformed surface through
//! barycentric equality constraints solved with Lagrange multipliers.

mod handles;
mod sparse;
mod surface;
mod tet;
mod weights;

pub use handles::{Handle, HandleSet};
pub use surface::{arap_surface, SurfaceArapSolver};
pub use tet::{arap_tet_constrained, TetArapSolver};
pub use weights::{cotangent_weights, tet_edge_weights, EdgeWeights};

use nalgebra::{Matrix3, Point3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArapError {
    #[error("handle set is empty")]
    NoHandles,
    #[error("handle vertex {index} out of range ({num_vertices} vertices)")]
    HandleOutOfRange { index: usize, num_vertices: usize },
    #[error("vertex {0} appears in more than one handle")]
    DuplicateHandle(usize),
    #[error("handle vertex set differs from the one the solver was factored for")]
    HandleTopologyChanged,
    #[error("face {0} has zero area")]
    DegenerateFace(usize),
    #[error("vertex {vertex} lies in a connected component without handles; add at least one handle per component")]
    FloatingComponent { vertex: usize },
    #[error("expected {expected} positions, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("embedding row {row} sums to {sum}, expected 1")]
    EmbeddingRowSum { row: usize, sum: f64 },
    #[error("embedding rows {0} and {1} are identical; the constraint system is singular")]
    DuplicateConstraint(usize, usize),
    #[error("constraints violated by {violation:e} after the global solve; targets are not representable by the proxy (extract a coarser surface or use a smaller cell size)")]
    Infeasible { violation: f64 },
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("non-finite value in solve")]
    NonFinite,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ArapError {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Self::Infeasible { .. } | Self::Factorization(_) | Self::NonFinite | Self::DuplicateConstraint(..))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArapParams {
    pub max_iters: usize,
    /// Stop once the relative energy decrease of an iteration falls below this.
    pub tol: f64,
}

impl Default for ArapParams {
    fn default() -> Self {
        Self { max_iters: 50, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub version: u32,
    /// Global solves performed.
    pub iterations: usize,
    /// Energy after each local step; entry 0 is the initial configuration.
    pub energy: Vec<f64>,
    /// Worst absolute constraint residual over all iterations.
    pub max_constraint_violation: f64,
}

#[derive(Debug, Clone)]
pub struct ArapResult {
    pub positions: Vec<Point3<f64>>,
    pub rotations: Vec<Matrix3<f64>>,
    pub report: SolveReport,
}

/// Rotation `R` maximizing `sum_j w_j e'_j^T R e_j` for rest edges `e` and deformed edges `e'`.
/// A zero covariance yields the identity.
pub fn fit_rotation<'a>(edges: impl IntoIterator<Item = (&'a nalgebra::Vector3<f64>, &'a nalgebra::Vector3<f64>, f64)>) -> Matrix3<f64> {
    let mut s = Matrix3::zeros();
    for (rest, def, w) in edges {
        s += w * rest * def.transpose();
    }
    rotation_from_covariance(&s)
}

pub(crate) fn rotation_from_covariance(s: &Matrix3<f64>) -> Matrix3<f64> {
    if s.iter().all(|v| *v == 0.0) {
        return Matrix3::identity();
    }
    let svd = s.svd(true, true);
    let u = svd.u.expect("requested u");
    let v = svd.v_t.expect("requested v_t").transpose();
    let mut r = v * u.transpose();
    if r.determinant() < 0.0 {
        let (k, _) = svd.singular_values.argmin();
        let mut u = u;
        u.column_mut(k).neg_mut();
        r = v * u.transpose();
    }
    r
}

/// Local step: one best-fit rotation per vertex.
pub(crate) fn fit_rotations(rest: &[Point3<f64>], deformed: &[Point3<f64>], weights: &EdgeWeights) -> Vec<Matrix3<f64>> {
    (0..rest.len())
        .into_par_iter()
        .map(|i| {
            let mut s = Matrix3::zeros();
            for &(j, w) in weights.neighbors(i) {
                s += w * (rest[i] - rest[j]) * (deformed[i] - deformed[j]).transpose();
            }
            rotation_from_covariance(&s)
        })
        .collect()
}

/// `sum_i sum_{j in N(i)} w_ij |(v'_i - v'_j) - R_i (v_i - v_j)|^2`.
pub fn arap_energy(rest: &[Point3<f64>], deformed: &[Point3<f64>], weights: &EdgeWeights, rotations: &[Matrix3<f64>]) -> f64 {
    assert_eq!(rest.len(), deformed.len());
    assert_eq!(rest.len(), rotations.len());
    (0..rest.len())
        .into_par_iter()
        .map(|i| {
            weights
                .neighbors(i)
                .iter()
                .map(|&(j, w)| w * ((deformed[i] - deformed[j]) - rotations[i] * (rest[i] - rest[j])).norm_squared())
                .sum::<f64>()
        })
        .sum()
}

/// Right-hand side of the global step, `b_i = sum_j (w_ij / 2)(R_i + R_j)(v_i - v_j)`.
pub(crate) fn global_rhs(rest: &[Point3<f64>], weights: &EdgeWeights, rotations: &[Matrix3<f64>]) -> Vec<nalgebra::Vector3<f64>> {
    (0..rest.len())
        .into_par_iter()
        .map(|i| {
            weights
                .neighbors(i)
                .iter()
                .map(|&(j, w)| 0.5 * w * (rotations[i] + rotations[j]) * (rest[i] - rest[j]))
                .sum()
        })
        .collect()
}

/// Energies below this are roundoff: `1e-20` times the summed weighted squared rest edge lengths.
pub(crate) fn energy_floor(rest: &[Point3<f64>], weights: &EdgeWeights) -> f64 {
    1e-20 * weights.edges().map(|(i, j, w)| w * (rest[i] - rest[j]).norm_squared()).sum::<f64>()
}

pub(crate) fn converged(prev: f64, cur: f64, tol: f64, floor: f64) -> bool {
    cur <= floor || prev - cur <= tol * prev
}
