use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_locator, Pose, TetError, TetMesh};
use crate::geom::TriMesh;

/// Barycentric embedding of surface points in rest tets: one row of the constraint matrix per
/// point, with four non-zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceEmbedding {
    pub tets: Vec<usize>,
    pub weights: Vec<[f64; 4]>,
    /// The embedded rest positions.
    pub points: Vec<Point3<f64>>,
}

impl SurfaceEmbedding {
    pub fn len(&self) -> usize {
        self.tets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tets.is_empty()
    }

    /// Tet vertex indices and weights of row `i`.
    pub fn row(&self, tet: &TetMesh, i: usize) -> ([usize; 4], [f64; 4]) {
        (tet.tets()[self.tets[i]], self.weights[i])
    }

    /// `A x` for the chosen pose.
    pub fn reconstruct(&self, tet: &TetMesh, pose: Pose) -> Vec<Point3<f64>> {
        let x = tet.positions(pose);
        (0..self.len())
            .map(|i| {
                let (v, w) = self.row(tet, i);
                Point3::from((0..4).map(|m| w[m] * x[v[m]].coords).sum::<Vector3<f64>>())
            })
            .collect()
    }
}

/// Locates every surface vertex in the rest tets.
pub fn embed_surface(tet: &TetMesh, mesh: &TriMesh) -> Result<SurfaceEmbedding, TetError> {
    let loc = build_locator(tet, Pose::Rest);
    let found: Vec<_> = mesh.vertices.par_iter().map(|p| loc.locate(tet, p)).collect();
    let outside: Vec<usize> = found.iter().enumerate().filter(|(_, f)| f.is_none()).map(|(i, _)| i).collect();
    if !outside.is_empty() {
        return Err(TetError::OutsideTets(outside));
    }
    let (tets, weights) = found.into_iter().map(|f| f.expect("checked above")).unzip();
    Ok(SurfaceEmbedding { tets, weights, points: mesh.vertices.clone() })
}
