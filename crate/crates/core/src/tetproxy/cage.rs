use nalgebra::{Point3, Vector3};

use super::TetError;
use crate::geom::{vertex_normals, TriMesh};
use crate::render::Camera;

const SMOOTH_ITERS: usize = 10;
const SMOOTH_LAMBDA: f64 = 0.5;

/// `iters` rounds of `v += lambda * (mean(neighbors) - v)`.
pub fn smooth_uniform(mesh: &TriMesh, iters: usize, lambda: f64) -> TriMesh {
    let nbrs = mesh.vertex_neighbors();
    let mut v = mesh.vertices.clone();
    for _ in 0..iters {
        v = (0..v.len())
            .map(|i| {
                if nbrs[i].is_empty() {
                    return v[i];
                }
                let mean = nbrs[i].iter().map(|&j| v[j].coords).sum::<Vector3<f64>>() / nbrs[i].len() as f64;
                v[i] + lambda * (mean - v[i].coords)
            })
            .collect();
    }
    mesh.with_vertices(v)
}

/// Smoothed copy of the surface pushed `offset` along its vertex normals. Where smoothing pulled a
/// vertex inward, that shrinkage is added back so the cage stays `offset` clear of the input.
pub fn build_cage(mesh: &TriMesh, offset: f64) -> Result<TriMesh, TetError> {
    if !(offset > 0.0) {
        return Err(TetError::InvalidOffset(offset));
    }
    let smooth = smooth_uniform(mesh, SMOOTH_ITERS, SMOOTH_LAMBDA);
    let normals = vertex_normals(&smooth);
    let v = smooth
        .vertices
        .iter()
        .zip(&mesh.vertices)
        .zip(&normals)
        .map(|((p, orig), n)| p + (offset + (orig - p).dot(n).max(0.0)) * n)
        .collect();
    Ok(smooth.with_vertices(v))
}

/// Five percent of the mean camera distance to `center`.
pub fn default_offset(cameras: &[Camera], center: &Point3<f64>) -> Result<f64, TetError> {
    if cameras.is_empty() {
        return Err(TetError::NoCameras);
    }
    let mean = cameras.iter().map(|c| (c.position - center).norm()).sum::<f64>() / cameras.len() as f64;
    Ok(0.05 * mean)
}
