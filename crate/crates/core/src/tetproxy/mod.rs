//! The deformable "effective space" around the surface: offset cage, BCC lattice
//! tetrahedralization, barycentric surface embedding, and point-in-tet location.

mod cage;
mod embed;
mod io;
mod lattice;
mod locator;

pub use cage::{build_cage, default_offset, smooth_uniform};
pub use embed::{embed_surface, SurfaceEmbedding};
pub use lattice::tetrahedralize;
pub use io::{load_proxy, save_proxy};
pub use locator::{build_locator, locate_point, TetLocator};

use nalgebra::{Point3, Vector3};
use thiserror::Error;

use crate::field::Aabb;

/// Barycentric coordinates at or above this count as inside.
pub const BARY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum TetError {
    #[error("offset must be positive, got {0}")]
    InvalidOffset(f64),
    #[error("cell size must be positive, got {0}")]
    InvalidCellSize(f64),
    #[error("at least one camera is required")]
    NoCameras,
    #[error("cage is not a closed surface")]
    OpenCage,
    #[error("cell size {h} exceeds the cage's smallest extent {extent}")]
    CellTooLarge { h: f64, extent: f64 },
    #[error("no tetrahedron has its centroid inside the cage")]
    Empty,
    #[error("tet {tet} references vertex {index} but there are {num_vertices} vertices")]
    IndexOutOfRange { tet: usize, index: usize, num_vertices: usize },
    #[error("tet {0} is not positively oriented in the rest pose")]
    NegativeOrientation(usize),
    #[error("expected {expected} deformed positions, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("{} surface vertices lie outside every tetrahedron (first: {:?}); use a smaller cell size or a larger offset", .0.len(), &.0[..(.0.len().min(8))])]
    OutsideTets(Vec<usize>),
    #[error("tet file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pose {
    Rest,
    Deformed,
}

/// Tetrahedral proxy with rest and deformed vertex positions over shared connectivity.
#[derive(Debug, Clone, PartialEq)]
pub struct TetMesh {
    rest: Vec<Point3<f64>>,
    deformed: Vec<Point3<f64>>,
    tets: Vec<[usize; 4]>,
}

impl TetMesh {
    /// Deformed pose starts at rest. Every tet must have positive rest volume.
    pub fn new(rest: Vec<Point3<f64>>, tets: Vec<[usize; 4]>) -> Result<Self, TetError> {
        let n = rest.len();
        for (k, t) in tets.iter().enumerate() {
            if let Some(&index) = t.iter().find(|&&i| i >= n) {
                return Err(TetError::IndexOutOfRange { tet: k, index, num_vertices: n });
            }
            if !(signed_volume(&rest, t) > 0.0) {
                return Err(TetError::NegativeOrientation(k));
            }
        }
        Ok(Self { deformed: rest.clone(), rest, tets })
    }

    pub fn with_deformed(&self, deformed: Vec<Point3<f64>>) -> Result<Self, TetError> {
        if deformed.len() != self.rest.len() {
            return Err(TetError::SizeMismatch { expected: self.rest.len(), actual: deformed.len() });
        }
        Ok(Self { rest: self.rest.clone(), deformed, tets: self.tets.clone() })
    }

    pub fn set_deformed(&mut self, deformed: Vec<Point3<f64>>) -> Result<(), TetError> {
        if deformed.len() != self.rest.len() {
            return Err(TetError::SizeMismatch { expected: self.rest.len(), actual: deformed.len() });
        }
        self.deformed = deformed;
        Ok(())
    }

    pub fn rest(&self) -> &[Point3<f64>] {
        &self.rest
    }

    pub fn deformed(&self) -> &[Point3<f64>] {
        &self.deformed
    }

    pub fn positions(&self, pose: Pose) -> &[Point3<f64>] {
        match pose {
            Pose::Rest => &self.rest,
            Pose::Deformed => &self.deformed,
        }
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn num_vertices(&self) -> usize {
        self.rest.len()
    }

    pub fn num_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn signed_volume(&self, k: usize, pose: Pose) -> f64 {
        signed_volume(self.positions(pose), &self.tets[k])
    }

    pub fn volume(&self, pose: Pose) -> f64 {
        (0..self.tets.len()).map(|k| self.signed_volume(k, pose)).sum()
    }

    pub fn bounding_box(&self, pose: Pose) -> Aabb {
        Aabb::from_points(self.positions(pose))
    }

    pub fn tet_bounding_box(&self, k: usize, pose: Pose) -> Aabb {
        let p = self.positions(pose);
        Aabb::from_points(self.tets[k].iter().map(|&i| &p[i]))
    }

    pub fn centroid(&self, k: usize, pose: Pose) -> Point3<f64> {
        let p = self.positions(pose);
        Point3::from(self.tets[k].iter().map(|&i| p[i].coords).sum::<Vector3<f64>>() / 4.0)
    }

    /// Barycentric coordinates of `p` in tet `k`.
    pub fn barycentric(&self, k: usize, p: &Point3<f64>, pose: Pose) -> [f64; 4] {
        let x = self.positions(pose);
        let t = self.tets[k];
        barycentric(&[x[t[0]], x[t[1]], x[t[2]], x[t[3]]], p)
    }

    /// Deformed tets with non-positive signed volume.
    pub fn inverted_tets(&self) -> Vec<usize> {
        (0..self.tets.len()).filter(|&k| !(self.signed_volume(k, Pose::Deformed) > 0.0)).collect()
    }

    /// Smallest dihedral angle (radians) of each deformed tet.
    pub fn min_dihedral_angles(&self, pose: Pose) -> Vec<f64> {
        let x = self.positions(pose);
        self.tets.iter().map(|t| min_dihedral(&t.map(|i| x[i]))).collect()
    }
}

pub(crate) fn signed_volume(x: &[Point3<f64>], t: &[usize; 4]) -> f64 {
    (x[t[1]] - x[t[0]]).dot(&(x[t[2]] - x[t[0]]).cross(&(x[t[3]] - x[t[0]]))) / 6.0
}

pub(crate) fn barycentric(x: &[Point3<f64>; 4], p: &Point3<f64>) -> [f64; 4] {
    let (e1, e2, e3) = (x[1] - x[0], x[2] - x[0], x[3] - x[0]);
    let d = p - x[0];
    let det = e1.dot(&e2.cross(&e3));
    let b1 = d.dot(&e2.cross(&e3)) / det;
    let b2 = e1.dot(&d.cross(&e3)) / det;
    let b3 = e1.dot(&e2.cross(&d)) / det;
    [1.0 - b1 - b2 - b3, b1, b2, b3]
}

fn min_dihedral(x: &[Point3<f64>; 4]) -> f64 {
    // Face m is opposite vertex m; the dihedral between faces a and b lies on edge {c, d}.
    let normal = |m: usize| {
        let o: Vec<usize> = (0..4).filter(|&i| i != m).collect();
        let n = (x[o[1]] - x[o[0]]).cross(&(x[o[2]] - x[o[0]]));
        // Point away from the opposite vertex.
        if n.dot(&(x[m] - x[o[0]])) > 0.0 {
            -n
        } else {
            n
        }
    };
    let normals: Vec<Vector3<f64>> = (0..4).map(normal).collect();
    let mut best = std::f64::consts::PI;
    for a in 0..4 {
        for b in a + 1..4 {
            let c = -normals[a].dot(&normals[b]) / (normals[a].norm() * normals[b].norm());
            best = best.min(c.clamp(-1.0, 1.0).acos());
        }
    }
    best
}
