//! Ray bending: the displacement field that carries a sample point in the edited scene back into
//! the unedited radiance field, from the tet proxy or from one of two surface-only baselines.

use std::fmt;
use std::str::FromStr;

use kiddo::{KdTree, SquaredEuclidean};
use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::RadianceFieldGrid;
use crate::geom::{TriMesh, TriangleBvh};
use crate::render::SpaceWarp;
use crate::tetproxy::{Pose, TetLocator, TetMesh};

/// Added to nearest-vertex distances before inverting them.
pub const KNN_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum BendError {
    #[error("mesh has no triangles")]
    EmptyMesh,
    #[error("need at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("rest and deformed meshes differ in connectivity")]
    ConnectivityMismatch,
    #[error("unknown warp strategy {0:?}; expected tet, closest or knn3")]
    UnknownStrategy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WarpStrategy {
    #[default]
    Tet,
    Closest,
    Knn3,
}

impl FromStr for WarpStrategy {
    type Err = BendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tet" => Ok(Self::Tet),
            "closest" => Ok(Self::Closest),
            "knn3" => Ok(Self::Knn3),
            _ => Err(BendError::UnknownStrategy(s.to_string())),
        }
    }
}

impl fmt::Display for WarpStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Tet => "tet",
            Self::Closest => "closest",
            Self::Knn3 => "knn3",
        })
    }
}

/// Deformed-to-rest displacement at `p` by barycentric interpolation in the deformed tet that
/// contains it; zero outside the proxy. `locator` must be built on the deformed pose.
pub fn warp_tet(tet: &TetMesh, locator: &TetLocator, p: &Point3<f64>) -> Vector3<f64> {
    debug_assert_eq!(locator.pose(), Pose::Deformed);
    match locator.locate(tet, p) {
        Some((k, b)) => tet_displacement(tet, k, &b),
        None => Vector3::zeros(),
    }
}

fn tet_displacement(tet: &TetMesh, k: usize, b: &[f64; 4]) -> Vector3<f64> {
    let t = tet.tets()[k];
    let (rest, def) = (tet.rest(), tet.deformed());
    (0..4).map(|m| b[m] * (rest[t[m]] - def[t[m]])).sum()
}

/// Displacement of the closest point on the deformed surface. `bvh` must be built on `deformed`.
pub fn warp_closest_point(rest: &TriMesh, bvh: &TriangleBvh, p: &Point3<f64>) -> Result<Vector3<f64>, BendError> {
    let hit = bvh.closest_point(p).ok_or(BendError::EmptyMesh)?;
    let f = rest.faces[hit.face];
    let back: Vector3<f64> = (0..3).map(|m| hit.bary[m] * rest.vertices[f[m]].coords).sum();
    Ok(back - hit.point.coords)
}

/// Inverse-distance blend of the displacements of the three deformed vertices nearest `p`.
/// `tree` indexes the deformed vertices.
pub fn warp_knn3(
    rest: &[Point3<f64>],
    deformed: &[Point3<f64>],
    tree: &KdTree<f64, 3>,
    p: &Point3<f64>,
) -> Vector3<f64> {
    let mut near = tree.nearest_n::<SquaredEuclidean>(&[p.x, p.y, p.z], 3);
    near.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.item.cmp(&b.item)));
    let mut sum = Vector3::zeros();
    let mut total = 0.0;
    for n in &near {
        let i = n.item as usize;
        let w = 1.0 / (n.distance.sqrt() + KNN_EPSILON);
        sum += w * (rest[i] - deformed[i]);
        total += w;
    }
    sum / total
}

/// A displacement field ready to be handed to the renderer. Read-only and shareable across
/// render threads.
pub enum WarpField {
    Tet {
        tet: TetMesh,
        deformed: TetLocator,
        /// Set when vacated space is masked: points in the rest proxy but outside the deformed
        /// one sample nothing instead of the unedited field.
        rest: Option<TetLocator>,
    },
    Closest {
        rest: TriMesh,
        bvh: TriangleBvh,
    },
    Knn3 {
        rest: Vec<Point3<f64>>,
        deformed: Vec<Point3<f64>>,
        tree: KdTree<f64, 3>,
    },
}

impl WarpField {
    /// Tet warp with vacated space masked.
    pub fn tet(tet: TetMesh) -> Self {
        Self::tet_with(tet, true)
    }

    /// Tet warp; with `mask_vacated` off, points outside the deformed proxy keep the unedited
    /// field, including any content the edit moved away from there.
    pub fn tet_with(tet: TetMesh, mask_vacated: bool) -> Self {
        let deformed = TetLocator::new(&tet, Pose::Deformed);
        let rest = mask_vacated.then(|| TetLocator::new(&tet, Pose::Rest));
        Self::Tet { tet, deformed, rest }
    }

    pub fn closest(rest: &TriMesh, deformed: &TriMesh) -> Result<Self, BendError> {
        check_pair(rest, deformed)?;
        if rest.num_faces() == 0 {
            return Err(BendError::EmptyMesh);
        }
        Ok(Self::Closest { rest: rest.clone(), bvh: TriangleBvh::new(deformed) })
    }

    pub fn knn3(rest: &TriMesh, deformed: &TriMesh) -> Result<Self, BendError> {
        check_pair(rest, deformed)?;
        if rest.num_vertices() < 3 {
            return Err(BendError::TooFewVertices(rest.num_vertices()));
        }
        let mut tree = KdTree::new();
        for (i, p) in deformed.vertices.iter().enumerate() {
            tree.add(&[p.x, p.y, p.z], i as u64);
        }
        Ok(Self::Knn3 { rest: rest.vertices.clone(), deformed: deformed.vertices.clone(), tree })
    }

    pub fn strategy(&self) -> WarpStrategy {
        match self {
            Self::Tet { .. } => WarpStrategy::Tet,
            Self::Closest { .. } => WarpStrategy::Closest,
            Self::Knn3 { .. } => WarpStrategy::Knn3,
        }
    }

    /// The displacement alone, without vacated-space masking.
    pub fn displacement(&self, p: &Point3<f64>) -> Vector3<f64> {
        match self {
            Self::Tet { tet, deformed, .. } => warp_tet(tet, deformed, p),
            Self::Closest { rest, bvh } => warp_closest_point(rest, bvh, p).expect("constructor rejects empty meshes"),
            Self::Knn3 { rest, deformed, tree } => warp_knn3(rest, deformed, tree, p),
        }
    }
}

fn check_pair(rest: &TriMesh, deformed: &TriMesh) -> Result<(), BendError> {
    if rest.faces != deformed.faces || rest.num_vertices() != deformed.num_vertices() {
        return Err(BendError::ConnectivityMismatch);
    }
    Ok(())
}

impl SpaceWarp for WarpField {
    fn warp(&self, p: &Point3<f64>) -> Option<Vector3<f64>> {
        match self {
            Self::Tet { tet, deformed, rest } => match deformed.locate(tet, p) {
                Some((k, b)) => Some(tet_displacement(tet, k, &b)),
                None => match rest {
                    Some(r) if r.locate(tet, p).is_some() => None,
                    _ => Some(Vector3::zeros()),
                },
            },
            _ => Some(self.displacement(p)),
        }
    }
}

/// Field query at the bent position `p + warp(p)`; masked points are empty.
pub fn bent_sample(field: &RadianceFieldGrid, warp: &dyn SpaceWarp, p: &Point3<f64>) -> (f64, [f64; 3]) {
    match warp.warp(p) {
        Some(d) => field.sample(&(p + d)),
        None => (0.0, [0.0; 3]),
    }
}
