use std::collections::HashMap;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::GeomError;
use crate::field::Aabb;

/// Indexed triangle mesh. Faces are counter-clockwise when seen from outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriMesh {
    pub vertices: Vec<Point3<f64>>,
    pub faces: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self, GeomError> {
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&index) = f.iter().find(|&&i| i >= vertices.len()) {
                return Err(GeomError::IndexOutOfRange { face: fi, index, num_vertices: vertices.len() });
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(GeomError::DegenerateFace(fi));
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn empty() -> Self {
        Self { vertices: Vec::new(), faces: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    /// Same connectivity, new positions.
    pub fn with_vertices(&self, vertices: Vec<Point3<f64>>) -> TriMesh {
        assert_eq!(vertices.len(), self.vertices.len(), "vertex count must not change");
        TriMesh { vertices, faces: self.faces.clone() }
    }

    pub fn triangle(&self, f: usize) -> [Point3<f64>; 3] {
        self.faces[f].map(|i| self.vertices[i])
    }

    /// Twice-area-weighted face normal (the raw cross product).
    pub fn face_cross(&self, f: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle(f);
        (b - a).cross(&(c - a))
    }

    pub fn face_area(&self, f: usize) -> f64 {
        0.5 * self.face_cross(f).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Enclosed volume by the divergence theorem; positive for outward orientation.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| self.vertices[i].coords);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn bounding_box(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    /// Undirected edges with the number of incident faces, sorted by key.
    pub fn edge_face_counts(&self) -> Vec<((usize, usize), usize)> {
        let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut v: Vec<_> = counts.into_iter().collect();
        v.sort_unstable();
        v
    }

    /// Every edge is shared by exactly two faces.
    pub fn is_closed(&self) -> bool {
        !self.faces.is_empty() && self.edge_face_counts().iter().all(|(_, c)| *c == 2)
    }

    pub fn euler_characteristic(&self) -> i64 {
        let used = {
            let mut seen = vec![false; self.vertices.len()];
            self.faces.iter().flatten().for_each(|&i| seen[i] = true);
            seen.iter().filter(|s| **s).count()
        };
        used as i64 - self.edge_face_counts().len() as i64 + self.faces.len() as i64
    }

    /// Sorted one-ring neighbor lists.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nbrs = vec![Vec::new(); self.vertices.len()];
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                nbrs[a].push(b);
                nbrs[b].push(a);
            }
        }
        for n in &mut nbrs {
            n.sort_unstable();
            n.dedup();
        }
        nbrs
    }

    pub fn mean_edge_length(&self) -> f64 {
        let edges = self.edge_face_counts();
        if edges.is_empty() {
            return 0.0;
        }
        edges
            .iter()
            .map(|((a, b), _)| (self.vertices[*a] - self.vertices[*b]).norm())
            .sum::<f64>()
            / edges.len() as f64
    }
}

/// Area-weighted unit vertex normals. Vertices whose incident faces have zero total area get
/// `+z` and a logged warning.
pub fn vertex_normals(mesh: &TriMesh) -> Vec<Vector3<f64>> {
    let mut acc = vec![Vector3::zeros(); mesh.vertices.len()];
    for (fi, f) in mesh.faces.iter().enumerate() {
        let n = mesh.face_cross(fi);
        for &i in f {
            acc[i] += n;
        }
    }
    let mut degenerate = 0usize;
    let normals = acc
        .into_iter()
        .map(|n| {
            let len = n.norm();
            if len > 0.0 && len.is_finite() {
                n / len
            } else {
                degenerate += 1;
                Vector3::z()
            }
        })
        .collect();
    if degenerate > 0 {
        log::warn!("{degenerate} vertices have a zero-area star; assigned +z normals");
    }
    normals
}
