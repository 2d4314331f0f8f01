use std::collections::BTreeMap;

use super::ArapError;
use crate::geom::TriMesh;
use crate::tetproxy::TetMesh;

/// Symmetric per-edge weights stored as sorted adjacency lists.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeights {
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl EdgeWeights {
    /// Builds from undirected edges; repeated edges accumulate.
    pub fn from_edges(num_vertices: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (i, j, w) in edges {
            assert!(i != j && i < num_vertices && j < num_vertices, "invalid edge ({i}, {j})");
            *acc.entry((i.min(j), i.max(j))).or_insert(0.0) += w;
        }
        let mut adjacency = vec![Vec::new(); num_vertices];
        for ((i, j), w) in acc {
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(j, _)| j);
        }
        Self { adjacency }
    }

    pub fn num_vertices(&self) -> usize {
        self.adjacency.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let list = &self.adjacency[i];
        list.binary_search_by_key(&j, |&(k, _)| k).ok().map(|p| list[p].1)
    }

    /// Each undirected edge once, `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.iter().filter(move |&&(j, _)| j > i).map(move |&(j, w)| (i, j, w)))
    }

    /// Connected-component label per vertex over edges with positive weight.
    pub fn components(&self) -> Vec<usize> {
        let n = self.adjacency.len();
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = next;
            stack.push(s);
            while let Some(i) = stack.pop() {
                for &(j, w) in &self.adjacency[i] {
                    if w > 0.0 && label[j] == usize::MAX {
                        label[j] = next;
                        stack.push(j);
                    }
                }
            }
            next += 1;
        }
        label
    }
}

/// Cotangent weights `w_ij = (cot a_ij + cot b_ij) / 2` over the faces incident to each edge,
/// with negative sums clamped to zero.
pub fn cotangent_weights(mesh: &TriMesh) -> Result<EdgeWeights, ArapError> {
    let mut edges = Vec::with_capacity(mesh.num_faces() * 3);
    for (f, face) in mesh.faces.iter().enumerate() {
        let p = mesh.triangle(f);
        let twice_area = (p[1] - p[0]).cross(&(p[2] - p[0])).norm();
        let scale = (p[1] - p[0]).norm_squared().max((p[2] - p[0]).norm_squared()).max((p[2] - p[1]).norm_squared());
        if !(twice_area > 1e-14 * scale) {
            return Err(ArapError::DegenerateFace(f));
        }
        for c in 0..3 {
            let (a, b) = ((c + 1) % 3, (c + 2) % 3);
            let u = p[a] - p[c];
            let v = p[b] - p[c];
            edges.push((face[a], face[b], 0.5 * u.dot(&v) / twice_area));
        }
    }
    let mut w = EdgeWeights::from_edges(mesh.num_vertices(), edges);
    for list in &mut w.adjacency {
        for e in list.iter_mut() {
            e.1 = e.1.max(0.0);
        }
    }
    Ok(w)
}

/// Uniform unit weight on every tetrahedron edge.
pub fn tet_edge_weights(tet: &TetMesh) -> EdgeWeights {
    let mut edges = BTreeMap::new();
    for t in tet.tets() {
        for a in 0..4 {
            for b in a + 1..4 {
                edges.insert((t[a].min(t[b]), t[a].max(t[b])), 1.0);
            }
        }
    }
    EdgeWeights::from_edges(tet.num_vertices(), edges.into_iter().map(|((i, j), w)| (i, j, w)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::mesh::tests::{plane_patch, unit_cube};
    use nalgebra::Point3;

    #[test]
    fn equilateral_pair() {
        let h = 3f64.sqrt() / 2.0;
        let mesh = TriMesh::new(
            vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.5, h, 0.0), Point3::new(0.5, -h, 0.0)],
            vec![[0, 1, 2], [1, 0, 3]],
        )
        .unwrap();
        let w = cotangent_weights(&mesh).unwrap();
        assert!((w.get(0, 1).unwrap() - 1.0 / 3f64.sqrt()).abs() <= 1e-12);
        // Boundary edge: one 60 degree angle opposite.
        assert!((w.get(0, 2).unwrap() - 0.5 / 3f64.sqrt()).abs() <= 1e-12);
    }

    #[test]
    fn right_angle_boundary_edge_is_zero() {
        let mesh = TriMesh::new(
            vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let w = cotangent_weights(&mesh).unwrap();
        assert!(w.get(1, 2).unwrap().abs() <= 1e-15);
    }

    #[test]
    fn symmetric_and_nonnegative() {
        for mesh in [unit_cube(), plane_patch(5, 0.3)] {
            let w = cotangent_weights(&mesh).unwrap();
            for i in 0..w.num_vertices() {
                for &(j, v) in w.neighbors(i) {
                    assert_eq!(w.get(j, i), Some(v));
                    assert!(v >= 0.0);
                }
            }
        }
    }

    #[test]
    fn obtuse_pair_is_clamped() {
        // Both angles opposite edge (0,1) are 150 degrees wide.
        let mesh = TriMesh::new(
            vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.5, 0.1, 0.0), Point3::new(0.5, -0.1, 0.0)],
            vec![[0, 1, 2], [1, 0, 3]],
        )
        .unwrap();
        assert_eq!(cotangent_weights(&mesh).unwrap().get(0, 1), Some(0.0));
    }

    #[test]
    fn degenerate_face_is_named() {
        let mesh = TriMesh::new(
            vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 3], [0, 1, 2]],
        )
        .unwrap();
        assert!(matches!(cotangent_weights(&mesh), Err(ArapError::DegenerateFace(1))));
    }
}
