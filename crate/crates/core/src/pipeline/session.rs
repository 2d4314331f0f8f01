use std::path::Path;

use kiddo::{KdTree, SquaredEuclidean};
use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::arap::{
    cotangent_weights, tet_edge_weights, ArapParams, EdgeWeights, Handle, HandleSet, SolveReport, SurfaceArapSolver,
    TetArapSolver,
};
use crate::bend::{WarpField, WarpStrategy};
use crate::geom::{load_obj, TriMesh};
use crate::tetproxy::{embed_surface, load_proxy, SurfaceEmbedding, TetMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeformMode {
    /// Surface ARAP, then the tets follow the deformed surface.
    #[default]
    TwoStep,
    /// Handles go straight to the nearest tet vertices and ARAP runs on the tet graph.
    EditOnTet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformReport {
    pub version: u32,
    pub mode: DeformMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<SolveReport>,
    pub tet: SolveReport,
    /// Deformed tets with non-positive volume; the warp is not injective there.
    pub inverted_tets: Vec<usize>,
}

/// Immutable copy of the deformed state, enough to build any warp.
#[derive(Debug, Clone)]
pub struct RenderSnapshot {
    pub rest_mesh: TriMesh,
    pub deformed_mesh: TriMesh,
    pub tet: TetMesh,
}

impl RenderSnapshot {
    pub fn warp(&self, strategy: WarpStrategy, mask_vacated: bool) -> Result<WarpField, PipelineError> {
        Ok(match strategy {
            WarpStrategy::Tet => WarpField::tet_with(self.tet.clone(), mask_vacated),
            WarpStrategy::Closest => WarpField::closest(&self.rest_mesh, &self.deformed_mesh)?,
            WarpStrategy::Knn3 => WarpField::knn3(&self.rest_mesh, &self.deformed_mesh)?,
        })
    }
}

/// One editable object: the rest surface, its tet proxy, and the state left by the last solve.
pub struct EditSession {
    rest: TriMesh,
    weights: EdgeWeights,
    surface_solver: Option<SurfaceArapSolver>,
    tet: TetMesh,
    tet_weights: EdgeWeights,
    tet_solver: Option<TetArapSolver>,
    graph_solver: Option<SurfaceArapSolver>,
    embedding: SurfaceEmbedding,
    /// Nearest rest surface vertex of every tet vertex, for seeding tet rotations.
    nearest_surface: Vec<usize>,
    handles: HandleSet,
    deformed: TriMesh,
    report: Option<DeformReport>,
    pub params: ArapParams,
}

impl EditSession {
    pub fn new(rest: TriMesh, tet: TetMesh, embedding: SurfaceEmbedding) -> Result<Self, PipelineError> {
        if embedding.len() != rest.num_vertices() {
            return Err(PipelineError::Invalid(format!(
                "embedding has {} points but the mesh has {} vertices",
                embedding.len(),
                rest.num_vertices()
            )));
        }
        let weights = cotangent_weights(&rest)?;
        let tet_weights = tet_edge_weights(&tet);
        let mut tree: KdTree<f64, 3> = KdTree::new();
        for (i, p) in rest.vertices.iter().enumerate() {
            tree.add(&[p.x, p.y, p.z], i as u64);
        }
        let nearest_surface =
            tet.rest().iter().map(|p| tree.nearest_one::<SquaredEuclidean>(&[p.x, p.y, p.z]).item as usize).collect();
        let tet = tet.with_deformed(tet.rest().to_vec())?;
        Ok(Self {
            deformed: rest.clone(),
            rest,
            weights,
            surface_solver: None,
            tet,
            tet_weights,
            tet_solver: None,
            graph_solver: None,
            embedding,
            nearest_surface,
            handles: HandleSet::new(vec![]),
            report: None,
            params: ArapParams::default(),
        })
    }

    /// Mesh from OBJ and proxy from its header + payload; embeds the mesh if the proxy carries no
    /// embedding.
    pub fn load(mesh: impl AsRef<Path>, proxy: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let rest = load_obj(mesh)?;
        let (tet, emb) = load_proxy(proxy)?;
        let emb = match emb {
            Some(e) => e,
            None => embed_surface(&tet, &rest)?,
        };
        Self::new(rest, tet, emb)
    }

    pub fn rest_mesh(&self) -> &TriMesh {
        &self.rest
    }

    pub fn deformed_mesh(&self) -> &TriMesh {
        &self.deformed
    }

    pub fn tet(&self) -> &TetMesh {
        &self.tet
    }

    pub fn embedding(&self) -> &SurfaceEmbedding {
        &self.embedding
    }

    pub fn handles(&self) -> &HandleSet {
        &self.handles
    }

    pub fn last_report(&self) -> Option<&DeformReport> {
        self.report.as_ref()
    }

    pub fn snapshot(&self) -> RenderSnapshot {
        RenderSnapshot { rest_mesh: self.rest.clone(), deformed_mesh: self.deformed.clone(), tet: self.tet.clone() }
    }

    /// Solves for `handles` and replaces the deformed state. On error the previous state is kept.
    pub fn deform(&mut self, handles: &HandleSet, mode: DeformMode) -> Result<&DeformReport, PipelineError> {
        handles.validate(self.rest.num_vertices())?;
        let (surface, tet_result, deformed_surface) = match mode {
            DeformMode::TwoStep => self.two_step(handles)?,
            DeformMode::EditOnTet => self.on_tet(handles)?,
        };
        let tet = self.tet.with_deformed(tet_result.positions)?;
        let inverted_tets = tet.inverted_tets();
        if !inverted_tets.is_empty() {
            log::warn!(
                "{} deformed tets are inverted (first: {:?}); the warp is not injective there",
                inverted_tets.len(),
                &inverted_tets[..inverted_tets.len().min(8)]
            );
        }
        self.tet = tet;
        self.deformed = self.rest.with_vertices(deformed_surface);
        self.handles = handles.clone();
        self.report = Some(DeformReport { version: 1, mode, surface, tet: tet_result.report, inverted_tets });
        Ok(self.report.as_ref().expect("just set"))
    }

    fn two_step(
        &mut self,
        handles: &HandleSet,
    ) -> Result<(Option<SolveReport>, crate::arap::ArapResult, Vec<Point3<f64>>), PipelineError> {
        if !self.surface_solver.as_ref().is_some_and(|s| s.accepts(handles)) {
            self.surface_solver = Some(SurfaceArapSolver::new(self.rest.vertices.clone(), self.weights.clone(), &handles.vertices())?);
        }
        let s = self.surface_solver.as_ref().expect("built above").solve(handles, &self.params)?;
        if self.tet_solver.is_none() {
            self.tet_solver = Some(TetArapSolver::new(&self.tet, self.tet_weights.clone(), &self.embedding)?);
        }
        let init: Vec<Matrix3<f64>> = self.nearest_surface.iter().map(|&i| s.rotations[i]).collect();
        let t = self.tet_solver.as_ref().expect("built above").solve_from(&s.positions, Some(&init), &self.params)?;
        Ok((Some(s.report), t, s.positions))
    }

    fn on_tet(
        &mut self,
        handles: &HandleSet,
    ) -> Result<(Option<SolveReport>, crate::arap::ArapResult, Vec<Point3<f64>>), PipelineError> {
        let mut tree: KdTree<f64, 3> = KdTree::new();
        for (i, p) in self.tet.rest().iter().enumerate() {
            tree.add(&[p.x, p.y, p.z], i as u64);
        }
        // Several handles may share a nearest tet vertex; their displacements are averaged.
        let mut moved: std::collections::BTreeMap<usize, (Vector3<f64>, usize)> = Default::default();
        for h in &handles.handles {
            let p = self.rest.vertices[h.vertex];
            let v = tree.nearest_one::<SquaredEuclidean>(&[p.x, p.y, p.z]).item as usize;
            let e = moved.entry(v).or_insert((Vector3::zeros(), 0));
            e.0 += h.target - p;
            e.1 += 1;
        }
        let rest = self.tet.rest();
        let tet_handles =
            HandleSet::new(moved.iter().map(|(&v, (d, n))| Handle { vertex: v, target: rest[v] + d / *n as f64 }).collect());
        if !self.graph_solver.as_ref().is_some_and(|s| s.accepts(&tet_handles)) {
            self.graph_solver = Some(SurfaceArapSolver::new(rest.to_vec(), self.tet_weights.clone(), &tet_handles.vertices())?);
        }
        let r = self.graph_solver.as_ref().expect("built above").solve(&tet_handles, &self.params)?;
        // Surface follows the tets: v + A (t' - t), which stays exact when nothing moves.
        let surface = (0..self.embedding.len())
            .map(|i| {
                let (v, w) = self.embedding.row(&self.tet, i);
                self.rest.vertices[i] + (0..4).map(|m| w[m] * (r.positions[v[m]] - rest[v[m]])).sum::<Vector3<f64>>()
            })
            .collect();
        Ok((None, r, surface))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{generate_field, Aabb, ColorFn, Primitive, SceneSpec};
    use crate::geom::{marching_cubes, IsoChannel};
    use crate::pipeline::build_proxy;
    use crate::render::Camera;

    fn sphere_session() -> EditSession {
        let spec = SceneSpec::new(vec![Primitive::Sphere {
            center: Point3::origin(),
            radius: 0.5,
            color: ColorFn::Constant { rgb: [1.0; 3] },
        }]);
        let f = generate_field(&spec, [20; 3], Aabb::cube(1.0)).unwrap();
        let mesh = marching_cubes(&f, 0.0, IsoChannel::Sdf).unwrap();
        let cams = [Camera::look_at(Point3::new(0.0, 0.0, 3.0), Point3::origin(), 0.6, 8, 8)];
        let p = build_proxy(&mesh, &cams, None, None).unwrap();
        EditSession::new(mesh, p.tet, p.embedding).unwrap()
    }

    #[test]
    fn pinned_handles_leave_everything_at_rest() {
        let mut s = sphere_session();
        let h = HandleSet::pinned(&s.rest_mesh().vertices, 0..s.rest_mesh().num_vertices());
        for mode in [DeformMode::TwoStep, DeformMode::EditOnTet] {
            let r = s.deform(&h, mode).unwrap().clone();
            assert!(r.inverted_tets.is_empty());
            assert_eq!(s.tet().deformed(), s.tet().rest());
            assert_eq!(s.deformed_mesh(), s.rest_mesh());
        }
    }

    #[test]
    fn translation_moves_surface_and_tets() {
        let mut s = sphere_session();
        let u = Vector3::new(0.1, -0.05, 0.2);
        let h = HandleSet::from_pairs(s.rest_mesh().vertices.iter().enumerate().map(|(i, p)| (i, p + u)));
        let r = s.deform(&h, DeformMode::TwoStep).unwrap();
        assert!(r.tet.max_constraint_violation <= 1e-6);
        for (a, b) in s.tet().deformed().iter().zip(s.tet().rest()) {
            assert!((a - b - u).norm() <= 1e-6);
        }
        let warp = s.snapshot().warp(WarpStrategy::Tet, true).unwrap();
        let d = warp.displacement(&Point3::new(0.1, 0.0, 0.2));
        assert!((d + u).norm() <= 1e-6);
    }

    #[test]
    fn bad_handles_keep_previous_state() {
        let mut s = sphere_session();
        let n = s.rest_mesh().num_vertices();
        let bad = HandleSet::pinned(&s.rest_mesh().vertices, [0]);
        let mut bad = bad;
        bad.handles[0].vertex = n + 3;
        assert!(matches!(s.deform(&bad, DeformMode::TwoStep), Err(PipelineError::Arap(crate::arap::ArapError::HandleOutOfRange { .. }))));
        assert!(s.last_report().is_none());
    }
}
