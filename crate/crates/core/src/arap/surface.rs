use nalgebra::{Point3, Vector3};

use super::sparse::{Assembly, Cholesky};
use super::{
    arap_energy, converged, energy_floor, fit_rotations, global_rhs, ArapError, ArapParams, ArapResult, EdgeWeights, HandleSet,
    SolveReport,
};
use crate::geom::TriMesh;

/// Surface ARAP with handles as hard constraints. The reduced Laplacian over free vertices is
/// factored once and reused for every solve with the same handle vertex set.
pub struct SurfaceArapSolver {
    rest: Vec<Point3<f64>>,
    weights: EdgeWeights,
    handle_vertices: Vec<usize>,
    /// Position of each free vertex in the reduced system.
    slot: Vec<Option<usize>>,
    factor: Option<Cholesky>,
}

impl SurfaceArapSolver {
    pub fn new(rest: Vec<Point3<f64>>, weights: EdgeWeights, handle_vertices: &[usize]) -> Result<Self, ArapError> {
        let n = rest.len();
        if weights.num_vertices() != n {
            return Err(ArapError::SizeMismatch { expected: n, actual: weights.num_vertices() });
        }
        let mut is_handle = vec![false; n];
        for &h in handle_vertices {
            if h >= n {
                return Err(ArapError::HandleOutOfRange { index: h, num_vertices: n });
            }
            if std::mem::replace(&mut is_handle[h], true) {
                return Err(ArapError::DuplicateHandle(h));
            }
        }
        if handle_vertices.is_empty() {
            return Err(ArapError::NoHandles);
        }

        let comp = weights.components();
        let mut anchored = vec![false; n];
        for &h in handle_vertices {
            anchored[comp[h]] = true;
        }
        if let Some(v) = (0..n).find(|&i| !anchored[comp[i]]) {
            return Err(ArapError::FloatingComponent { vertex: v });
        }

        let mut slot = vec![None; n];
        let mut free = 0;
        for i in 0..n {
            if !is_handle[i] {
                slot[i] = Some(free);
                free += 1;
            }
        }
        let factor = if free > 0 {
            let mut a = Assembly::default();
            for i in 0..n {
                let Some(si) = slot[i] else { continue };
                for &(j, w) in weights.neighbors(i) {
                    a.add(si, si, w);
                    if let Some(sj) = slot[j] {
                        a.add(si, sj, -w);
                    }
                }
            }
            Some(Cholesky::new(&a.to_faer(free)?)?)
        } else {
            None
        };
        let mut handle_vertices = handle_vertices.to_vec();
        handle_vertices.sort_unstable();
        Ok(Self { rest, weights, handle_vertices, slot, factor })
    }

    pub fn for_mesh(mesh: &TriMesh, weights: EdgeWeights, handles: &HandleSet) -> Result<Self, ArapError> {
        handles.validate(mesh.num_vertices())?;
        Self::new(mesh.vertices.clone(), weights, &handles.vertices())
    }

    /// Sorted handle vertices this solver was factored for.
    pub fn handle_vertices(&self) -> &[usize] {
        &self.handle_vertices
    }

    pub fn accepts(&self, handles: &HandleSet) -> bool {
        let mut v = handles.vertices();
        v.sort_unstable();
        v == self.handle_vertices
    }

    pub fn weights(&self) -> &EdgeWeights {
        &self.weights
    }

    /// Local-global iterations starting from the rest pose with handles snapped to targets.
    pub fn solve(&self, handles: &HandleSet, params: &ArapParams) -> Result<ArapResult, ArapError> {
        handles.validate(self.rest.len())?;
        if !self.accepts(handles) {
            return Err(ArapError::HandleTopologyChanged);
        }
        let mut cur = self.rest.clone();
        for h in &handles.handles {
            cur[h.vertex] = h.target;
        }

        let mut rot = fit_rotations(&self.rest, &cur, &self.weights);
        let mut energy = vec![arap_energy(&self.rest, &cur, &self.weights, &rot)];
        let mut iterations = 0;
        let floor = energy_floor(&self.rest, &self.weights);
        if self.factor.is_some() {
            while iterations < params.max_iters && energy[energy.len() - 1] > floor {
                cur = self.global_step(&cur, &rot)?;
                rot = fit_rotations(&self.rest, &cur, &self.weights);
                let e = arap_energy(&self.rest, &cur, &self.weights, &rot);
                iterations += 1;
                let prev = energy[energy.len() - 1];
                energy.push(e);
                if converged(prev, e, params.tol, floor) {
                    break;
                }
            }
        }
        let violation = handles.handles.iter().map(|h| (cur[h.vertex] - h.target).amax()).fold(0.0, f64::max);
        Ok(ArapResult {
            positions: cur,
            rotations: rot,
            report: SolveReport { version: 1, iterations, energy, max_constraint_violation: violation },
        })
    }

    /// Minimizes the energy over free vertices for fixed rotations; handle positions are taken
    /// from `cur`.
    pub(crate) fn global_step(
        &self,
        cur: &[Point3<f64>],
        rot: &[nalgebra::Matrix3<f64>],
    ) -> Result<Vec<Point3<f64>>, ArapError> {
        let Some(factor) = &self.factor else { return Ok(cur.to_vec()) };
        let b = global_rhs(&self.rest, &self.weights, rot);
        let free = self.slot.iter().flatten().count();
        let mut rhs = vec![Vector3::zeros(); free];
        for i in 0..self.rest.len() {
            let Some(si) = self.slot[i] else { continue };
            rhs[si] = b[i];
            for &(j, w) in self.weights.neighbors(i) {
                if self.slot[j].is_none() {
                    rhs[si] += w * cur[j].coords;
                }
            }
        }
        let x = factor.solve(&rhs)?;
        let mut out = cur.to_vec();
        for i in 0..self.rest.len() {
            if let Some(si) = self.slot[i] {
                out[i] = Point3::from(x[si]);
            }
        }
        Ok(out)
    }
}

/// One-shot surface ARAP: factor, then iterate.
pub fn arap_surface(
    mesh: &TriMesh,
    weights: &EdgeWeights,
    handles: &HandleSet,
    params: &ArapParams,
) -> Result<ArapResult, ArapError> {
    SurfaceArapSolver::for_mesh(mesh, weights.clone(), handles)?.solve(handles, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arap::cotangent_weights;
    use crate::geom::mesh::tests::plane_patch;
    use nalgebra::{Matrix3, Rotation3};
    use rand::{Rng, SeedableRng};

    #[test]
    fn all_pinned_translation_and_rotation() {
        let mesh = plane_patch(4, 0.0);
        let w = cotangent_weights(&mesh).unwrap();
        let u = Vector3::new(0.2, -0.4, 1.0);
        let q = Rotation3::from_euler_angles(0.3, -0.5, 1.1);
        for map in [Box::new(move |p: &Point3<f64>| p + u) as Box<dyn Fn(&Point3<f64>) -> Point3<f64>>, Box::new(move |p| q * p)] {
            let handles = HandleSet::from_pairs(mesh.vertices.iter().enumerate().map(|(i, p)| (i, map(p))));
            let r = arap_surface(&mesh, &w, &handles, &ArapParams::default()).unwrap();
            for (i, p) in mesh.vertices.iter().enumerate() {
                assert!((r.positions[i] - map(p)).norm() <= 1e-12);
            }
            assert!(*r.report.energy.last().unwrap() <= 1e-12);
        }
    }

    #[test]
    fn floating_component_is_reported() {
        let mut a = plane_patch(2, 0.0);
        let b = plane_patch(2, 1.0);
        let off = a.vertices.len();
        a.vertices.extend(b.vertices);
        a.faces.extend(b.faces.iter().map(|f| f.map(|i| i + off)));
        let w = cotangent_weights(&a).unwrap();
        let handles = HandleSet::pinned(&a.vertices, [0]);
        assert!(matches!(arap_surface(&a, &w, &handles, &ArapParams::default()), Err(ArapError::FloatingComponent { vertex }) if vertex >= off));
    }

    #[test]
    fn energy_is_monotone_and_handles_exact() {
        let mesh = plane_patch(8, 0.0);
        let w = cotangent_weights(&mesh).unwrap();
        let n = mesh.num_vertices();
        let mut handles = HandleSet::pinned(&mesh.vertices, 0..9);
        let lift = |p: &Point3<f64>| p + Vector3::new(0.0, 0.0, 0.5);
        handles.handles.extend((n - 9..n).map(|i| crate::arap::Handle { vertex: i, target: lift(&mesh.vertices[i]) }));
        let r = arap_surface(&mesh, &w, &handles, &ArapParams { max_iters: 30, tol: 0.0 }).unwrap();
        for pair in r.report.energy.windows(2) {
            assert!(pair[1] <= pair[0] * (1.0 + 1e-9), "{pair:?}");
        }
        assert_eq!(r.report.max_constraint_violation, 0.0);
        for h in &handles.handles {
            assert_eq!(r.positions[h.vertex], h.target);
        }
        for rot in &r.rotations {
            assert!((rot.transpose() * rot - Matrix3::identity()).abs().max() <= 1e-8);
            assert!(rot.determinant() > 0.0);
        }
    }

    #[test]
    fn global_step_is_optimal_for_fixed_rotations() {
        let mesh = plane_patch(6, 0.0);
        let w = cotangent_weights(&mesh).unwrap();
        let n = mesh.num_vertices();
        let mut handles = HandleSet::pinned(&mesh.vertices, [0, 6]);
        handles.handles.push(crate::arap::Handle { vertex: n - 1, target: Point3::new(1.2, 1.0, 0.4) });
        let solver = SurfaceArapSolver::for_mesh(&mesh, w.clone(), &handles).unwrap();
        let mut cur = mesh.vertices.clone();
        for h in &handles.handles {
            cur[h.vertex] = h.target;
        }
        let rot = fit_rotations(&mesh.vertices, &cur, &w);
        let opt = solver.global_step(&cur, &rot).unwrap();
        let e0 = arap_energy(&mesh.vertices, &opt, &w, &rot);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let fixed = solver.handle_vertices().to_vec();
        for _ in 0..50 {
            let i = rng.random_range(0..n);
            if fixed.contains(&i) {
                continue;
            }
            let mut p = opt.clone();
            p[i] += Vector3::new(rng.random(), rng.random(), rng.random()).map(|c: f64| (c - 0.5) * 1e-3);
            assert!(arap_energy(&mesh.vertices, &p, &w, &rot) > e0);
        }
    }
}
