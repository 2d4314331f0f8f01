use std::collections::HashMap;

use nalgebra::{Matrix3, Point3, Vector3};

use super::sparse::{Assembly, RowMatrix, SparseLu};
use super::{
    arap_energy, converged, energy_floor, fit_rotations, global_rhs, ArapError, ArapParams, ArapResult, EdgeWeights, SolveReport,
};
use crate::tetproxy::{SurfaceEmbedding, TetMesh};

/// Constraint residual the global step must reach.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-6;
const MAX_REFINEMENTS: usize = 200;

/// Tet ARAP under the barycentric equality constraints `A t' = v'`.
///
/// The global step solves the saddle-point system
/// `[P A^T; A 0] [t'; lambda] = [b + rho A^T v'; v']` with `P = L + rho A^T A`. The matrix
/// factored is the regularized `[P A^T; A -delta I]`, and iterative refinement against the exact
/// system removes the regularization error. This tolerates rank-deficient `A` as long as the
/// targets are consistent. Vertices of tet components that carry no constraint keep their rest
/// positions.
pub struct TetArapSolver {
    rest: Vec<Point3<f64>>,
    weights: EdgeWeights,
    active: Vec<usize>,
    /// Constraint rows in reduced indices.
    rows: Vec<([usize; 4], [f64; 4])>,
    rest_targets: Vec<Point3<f64>>,
    rho: f64,
    p: RowMatrix,
    lu: SparseLu,
}

impl TetArapSolver {
    pub fn new(tet: &TetMesh, weights: EdgeWeights, embedding: &SurfaceEmbedding) -> Result<Self, ArapError> {
        let n = tet.num_vertices();
        if weights.num_vertices() != n {
            return Err(ArapError::SizeMismatch { expected: n, actual: weights.num_vertices() });
        }
        let mut raw_rows = Vec::with_capacity(embedding.len());
        let mut seen: HashMap<Vec<(usize, u64)>, usize> = HashMap::new();
        for i in 0..embedding.len() {
            let (v, w) = embedding.row(tet, i);
            let sum: f64 = w.iter().sum();
            if !((sum - 1.0).abs() <= 1e-9) {
                return Err(ArapError::EmbeddingRowSum { row: i, sum });
            }
            let mut key: Vec<(usize, u64)> = (0..4).filter(|&m| w[m] != 0.0).map(|m| (v[m], w[m].to_bits())).collect();
            key.sort_unstable();
            if let Some(&j) = seen.get(&key) {
                return Err(ArapError::DuplicateConstraint(j, i));
            }
            seen.insert(key, i);
            raw_rows.push((v, w));
        }
        if raw_rows.is_empty() {
            return Err(ArapError::NoHandles);
        }

        let comp = weights.components();
        let mut anchored = vec![false; n];
        for (v, w) in &raw_rows {
            for m in 0..4 {
                if w[m] != 0.0 {
                    anchored[comp[v[m]]] = true;
                }
            }
        }
        let mut slot = vec![None; n];
        let mut active = Vec::new();
        for i in 0..n {
            if anchored[comp[i]] {
                slot[i] = Some(active.len());
                active.push(i);
            }
        }
        let na = active.len();
        let rows: Vec<([usize; 4], [f64; 4])> =
            raw_rows.iter().map(|(v, w)| (v.map(|i| slot[i].expect("constrained vertex is active")), *w)).collect();

        let mean_degree = active.iter().map(|&i| weights.neighbors(i).iter().map(|e| e.1).sum::<f64>()).sum::<f64>() / na as f64;
        let rho = mean_degree.max(1e-12);
        let delta = 1e-10 * rho;

        let mut p = Assembly::default();
        for (r, &i) in active.iter().enumerate() {
            for &(j, w) in weights.neighbors(i) {
                p.add(r, r, w);
                p.add(r, slot[j].expect("neighbors share a component"), -w);
            }
        }
        for (v, w) in &rows {
            for a in 0..4 {
                for b in 0..4 {
                    p.add(v[a], v[b], rho * w[a] * w[b]);
                }
            }
        }
        let mut k = p.clone();
        for (c, (v, w)) in rows.iter().enumerate() {
            for m in 0..4 {
                k.add(na + c, v[m], w[m]);
                k.add(v[m], na + c, w[m]);
            }
            k.add(na + c, na + c, -delta);
        }
        let lu = SparseLu::new(&k.to_faer(na + rows.len())?)?;
        Ok(Self {
            rest: tet.rest().to_vec(),
            weights,
            p: p.to_rows(na),
            active,
            rows,
            rest_targets: embedding.points.clone(),
            rho,
            lu,
        })
    }

    pub fn num_constraints(&self) -> usize {
        self.rows.len()
    }

    fn apply_a(&self, x: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        self.rows.iter().map(|(v, w)| (0..4).map(|m| w[m] * x[v[m]]).sum()).collect()
    }

    fn apply_at(&self, y: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        let mut out = vec![Vector3::zeros(); self.active.len()];
        for ((v, w), yc) in self.rows.iter().zip(y) {
            for m in 0..4 {
                out[v[m]] += w[m] * yc;
            }
        }
        out
    }

    /// Global step for the reduced right-hand side `b`; returns reduced positions and the final
    /// constraint residual.
    fn kkt_solve(&self, b: &[Vector3<f64>], targets: &[Vector3<f64>]) -> Result<(Vec<Vector3<f64>>, f64), ArapError> {
        let na = self.active.len();
        let m = self.rows.len();
        let at_v = self.apply_at(targets);
        let rhs1: Vec<Vector3<f64>> = b.iter().zip(&at_v).map(|(b, a)| b + self.rho * a).collect();
        let scale1 = rhs1.iter().map(|v| v.amax()).fold(0.0, f64::max).max(1e-300);
        let scale2 = targets.iter().map(|v| v.amax()).fold(1.0, f64::max);

        let mut x = vec![Vector3::zeros(); na];
        let mut lambda = vec![Vector3::zeros(); m];
        let mut viol = f64::INFINITY;
        let (mut prev_viol, mut prev_stat, mut stalls) = (f64::INFINITY, f64::INFINITY, 0);
        for _ in 0..MAX_REFINEMENTS {
            let px = self.p.mul(&x);
            let atl = self.apply_at(&lambda);
            let r1: Vec<Vector3<f64>> = (0..na).map(|i| rhs1[i] - px[i] - atl[i]).collect();
            let ax = self.apply_a(&x);
            let r2: Vec<Vector3<f64>> = (0..m).map(|c| targets[c] - ax[c]).collect();
            viol = r2.iter().map(|v| v.amax()).fold(0.0, f64::max);
            let stat = r1.iter().map(|v| v.amax()).fold(0.0, f64::max);
            if viol <= 1e-13 * scale2 && stat <= 1e-12 * scale1 {
                break;
            }
            // An inconsistent system stops improving; so does one already at roundoff level.
            stalls = if viol >= 0.95 * prev_viol && stat >= 0.95 * prev_stat { stalls + 1 } else { 0 };
            if stalls >= 5 {
                break;
            }
            (prev_viol, prev_stat) = (viol, stat);
            let mut r = r1;
            r.extend(r2);
            let d = self.lu.solve(&r)?;
            for i in 0..na {
                x[i] += d[i];
            }
            for c in 0..m {
                lambda[c] += d[na + c];
            }
        }
        if !viol.is_finite() {
            return Err(ArapError::NonFinite);
        }
        if viol > CONSTRAINT_TOLERANCE {
            return Err(ArapError::Infeasible { violation: viol });
        }
        Ok((x, viol))
    }

    fn global_step(&self, rot: &[Matrix3<f64>], targets: &[Vector3<f64>]) -> Result<(Vec<Point3<f64>>, f64), ArapError> {
        let b = global_rhs(&self.rest, &self.weights, rot);
        let b_active: Vec<_> = self.active.iter().map(|&i| b[i]).collect();
        let (x, viol) = self.kkt_solve(&b_active, targets)?;
        let mut out = self.rest.clone();
        for (r, &i) in self.active.iter().enumerate() {
            out[i] = Point3::from(x[r]);
        }
        Ok((out, viol))
    }

    /// Deformed tet positions whose embedded points land on `targets`. The first global step uses
    /// identity rotations, so every iterate is feasible.
    pub fn solve(&self, targets: &[Point3<f64>], params: &ArapParams) -> Result<ArapResult, ArapError> {
        self.solve_from(targets, None, params)
    }

    /// As [`solve`](Self::solve), with per-vertex rotations for the first global step. Good
    /// initial rotations (e.g. carried over from the surface solve) cut the iteration count for
    /// large rotations, where identity-started local-global converges slowly.
    pub fn solve_from(
        &self,
        targets: &[Point3<f64>],
        initial_rotations: Option<&[Matrix3<f64>]>,
        params: &ArapParams,
    ) -> Result<ArapResult, ArapError> {
        if targets.len() != self.rows.len() {
            return Err(ArapError::SizeMismatch { expected: self.rows.len(), actual: targets.len() });
        }
        let n = self.rest.len();
        if targets == self.rest_targets.as_slice() {
            // The rest pose is feasible with zero energy.
            let ax = self.apply_a(&self.active.iter().map(|&i| self.rest[i].coords).collect::<Vec<_>>());
            let viol = ax.iter().zip(targets).map(|(a, t)| (a - t.coords).amax()).fold(0.0, f64::max);
            return Ok(ArapResult {
                positions: self.rest.clone(),
                rotations: vec![Matrix3::identity(); n],
                report: SolveReport { version: 1, iterations: 0, energy: vec![0.0], max_constraint_violation: viol },
            });
        }
        let t: Vec<Vector3<f64>> = targets.iter().map(|p| p.coords).collect();
        let identity;
        let init = match initial_rotations {
            Some(r) if r.len() == n => r,
            Some(r) => return Err(ArapError::SizeMismatch { expected: n, actual: r.len() }),
            None => {
                identity = vec![Matrix3::identity(); n];
                &identity[..]
            }
        };
        let (mut cur, mut worst) = self.global_step(init, &t)?;
        let mut rot = fit_rotations(&self.rest, &cur, &self.weights);
        let mut energy = vec![arap_energy(&self.rest, &cur, &self.weights, &rot)];
        let mut iterations = 1;
        let floor = energy_floor(&self.rest, &self.weights);
        while iterations < params.max_iters && energy[energy.len() - 1] > floor {
            let (next, viol) = self.global_step(&rot, &t)?;
            worst = worst.max(viol);
            cur = next;
            rot = fit_rotations(&self.rest, &cur, &self.weights);
            let e = arap_energy(&self.rest, &cur, &self.weights, &rot);
            iterations += 1;
            let prev = energy[energy.len() - 1];
            energy.push(e);
            if converged(prev, e, params.tol, floor) {
                break;
            }
        }
        Ok(ArapResult {
            positions: cur,
            rotations: rot,
            report: SolveReport { version: 1, iterations, energy, max_constraint_violation: worst },
        })
    }
}

/// One-shot constrained tet ARAP.
pub fn arap_tet_constrained(
    tet: &TetMesh,
    weights: &EdgeWeights,
    embedding: &SurfaceEmbedding,
    targets: &[Point3<f64>],
    params: &ArapParams,
) -> Result<ArapResult, ArapError> {
    TetArapSolver::new(tet, weights.clone(), embedding)?.solve(targets, params)
}
