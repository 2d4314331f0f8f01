use nalgebra::{Point3, Vector3};

use super::{Pose, TetMesh, BARY_TOLERANCE};
use crate::field::Aabb;

const MAX_MEAN_CANDIDATES: f64 = 8.0;

/// Uniform grid over one pose of a tet mesh; each cell lists, in increasing order, the tets whose
/// bounding box overlaps it.
#[derive(Debug, Clone)]
pub struct TetLocator {
    pose: Pose,
    bounds: Aabb,
    res: [usize; 3],
    cell: Vector3<f64>,
    start: Vec<u32>,
    items: Vec<u32>,
}

pub fn build_locator(tet: &TetMesh, pose: Pose) -> TetLocator {
    TetLocator::new(tet, pose)
}

/// Containing tet of `p` with clamped barycentric coordinates, lowest index first on ties.
pub fn locate_point(locator: &TetLocator, tet: &TetMesh, p: &Point3<f64>) -> Option<(usize, [f64; 4])> {
    locator.locate(tet, p)
}

impl TetLocator {
    pub fn new(tet: &TetMesh, pose: Pose) -> Self {
        let n = tet.num_tets();
        let boxes: Vec<Aabb> = (0..n).map(|k| tet.tet_bounding_box(k, pose)).collect();
        let raw = tet.bounding_box(pose);
        if n == 0 || !raw.min.iter().all(|v| v.is_finite()) {
            return Self { pose, bounds: Aabb::empty(), res: [0; 3], cell: Vector3::zeros(), start: vec![0], items: vec![] };
        }
        let scale = raw.extent().max().max(1e-300);
        let pad = 1e-7 * scale;
        let bounds = raw.padded(pad);
        let extent = bounds.extent();

        // Start from the mean tet box size and refine until the mean candidate count is small.
        let mean_size = boxes.iter().map(|b| b.extent().max()).sum::<f64>() / n as f64;
        let mut size = mean_size.max(1e-12 * scale);
        loop {
            let res = [0, 1, 2].map(|a| ((extent[a] / size).ceil() as usize).clamp(1, 512));
            let cell = Vector3::new(extent.x / res[0] as f64, extent.y / res[1] as f64, extent.z / res[2] as f64);
            let mut loc = Self { pose, bounds, res, cell, start: vec![], items: vec![] };
            let ranges: Vec<_> = boxes.iter().map(|b| loc.cell_range(&b.padded(pad))).collect();
            let total: usize = ranges.iter().map(|(lo, hi)| (0..3).map(|a| hi[a] - lo[a] + 1).product::<usize>()).sum();
            let cells = res.iter().product::<usize>();
            if total as f64 / cells as f64 > MAX_MEAN_CANDIDATES && res.iter().any(|&r| r < 512) {
                size *= 0.75;
                continue;
            }
            let mut count = vec![0u32; cells + 1];
            for (lo, hi) in &ranges {
                loc.for_cells(lo, hi, |c| count[c + 1] += 1);
            }
            for c in 0..cells {
                count[c + 1] += count[c];
            }
            let mut fill = count.clone();
            let mut items = vec![0u32; total];
            for (k, (lo, hi)) in ranges.iter().enumerate() {
                loc.for_cells(lo, hi, |c| {
                    items[fill[c] as usize] = k as u32;
                    fill[c] += 1;
                });
            }
            loc.start = count;
            loc.items = items;
            return loc;
        }
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.res
    }

    pub fn mean_candidates(&self) -> f64 {
        self.items.len() as f64 / (self.start.len() - 1).max(1) as f64
    }

    fn cell_of(&self, p: &Point3<f64>, a: usize) -> usize {
        (((p[a] - self.bounds.min[a]) / self.cell[a]).floor().max(0.0) as usize).min(self.res[a] - 1)
    }

    fn cell_range(&self, b: &Aabb) -> ([usize; 3], [usize; 3]) {
        ([0, 1, 2].map(|a| self.cell_of(&b.min, a)), [0, 1, 2].map(|a| self.cell_of(&b.max, a)))
    }

    fn for_cells(&self, lo: &[usize; 3], hi: &[usize; 3], mut f: impl FnMut(usize)) {
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    f(i + self.res[0] * (j + self.res[1] * k));
                }
            }
        }
    }

    /// Tets whose padded bounding box overlaps the cell holding `p`; empty outside the grid.
    pub fn candidates(&self, p: &Point3<f64>) -> &[u32] {
        if self.res[0] == 0 || !self.bounds.contains(p) {
            return &[];
        }
        let c = self.cell_of(p, 0) + self.res[0] * (self.cell_of(p, 1) + self.res[1] * self.cell_of(p, 2));
        &self.items[self.start[c] as usize..self.start[c + 1] as usize]
    }

    pub fn locate(&self, tet: &TetMesh, p: &Point3<f64>) -> Option<(usize, [f64; 4])> {
        self.candidates(p).iter().find_map(|&k| {
            let b = tet.barycentric(k as usize, p, self.pose);
            contains(&b).then(|| (k as usize, clamp_to_simplex(b)))
        })
    }
}

pub(crate) fn contains(b: &[f64; 4]) -> bool {
    b.iter().all(|&v| v >= -BARY_TOLERANCE)
}

pub(crate) fn clamp_to_simplex(b: [f64; 4]) -> [f64; 4] {
    if b.iter().all(|&v| v >= 0.0) {
        return b;
    }
    let c = b.map(|v| v.max(0.0));
    let s: f64 = c.iter().sum();
    c.map(|v| v / s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::mesh::tests::unit_cube;
    use crate::tetproxy::tetrahedralize;
    use rand::{Rng, SeedableRng};

    fn exhaustive(tet: &TetMesh, p: &Point3<f64>, pose: Pose) -> Option<usize> {
        (0..tet.num_tets()).find(|&k| tet.barycentric(k, p, pose).iter().all(|&v| v >= -1e-9))
    }

    #[test]
    fn matches_exhaustive_scan() {
        let tet = tetrahedralize(&unit_cube(), 0.2).unwrap();
        let loc = build_locator(&tet, Pose::Rest);
        assert!(loc.mean_candidates() <= MAX_MEAN_CANDIDATES);
        let bb = tet.bounding_box(Pose::Rest).padded(0.1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let p = Point3::from(bb.min.coords + bb.extent().component_mul(&Vector3::new(rng.random(), rng.random(), rng.random())));
            assert_eq!(locate_point(&loc, &tet, &p).map(|r| r.0), exhaustive(&tet, &p, Pose::Rest));
        }
    }

    #[test]
    fn centroids_and_outside() {
        let tet = tetrahedralize(&unit_cube(), 0.25).unwrap();
        let loc = build_locator(&tet, Pose::Rest);
        for k in 0..tet.num_tets() {
            let (found, b) = loc.locate(&tet, &tet.centroid(k, Pose::Rest)).unwrap();
            assert_eq!(found, k);
            assert!(b.iter().all(|v| (v - 0.25).abs() <= 1e-9));
        }
        assert!(loc.candidates(&Point3::new(5.0, 5.0, 5.0)).is_empty());
        assert!(loc.locate(&tet, &Point3::new(-0.5, 0.5, 0.5)).is_none());
    }
}
