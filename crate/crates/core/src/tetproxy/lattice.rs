use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use super::{signed_volume, TetError, TetMesh};
use crate::geom::{TriMesh, TriangleBvh};

/// Fixed, slightly skewed directions so parity rays avoid grazing lattice-aligned features.
const RAY_DIRS: [[f64; 3]; 3] = [
    [0.8324, 0.1571, 0.5314],
    [-0.2093, 0.9112, 0.3549],
    [0.3761, -0.4458, 0.8127],
];

/// Ray-parity inside test with a majority vote over three directions.
pub(crate) fn inside_by_parity(bvh: &TriangleBvh, p: &Point3<f64>) -> bool {
    let votes = RAY_DIRS
        .iter()
        .filter(|d| bvh.count_crossings(p, &Vector3::from(**d).normalize()) % 2 == 1)
        .count();
    votes >= 2
}

/// Fills the closed `cage` with body-centred cubic lattice tetrahedra of cell size `h`, keeping
/// those whose centroid lies inside. Vertex positions are rounded to `f32` so the proxy survives
/// serialization unchanged.
pub fn tetrahedralize(cage: &TriMesh, h: f64) -> Result<TetMesh, TetError> {
    if !(h > 0.0) {
        return Err(TetError::InvalidCellSize(h));
    }
    if cage.is_empty() || !cage.is_closed() {
        return Err(TetError::OpenCage);
    }
    let bb = cage.bounding_box();
    let min_extent = bb.extent().min();
    if h > min_extent {
        return Err(TetError::CellTooLarge { h, extent: min_extent });
    }

    let domain = bb.padded(h);
    let e = domain.extent();
    let n = [0, 1, 2].map(|a| ((e[a] / h).ceil() as usize).max(1));
    let [nx, ny, nz] = n;
    let corner = |i: usize, j: usize, k: usize| i + (nx + 1) * (j + (ny + 1) * k);
    let num_corners = (nx + 1) * (ny + 1) * (nz + 1);
    let center = |i: usize, j: usize, k: usize| num_corners + i + nx * (j + ny * k);
    let quantize = |v: f64| v as f32 as f64;
    let mut positions = Vec::with_capacity(num_corners + nx * ny * nz);
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                positions.push(Point3::from(domain.min.coords + h * Vector3::new(i as f64, j as f64, k as f64)).map(quantize));
            }
        }
    }
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let c = Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5);
                positions.push(Point3::from(domain.min.coords + h * c).map(quantize));
            }
        }
    }

    // Each interior face between two cells yields four tets: both cell centres plus one edge of
    // the shared square face.
    let mut candidates = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let c0 = center(i, j, k);
                if i + 1 < nx {
                    let q = [corner(i + 1, j, k), corner(i + 1, j + 1, k), corner(i + 1, j + 1, k + 1), corner(i + 1, j, k + 1)];
                    push_face(&mut candidates, c0, center(i + 1, j, k), q);
                }
                if j + 1 < ny {
                    let q = [corner(i, j + 1, k), corner(i + 1, j + 1, k), corner(i + 1, j + 1, k + 1), corner(i, j + 1, k + 1)];
                    push_face(&mut candidates, c0, center(i, j + 1, k), q);
                }
                if k + 1 < nz {
                    let q = [corner(i, j, k + 1), corner(i + 1, j, k + 1), corner(i + 1, j + 1, k + 1), corner(i, j + 1, k + 1)];
                    push_face(&mut candidates, c0, center(i, j, k + 1), q);
                }
            }
        }
    }

    let bvh = TriangleBvh::new(cage);
    let keep: Vec<bool> = candidates
        .par_iter()
        .map(|t: &[usize; 4]| {
            let c = Point3::from(t.iter().map(|&v| positions[v].coords).sum::<Vector3<f64>>() / 4.0);
            inside_by_parity(&bvh, &c)
        })
        .collect();

    let mut remap = vec![usize::MAX; positions.len()];
    let mut kept: Vec<[usize; 4]> = candidates.into_iter().zip(keep).filter(|(_, k)| *k).map(|(t, _)| t).collect();
    if kept.is_empty() {
        return Err(TetError::Empty);
    }
    let mut used = vec![false; positions.len()];
    for t in &kept {
        for &v in t {
            used[v] = true;
        }
    }
    let mut verts = Vec::new();
    for (v, p) in positions.iter().enumerate() {
        if used[v] {
            remap[v] = verts.len();
            verts.push(*p);
        }
    }
    for t in &mut kept {
        *t = t.map(|v| remap[v]);
        if signed_volume(&verts, t) < 0.0 {
            t.swap(2, 3);
        }
    }
    TetMesh::new(verts, kept)
}

fn push_face(out: &mut Vec<[usize; 4]>, c0: usize, c1: usize, q: [usize; 4]) {
    for m in 0..4 {
        out.push([c0, c1, q[m], q[(m + 1) % 4]]);
    }
}
