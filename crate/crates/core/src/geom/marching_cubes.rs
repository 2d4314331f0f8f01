use std::collections::HashMap;

use super::mc_table::TRI_TABLE;
use super::{GeomError, TriMesh};
use crate::field::RadianceFieldGrid;

/// Scalar channel to extract the iso-surface from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsoChannel {
    /// Normals point toward increasing signed distance.
    Sdf,
    /// Normals point toward decreasing density.
    Density,
}

impl std::str::FromStr for IsoChannel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sdf" => Ok(IsoChannel::Sdf),
            "density" => Ok(IsoChannel::Density),
            other => Err(format!("unknown channel {other:?} (expected sdf or density)")),
        }
    }
}

/// Default channel and iso-level: the sdf zero set when present, else half the peak density.
pub fn default_iso(field: &RadianceFieldGrid, density_scale: f64) -> (IsoChannel, f64) {
    if field.sdf().is_some() {
        (IsoChannel::Sdf, 0.0)
    } else {
        (IsoChannel::Density, density_scale / 2.0)
    }
}

// Corner offsets and edge endpoints in the conventional table order.
const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];
const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [3, 2],
    [0, 3],
    [4, 5],
    [5, 6],
    [7, 6],
    [4, 7],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// Extracts the iso-surface of the chosen channel with marching cubes. Vertices on shared
/// lattice edges are welded by edge identity, so the output is watertight wherever the surface
/// stays inside the grid.
pub fn marching_cubes(field: &RadianceFieldGrid, iso: f64, channel: IsoChannel) -> Result<TriMesh, GeomError> {
    marching_cubes_clamped(field, iso, channel, 0.0)
}

/// Edge clamp for surfaces that will drive a tet proxy.
pub const EDIT_EDGE_CLAMP: f64 = 0.2;

/// Marching cubes with every edge crossing kept at least `edge_clamp` (a fraction of the lattice
/// spacing, below 0.5) away from both lattice nodes. Without it, a surface passing close to a
/// node leaves several vertices almost on top of each other.
pub fn marching_cubes_clamped(
    field: &RadianceFieldGrid,
    iso: f64,
    channel: IsoChannel,
    edge_clamp: f64,
) -> Result<TriMesh, GeomError> {
    if !(0.0..0.5).contains(&edge_clamp) {
        return Err(GeomError::InvalidEdgeClamp(edge_clamp));
    }
    // Work with a scalar that increases toward the outside.
    let values: Vec<f64> = match channel {
        IsoChannel::Sdf => field
            .sdf()
            .ok_or(GeomError::MissingChannel("sdf"))?
            .iter()
            .map(|&v| v as f64 - iso)
            .collect(),
        IsoChannel::Density => field.density().iter().map(|&v| iso - v as f64).collect(),
    };
    let values = nudge_zeros(values);

    let [nx, ny, nz] = field.dims();
    let idx = |i: usize, j: usize, k: usize| (k * ny + j) * nx + i;

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut edge_vertex: HashMap<(usize, u8), usize> = HashMap::new();

    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let node = CORNERS.map(|c| idx(i + c[0], j + c[1], k + c[2]));
                let mut case = 0usize;
                for (c, &n) in node.iter().enumerate() {
                    if values[n] < 0.0 {
                        case |= 1 << c;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                let row = &TRI_TABLE[case];
                let mut local = [usize::MAX; 12];
                for tri in row.chunks_exact(3).take_while(|t| t[0] >= 0) {
                    let mut f = [0usize; 3];
                    for (slot, &e) in f.iter_mut().zip(tri) {
                        let e = e as usize;
                        if local[e] == usize::MAX {
                            let [ca, cb] = EDGES[e];
                            let (a, b) = (node[ca], node[cb]);
                            let axis = (0..3).find(|&ax| CORNERS[ca][ax] != CORNERS[cb][ax]).unwrap() as u8;
                            local[e] = *edge_vertex.entry((a, axis)).or_insert_with(|| {
                                let (va, vb) = (values[a], values[b]);
                                let t = (va / (va - vb)).clamp(edge_clamp, 1.0 - edge_clamp);
                                let pa = field.node_position(i + CORNERS[ca][0], j + CORNERS[ca][1], k + CORNERS[ca][2]);
                                let pb = field.node_position(i + CORNERS[cb][0], j + CORNERS[cb][1], k + CORNERS[cb][2]);
                                vertices.push(pa + (pb - pa) * t);
                                vertices.len() - 1
                            });
                        }
                        *slot = local[e];
                    }
                    // Table winding faces the inside corners; flip to face outward.
                    faces.push([f[0], f[2], f[1]]);
                }
            }
        }
    }
    Ok(TriMesh { vertices, faces })
}

/// Moves lattice values lying exactly on the iso-level off it, so no two crossing edges share
/// a vertex position.
fn nudge_zeros(mut values: Vec<f64>) -> Vec<f64> {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let eps = if scale > 0.0 { scale * 1e-9 } else { 1e-12 };
    for v in &mut values {
        if *v == 0.0 {
            *v = eps;
        }
    }
    values
}
