use std::path::Path;

use serde::Deserialize;

use super::PipelineError;
use crate::field::{Aabb, RadianceFieldGrid};
use crate::geom::TriMesh;
use crate::render::Camera;
use crate::tetproxy::{build_cage, default_offset, embed_surface, tetrahedralize, SurfaceEmbedding, TetMesh};

/// Everything built around an extracted surface before editing.
#[derive(Debug, Clone)]
pub struct Proxy {
    pub cage: TriMesh,
    pub tet: TetMesh,
    pub embedding: SurfaceEmbedding,
    pub offset: f64,
    pub cell_size: f64,
}

/// Cage offset from the cameras (unless given), BCC tets at `cell_size` (default half the
/// offset), and the surface embedding. Fails if any surface vertex ends up outside the tets.
pub fn build_proxy(
    mesh: &TriMesh,
    cameras: &[Camera],
    offset: Option<f64>,
    cell_size: Option<f64>,
) -> Result<Proxy, PipelineError> {
    if mesh.num_faces() == 0 {
        return Err(PipelineError::Invalid("surface mesh is empty".into()));
    }
    let offset = match offset {
        Some(o) => o,
        None => default_offset(cameras, &mesh.bounding_box().center())?,
    };
    let cell_size = cell_size.unwrap_or(offset / 2.0);
    let cage = build_cage(mesh, offset)?;
    let tet = tetrahedralize(&cage, cell_size)?;
    let embedding = embed_surface(&tet, mesh)?;
    log::info!(
        "proxy: offset {offset:.4}, cell {cell_size:.4}, {} vertices, {} tets, {} embedded points",
        tet.num_vertices(),
        tet.num_tets(),
        embedding.len()
    );
    Ok(Proxy { cage, tet, embedding, offset, cell_size })
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CameraDoc {
    List(Vec<Camera>),
    One(Camera),
    Set { cameras: Vec<Camera> },
}

/// A camera list: a bare array, `{"version": 1, "cameras": [...]}`, or a single camera.
pub fn load_cameras(path: impl AsRef<Path>) -> Result<Vec<Camera>, PipelineError> {
    let doc: CameraDoc = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let cams = match doc {
        CameraDoc::List(c) | CameraDoc::Set { cameras: c } => c,
        CameraDoc::One(c) => vec![c],
    };
    for c in &cams {
        c.validate()?;
    }
    Ok(cams)
}

/// Trilinear resampling onto a `dims` lattice over the same bounds. Extracting from a coarser
/// lattice gives a sparser surface, which keeps the tet constraint system well posed.
pub fn resample_field(field: &RadianceFieldGrid, dims: [usize; 3]) -> Result<RadianceFieldGrid, PipelineError> {
    if dims == field.dims() {
        return Ok(field.clone());
    }
    let bounds: Aabb = *field.bounds();
    let n = dims.iter().product::<usize>();
    let mut density = Vec::with_capacity(n);
    let mut color = Vec::with_capacity(n);
    let mut sdf = field.sdf().map(|_| Vec::with_capacity(n));
    let e = bounds.extent();
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let t = |v: usize, d: usize| if d > 1 { v as f64 / (d - 1) as f64 } else { 0.0 };
                let mut p = bounds.min;
                p.x += e.x * t(i, dims[0]);
                p.y += e.y * t(j, dims[1]);
                p.z += e.z * t(k, dims[2]);
                // Keep the last node inside the source bounds despite rounding.
                let p = p.coords.zip_zip_map(&bounds.min.coords, &bounds.max.coords, |v, lo, hi| v.clamp(lo, hi)).into();
                let (s, c) = field.sample(&p);
                density.push(s as f32);
                color.push(c.map(|v| (v as f32).clamp(0.0, 1.0)));
                if let Some(sdf) = sdf.as_mut() {
                    sdf.push(field.sample_sdf(&p).unwrap_or(f64::INFINITY) as f32);
                }
            }
        }
    }
    Ok(RadianceFieldGrid::new(dims, bounds, density, color, sdf)?)
}
