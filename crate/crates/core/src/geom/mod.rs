//! Triangle meshes: the user-facing edit surface, its extraction from a field, and I/O.

mod bvh;
mod marching_cubes;
mod mc_table;
pub(crate) mod mesh;
mod obj;

pub use bvh::{closest_point_on_triangle, ClosestHit, TriangleBvh};
pub use marching_cubes::{default_iso, marching_cubes, marching_cubes_clamped, IsoChannel, EDIT_EDGE_CLAMP};
pub use mesh::{vertex_normals, TriMesh};
pub use obj::{load_obj, parse_obj, save_obj, write_obj};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("face {face} references vertex {index} but the mesh has {num_vertices} vertices")]
    IndexOutOfRange { face: usize, index: usize, num_vertices: usize },
    #[error("face {0} repeats a vertex index")]
    DegenerateFace(usize),
    #[error("field has no {0} channel")]
    MissingChannel(&'static str),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("mesh is empty")]
    EmptyMesh,
    #[error("edge clamp {0} is outside [0, 0.5)")]
    InvalidEdgeClamp(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
