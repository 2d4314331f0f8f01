//! Proxy files come in pairs: a JSON header at the given path and a little-endian binary payload
//! next to it (`<path>.bin`) holding rest positions (f32 xyz), deformed positions (f32 xyz) and
//! tet indices (u32 x 4).

use std::path::{Path, PathBuf};

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::{SurfaceEmbedding, TetError, TetMesh};

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    num_vertices: usize,
    num_tets: usize,
    /// File name of the payload, relative to the header.
    binary: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<SurfaceEmbedding>,
}

fn payload_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".bin");
    PathBuf::from(s)
}

impl TetMesh {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TetError> {
        save_proxy(path, self, None)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TetError> {
        Ok(load_proxy(path)?.0)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.num_vertices() * 24 + self.num_tets() * 16);
        for p in self.rest().iter().chain(self.deformed()) {
            for c in p.iter() {
                out.extend((*c as f32).to_le_bytes());
            }
        }
        for t in self.tets() {
            for &i in t {
                out.extend((i as u32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], num_vertices: usize, num_tets: usize) -> Result<Self, TetError> {
        let expected = num_vertices * 24 + num_tets * 16;
        if bytes.len() != expected {
            return Err(TetError::Format(format!("payload is {} bytes, expected {expected}", bytes.len())));
        }
        let word = |i: usize| <[u8; 4]>::try_from(&bytes[4 * i..4 * i + 4]).expect("4 bytes");
        let point = |v: usize| Point3::new(0, 1, 2).map(|c| f32::from_le_bytes(word(3 * v + c)) as f64);
        let rest: Vec<_> = (0..num_vertices).map(point).collect();
        let deformed: Vec<_> = (num_vertices..2 * num_vertices).map(point).collect();
        let base = 6 * num_vertices;
        let tets = (0..num_tets).map(|k| [0, 1, 2, 3].map(|m| u32::from_le_bytes(word(base + 4 * k + m)) as usize)).collect();
        TetMesh::new(rest, tets)?.with_deformed(deformed)
    }
}

pub fn save_proxy(path: impl AsRef<Path>, tet: &TetMesh, embedding: Option<&SurfaceEmbedding>) -> Result<(), TetError> {
    let path = path.as_ref();
    let bin = payload_path(path);
    let header = Header {
        version: 1,
        num_vertices: tet.num_vertices(),
        num_tets: tet.num_tets(),
        binary: bin.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        embedding: embedding.cloned(),
    };
    std::fs::write(&bin, tet.to_bytes())?;
    std::fs::write(path, serde_json::to_vec_pretty(&header)?)?;
    Ok(())
}

pub fn load_proxy(path: impl AsRef<Path>) -> Result<(TetMesh, Option<SurfaceEmbedding>), TetError> {
    let path = path.as_ref();
    let header: Header = serde_json::from_slice(&std::fs::read(path)?)?;
    if header.version != 1 {
        return Err(TetError::Format(format!("unsupported version {}", header.version)));
    }
    let bin = path.parent().unwrap_or(Path::new(".")).join(&header.binary);
    let tet = TetMesh::from_bytes(&std::fs::read(bin)?, header.num_vertices, header.num_tets)?;
    if let Some(e) = &header.embedding {
        if e.tets.iter().any(|&k| k >= tet.num_tets()) || e.weights.len() != e.tets.len() || e.points.len() != e.tets.len() {
            return Err(TetError::Format("embedding does not match the tet mesh".into()));
        }
    }
    Ok((tet, header.embedding))
}
