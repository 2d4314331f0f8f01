use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::Point3;

use super::{GeomError, TriMesh};

/// Reads `v` and `f` records; polygons are fan-triangulated and other records are ignored.
/// Face indices are 1-based, negative values count back from the latest vertex.
pub fn parse_obj(text: &str) -> Result<TriMesh, GeomError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let err = |message: String| GeomError::Parse { line, message };
        let mut tok = raw.split_whitespace();
        match tok.next() {
            Some("v") => {
                let mut c = [0.0; 3];
                for slot in &mut c {
                    let t = tok.next().ok_or_else(|| err("vertex needs three coordinates".into()))?;
                    *slot = t.parse().map_err(|_| err(format!("bad coordinate {t:?}")))?;
                }
                vertices.push(Point3::from(c));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for t in tok {
                    let head = t.split('/').next().unwrap_or("");
                    let i: i64 = head.parse().map_err(|_| err(format!("bad face index {t:?}")))?;
                    let n = vertices.len() as i64;
                    let resolved = if i > 0 { i - 1 } else { n + i };
                    if i == 0 || resolved < 0 || resolved >= n {
                        return Err(err(format!("face index {i} out of range for {n} vertices")));
                    }
                    poly.push(resolved as usize);
                }
                if poly.len() < 3 {
                    return Err(err("face needs at least three vertices".into()));
                }
                for k in 1..poly.len() - 1 {
                    faces.push([poly[0], poly[k], poly[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, faces)
}

pub fn load_obj(path: impl AsRef<Path>) -> Result<TriMesh, GeomError> {
    parse_obj(&std::fs::read_to_string(path)?)
}

/// Writes vertices with nine significant digits.
pub fn write_obj(mesh: &TriMesh, mut out: impl Write) -> std::io::Result<()> {
    for v in &mesh.vertices {
        writeln!(out, "v {:.8e} {:.8e} {:.8e}", v.x, v.y, v.z)?;
    }
    for f in &mesh.faces {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

pub fn save_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<(), GeomError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_obj(mesh, &mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::mesh::tests::tetrahedron;

    #[test]
    fn tetrahedron_roundtrip() {
        let t = tetrahedron();
        let mut buf = Vec::new();
        write_obj(&t, &mut buf).unwrap();
        let back = parse_obj(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.faces, t.faces);
        for (a, b) in back.vertices.iter().zip(&t.vertices) {
            assert!((a - b).norm() <= 1e-7);
        }
    }

    #[test]
    fn file_roundtrip_keeps_nine_digits() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = tetrahedron();
        t.vertices[1] = Point3::new(0.123456789123, -1234.56789, 1e-12);
        let p = dir.path().join("t.obj");
        save_obj(&t, &p).unwrap();
        let back = load_obj(&p).unwrap();
        for (a, b) in back.vertices.iter().zip(&t.vertices) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() <= 1e-8 * b[k].abs().max(1e-300));
            }
        }
    }

    #[test]
    fn quad_is_fan_triangulated() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n").unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn slash_and_relative_indices() {
        let m = parse_obj("# c\no x\nv 0 0 0\nv 1 0 0\nvn 0 0 1\nv 0 1 0\nf -3/1/1 -2//1 -1\n").unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn bad_indices_are_parse_errors() {
        for text in ["v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -4 1 2\n", "v 0 0 0\nf 1 2 3\n"] {
            assert!(matches!(parse_obj(text), Err(GeomError::Parse { .. })), "{text}");
        }
        assert!(matches!(parse_obj("v 0 zero 0\n"), Err(GeomError::Parse { line: 1, .. })));
    }
}
