#![allow(dead_code)]

use nalgebra::{Isometry3, Point3, Rotation3, Translation3, Unit, UnitQuaternion, Vector3};

use nerfdeform::arap::HandleSet;
use nerfdeform::field::{generate_field, Aabb, ColorFn, Primitive, RadianceFieldGrid, SceneSpec};
use nerfdeform::geom::{marching_cubes_clamped, IsoChannel, TriMesh, EDIT_EDGE_CLAMP};
use nerfdeform::pipeline::{build_proxy, resample_field, EditSession};
use nerfdeform::render::Camera;

pub const BOUNDS: f64 = 1.5;
pub const FIELD_RES: usize = 96;
/// Lattice the surface is extracted from; coarser than the field so the tets outnumber it.
pub const EXTRACT_RES: usize = 28;

pub fn capsule_scene() -> SceneSpec {
    SceneSpec::new(vec![Primitive::Capsule {
        a: Point3::new(-0.5, 0.0, 0.0),
        b: Point3::new(0.5, 0.0, 0.0),
        radius: 0.3,
        color: ColorFn::Gradient {
            from: Point3::new(-0.8, 0.0, 0.0),
            to: Point3::new(0.8, 0.0, 0.0),
            rgb_from: [0.9, 0.2, 0.1],
            rgb_to: [0.1, 0.5, 0.9],
        },
    }])
}

/// Upper arm along -x, forearm along +x, jointed at the origin.
pub fn arm_scene() -> SceneSpec {
    SceneSpec::new(vec![
        Primitive::Capsule {
            a: Point3::new(-1.0, 0.0, 0.0),
            b: Point3::origin(),
            radius: 0.25,
            color: ColorFn::Constant { rgb: [0.85, 0.35, 0.25] },
        },
        Primitive::Capsule {
            a: Point3::origin(),
            b: Point3::new(1.0, 0.0, 0.0),
            radius: 0.25,
            color: ColorFn::Gradient {
                from: Point3::origin(),
                to: Point3::new(1.0, 0.0, 0.0),
                rgb_from: [0.2, 0.4, 0.9],
                rgb_to: [0.95, 0.9, 0.2],
            },
        },
    ])
}

/// Forearm rotation of the articulated edit: 45 degrees about z through the joint.
pub fn elbow() -> Isometry3<f64> {
    Isometry3::from_parts(Translation3::identity(), UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_4))
}

/// Rigid edit of the rigid-oracle check: 30 degrees about a tilted axis plus a shift.
pub fn rigid_edit() -> Isometry3<f64> {
    let axis = Unit::new_normalize(Vector3::new(0.2, 0.3, 1.0));
    Isometry3::from_parts(Translation3::new(0.1, -0.05, 0.08), UnitQuaternion::from_axis_angle(&axis, 30f64.to_radians()))
}

pub fn field_for(spec: &SceneSpec) -> RadianceFieldGrid {
    generate_field(spec, [FIELD_RES; 3], Aabb::cube(BOUNDS)).unwrap()
}

pub fn orbit_cameras(dist: f64) -> Vec<Camera> {
    (0..6)
        .map(|k| {
            let a = k as f64 * std::f64::consts::TAU / 6.0;
            Camera::look_at(Point3::new(dist * a.cos(), 0.6, dist * a.sin()), Point3::origin(), 0.8, 8, 8)
        })
        .collect()
}

pub fn view(size: usize) -> Camera {
    Camera::look_at(Point3::new(0.4, 0.9, 3.8), Point3::new(0.0, 0.1, 0.0), 0.75, size, size)
}

pub fn extract(field: &RadianceFieldGrid) -> TriMesh {
    let coarse = resample_field(field, [EXTRACT_RES; 3]).unwrap();
    marching_cubes_clamped(&coarse, 0.0, IsoChannel::Sdf, EDIT_EDGE_CLAMP).unwrap()
}

pub fn session_for(field: &RadianceFieldGrid) -> EditSession {
    let mesh = extract(field);
    let proxy = build_proxy(&mesh, &orbit_cameras(3.5), None, None).unwrap();
    EditSession::new(mesh, proxy.tet, proxy.embedding).unwrap()
}

/// Forearm vertices follow the elbow rotation, upper-arm vertices stay; the band around the
/// joint is free.
pub fn elbow_handles(mesh: &TriMesh) -> HandleSet {
    let r = elbow();
    HandleSet::from_pairs(mesh.vertices.iter().enumerate().filter_map(|(i, p)| {
        if p.x > 0.3 {
            Some((i, r * p))
        } else if p.x < -0.3 {
            Some((i, *p))
        } else {
            None
        }
    }))
}

pub fn rotation_matrix(iso: &Isometry3<f64>) -> Rotation3<f64> {
    iso.rotation.to_rotation_matrix()
}
