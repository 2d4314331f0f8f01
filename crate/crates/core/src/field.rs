//! Dense voxel radiance field: density and RGB color on a regular lattice, plus an optional
//! signed-distance channel used for isosurfacing.
//!
//! Samples live on the lattice nodes `min + i * (max - min) / (dims - 1)`, so the first and
//! last nodes of each axis sit exactly on the domain faces. Queries outside the domain return
//! zero density and black.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Isometry3, Matrix3, Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FIELD_MAGIC: &[u8; 4] = b"NSF1";
pub const FIELD_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 12 + 48 + 1;

/// Default density scale `k` (per unit length).
pub const DEFAULT_DENSITY_SCALE: f64 = 40.0;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("grid dimensions must each be at least 2, got {0:?}")]
    InvalidDims([usize; 3]),
    #[error("degenerate bounds: min {min:?} must be strictly below max {max:?}")]
    DegenerateBounds { min: [f64; 3], max: [f64; 3] },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("primitive {index} (with falloff margin) is not enclosed by the field bounds")]
    PrimitiveOutOfBounds { index: usize },
    #[error("invalid field data: {0}")]
    InvalidData(String),
    #[error("not a field file: {0}")]
    Format(String),
    #[error("payload size mismatch: expected {expected} bytes, found {actual}")]
    PayloadSize { expected: usize, actual: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Axis-aligned box in world units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn new(min: Point3<f64>, max: Point3<f64>) -> Self {
        Self { min, max }
    }

    pub fn cube(half: f64) -> Self {
        Self::new(Point3::new(-half, -half, -half), Point3::new(half, half, half))
    }

    pub fn empty() -> Self {
        Self::new(
            Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        )
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3<f64>>) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Point3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb::new(self.min.inf(&other.min), self.max.sup(&other.max))
    }

    pub fn padded(&self, pad: f64) -> Aabb {
        let d = Vector3::repeat(pad);
        Aabb::new(self.min - d, self.max + d)
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|a| self.min[a] < self.max[a])
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        self.contains(&other.min) && self.contains(&other.max)
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }
}

/// Dense grid radiance field. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RadianceFieldGrid {
    dims: [usize; 3],
    bounds: Aabb,
    density: Vec<f32>,
    color: Vec<[f32; 3]>,
    sdf: Option<Vec<f32>>,
}

impl RadianceFieldGrid {
    /// Builds a field from raw arrays laid out row-major with x fastest.
    pub fn new(
        dims: [usize; 3],
        bounds: Aabb,
        density: Vec<f32>,
        color: Vec<[f32; 3]>,
        sdf: Option<Vec<f32>>,
    ) -> Result<Self, FieldError> {
        check_grid(dims, &bounds)?;
        let n = dims[0] * dims[1] * dims[2];
        if density.len() != n || color.len() != n || sdf.as_ref().is_some_and(|s| s.len() != n) {
            return Err(FieldError::InvalidData(format!(
                "array lengths do not match {n} voxels"
            )));
        }
        if let Some(i) = density.iter().position(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(FieldError::InvalidData(format!("density at voxel {i} is negative or non-finite")));
        }
        if let Some(i) = color
            .iter()
            .position(|c| c.iter().any(|v| !(0.0..=1.0).contains(v)))
        {
            return Err(FieldError::InvalidData(format!("color at voxel {i} outside [0, 1]")));
        }
        Ok(Self { dims, bounds, density, color, sdf })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn density(&self) -> &[f32] {
        &self.density
    }

    pub fn color(&self) -> &[[f32; 3]] {
        &self.color
    }

    pub fn sdf(&self) -> Option<&[f32]> {
        self.sdf.as_deref()
    }

    pub fn num_voxels(&self) -> usize {
        self.density.len()
    }

    /// Distance between adjacent lattice nodes along each axis.
    pub fn spacing(&self) -> Vector3<f64> {
        let e = self.bounds.extent();
        Vector3::new(
            e.x / (self.dims[0] - 1) as f64,
            e.y / (self.dims[1] - 1) as f64,
            e.z / (self.dims[2] - 1) as f64,
        )
    }

    pub fn voxel_diagonal(&self) -> f64 {
        self.spacing().norm()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Point3<f64> {
        node_position(&self.bounds, self.dims, i, j, k)
    }

    /// Trilinear sample of density and color. Outside the bounds the field is empty.
    pub fn sample(&self, p: &Point3<f64>) -> (f64, [f64; 3]) {
        let Some((base, f)) = self.cell_of(p) else {
            return (0.0, [0.0; 3]);
        };
        let [nx, ny, _] = self.dims;
        let w = trilinear_weights(f);
        let mut sigma = 0.0;
        let mut rgb = [0.0; 3];
        for (c, wc) in w.iter().enumerate() {
            let idx = base + (c & 1) + ((c >> 1) & 1) * nx + (c >> 2) * nx * ny;
            sigma += wc * self.density[idx] as f64;
            let col = &self.color[idx];
            rgb[0] += wc * col[0] as f64;
            rgb[1] += wc * col[1] as f64;
            rgb[2] += wc * col[2] as f64;
        }
        (sigma, rgb)
    }

    /// Trilinear sample of density only.
    pub fn sample_density(&self, p: &Point3<f64>) -> f64 {
        self.sample_channel(&self.density, p)
    }

    /// Trilinear sample of the sdf channel, if present. Returns `None` outside the bounds.
    pub fn sample_sdf(&self, p: &Point3<f64>) -> Option<f64> {
        let sdf = self.sdf.as_ref()?;
        self.cell_of(p)?;
        Some(self.sample_channel(sdf, p))
    }

    fn sample_channel(&self, channel: &[f32], p: &Point3<f64>) -> f64 {
        let Some((base, f)) = self.cell_of(p) else {
            return 0.0;
        };
        let [nx, ny, _] = self.dims;
        trilinear_weights(f)
            .iter()
            .enumerate()
            .map(|(c, wc)| {
                let idx = base + (c & 1) + ((c >> 1) & 1) * nx + (c >> 2) * nx * ny;
                wc * channel[idx] as f64
            })
            .sum()
    }

    /// Base node index of the cell containing `p` and the local coordinates inside it.
    fn cell_of(&self, p: &Point3<f64>) -> Option<(usize, [f64; 3])> {
        if !self.bounds.contains(p) {
            return None;
        }
        let mut base = [0usize; 3];
        let mut f = [0.0; 3];
        for a in 0..3 {
            let n = self.dims[a];
            let g = (p[a] - self.bounds.min[a]) / (self.bounds.max[a] - self.bounds.min[a])
                * (n - 1) as f64;
            let i = (g.floor().max(0.0) as usize).min(n - 2);
            base[a] = i;
            f[a] = g - i as f64;
        }
        Some((self.index(base[0], base[1], base[2]), f))
    }

    /// Writes the little-endian binary field format.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FieldError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&self.to_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FieldError> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.num_voxels();
        let mut out = Vec::with_capacity(HEADER_LEN + n * 4 * (4 + self.sdf.is_some() as usize));
        out.extend_from_slice(FIELD_MAGIC);
        out.extend_from_slice(&FIELD_VERSION.to_le_bytes());
        for d in self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in self.bounds.min.iter().chain(self.bounds.max.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(self.sdf.is_some() as u8);
        for d in &self.density {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for c in &self.color {
            for v in c {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        if let Some(sdf) = &self.sdf {
            for v in sdf {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FieldError> {
        if bytes.len() < HEADER_LEN {
            if bytes.len() >= 4 && &bytes[..4] != FIELD_MAGIC {
                return Err(FieldError::Format("bad magic bytes".into()));
            }
            return Err(FieldError::PayloadSize { expected: HEADER_LEN, actual: bytes.len() });
        }
        if &bytes[..4] != FIELD_MAGIC {
            return Err(FieldError::Format("bad magic bytes".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != FIELD_VERSION {
            return Err(FieldError::Format(format!("unsupported version {version}")));
        }
        let dims = [u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize];
        let bounds = Aabb::new(
            Point3::new(f64_at(20), f64_at(28), f64_at(36)),
            Point3::new(f64_at(44), f64_at(52), f64_at(60)),
        );
        let flags = bytes[68];
        let has_sdf = flags & 1 != 0;
        check_grid(dims, &bounds)?;
        let n = dims[0] * dims[1] * dims[2];
        let expected = HEADER_LEN + n * 4 * (4 + has_sdf as usize);
        if bytes.len() != expected {
            return Err(FieldError::PayloadSize { expected, actual: bytes.len() });
        }
        let floats: Vec<f32> = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let density = floats[..n].to_vec();
        let color = floats[n..4 * n].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let sdf = has_sdf.then(|| floats[4 * n..].to_vec());
        Self::new(dims, bounds, density, color, sdf)
    }
}

fn check_grid(dims: [usize; 3], bounds: &Aabb) -> Result<(), FieldError> {
    if dims.iter().any(|&d| d < 2) {
        return Err(FieldError::InvalidDims(dims));
    }
    if !bounds.is_valid() || !(bounds.min.iter().chain(bounds.max.iter()).all(|v| v.is_finite())) {
        return Err(FieldError::DegenerateBounds {
            min: bounds.min.coords.into(),
            max: bounds.max.coords.into(),
        });
    }
    Ok(())
}

fn node_position(bounds: &Aabb, dims: [usize; 3], i: usize, j: usize, k: usize) -> Point3<f64> {
    let t = |a: usize, n: usize| {
        // Exact endpoints on the last node.
        if n == dims[a] - 1 {
            bounds.max[a]
        } else {
            bounds.min[a] + (bounds.max[a] - bounds.min[a]) * n as f64 / (dims[a] - 1) as f64
        }
    };
    Point3::new(t(0, i), t(1, j), t(2, k))
}

#[inline]
fn trilinear_weights(f: [f64; 3]) -> [f64; 8] {
    let [fx, fy, fz] = f;
    let (gx, gy, gz) = (1.0 - fx, 1.0 - fy, 1.0 - fz);
    [
        gx * gy * gz,
        fx * gy * gz,
        gx * fy * gz,
        fx * fy * gz,
        gx * gy * fz,
        fx * gy * fz,
        gx * fy * fz,
        fx * fy * fz,
    ]
}

/// Color assigned to a primitive, evaluated at world points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColorFn {
    Constant { rgb: [f64; 3] },
    /// Linear ramp between two world points, clamped outside the segment.
    Gradient {
        from: Point3<f64>,
        to: Point3<f64>,
        rgb_from: [f64; 3],
        rgb_to: [f64; 3],
    },
}

impl ColorFn {
    pub fn eval(&self, p: &Point3<f64>) -> [f64; 3] {
        match self {
            ColorFn::Constant { rgb } => rgb.map(|c| c.clamp(0.0, 1.0)),
            ColorFn::Gradient { from, to, rgb_from, rgb_to } => {
                let axis = to - from;
                let t = ((p - from).dot(&axis) / axis.norm_squared()).clamp(0.0, 1.0);
                std::array::from_fn(|c| (rgb_from[c] + t * (rgb_to[c] - rgb_from[c])).clamp(0.0, 1.0))
            }
        }
    }

    fn transformed(&self, iso: &Isometry3<f64>) -> ColorFn {
        match self {
            ColorFn::Constant { .. } => self.clone(),
            ColorFn::Gradient { from, to, rgb_from, rgb_to } => ColorFn::Gradient {
                from: iso * from,
                to: iso * to,
                rgb_from: *rgb_from,
                rgb_to: *rgb_to,
            },
        }
    }

    fn validate(&self) -> Result<(), String> {
        if let ColorFn::Gradient { from, to, .. } = self {
            if (to - from).norm() == 0.0 {
                return Err("gradient endpoints coincide".into());
            }
        }
        Ok(())
    }
}

/// Analytic primitive. All shapes are combined by union (minimum of signed distances).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Primitive {
    Sphere {
        center: Point3<f64>,
        radius: f64,
        color: ColorFn,
    },
    Box {
        center: Point3<f64>,
        half_extents: Vector3<f64>,
        /// World-from-local rotation; identity when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rotation: Option<Matrix3<f64>>,
        color: ColorFn,
    },
    Capsule {
        a: Point3<f64>,
        b: Point3<f64>,
        radius: f64,
        color: ColorFn,
    },
}

impl Primitive {
    pub fn sdf(&self, p: &Point3<f64>) -> f64 {
        match self {
            Primitive::Sphere { center, radius, .. } => (p - center).norm() - radius,
            Primitive::Box { center, half_extents, rotation, .. } => {
                let d = p - center;
                let local = match rotation {
                    Some(r) => r.transpose() * d,
                    None => d,
                };
                let q = local.abs() - half_extents;
                q.sup(&Vector3::zeros()).norm() + q.max().min(0.0)
            }
            Primitive::Capsule { a, b, radius, .. } => {
                let ab = b - a;
                let ap = p - a;
                let denom = ab.norm_squared();
                let t = if denom > 0.0 { (ap.dot(&ab) / denom).clamp(0.0, 1.0) } else { 0.0 };
                (ap - ab * t).norm() - radius
            }
        }
    }

    pub fn color(&self) -> &ColorFn {
        match self {
            Primitive::Sphere { color, .. }
            | Primitive::Box { color, .. }
            | Primitive::Capsule { color, .. } => color,
        }
    }

    pub fn bounding_box(&self) -> Aabb {
        match self {
            Primitive::Sphere { center, radius, .. } => {
                Aabb::new(*center, *center).padded(*radius)
            }
            Primitive::Box { center, half_extents, rotation, .. } => {
                let r = rotation.unwrap_or_else(Matrix3::identity);
                let ext = r.abs() * half_extents;
                Aabb::new(center - ext, center + ext)
            }
            Primitive::Capsule { a, b, radius, .. } => Aabb::new(a.inf(b), a.sup(b)).padded(*radius),
        }
    }

    /// The primitive moved by a rigid transform.
    pub fn transformed(&self, iso: &Isometry3<f64>) -> Primitive {
        match self {
            Primitive::Sphere { center, radius, color } => Primitive::Sphere {
                center: iso * center,
                radius: *radius,
                color: color.transformed(iso),
            },
            Primitive::Box { center, half_extents, rotation, color } => Primitive::Box {
                center: iso * center,
                half_extents: *half_extents,
                rotation: Some(
                    iso.rotation.to_rotation_matrix().matrix() * rotation.unwrap_or_else(Matrix3::identity),
                ),
                color: color.transformed(iso),
            },
            Primitive::Capsule { a, b, radius, color } => Primitive::Capsule {
                a: iso * a,
                b: iso * b,
                radius: *radius,
                color: color.transformed(iso),
            },
        }
    }

    fn validate(&self) -> Result<(), String> {
        match self {
            Primitive::Sphere { radius, .. } | Primitive::Capsule { radius, .. } if !(*radius > 0.0) => {
                return Err(format!("radius must be positive, got {radius}"));
            }
            Primitive::Box { half_extents, .. } if !half_extents.iter().all(|h| *h > 0.0) => {
                return Err("box half extents must be positive".into());
            }
            _ => {}
        }
        self.color().validate()
    }
}

fn default_version() -> u32 {
    1
}

fn default_density_scale() -> f64 {
    DEFAULT_DENSITY_SCALE
}

/// Analytic scene description turned into a grid by [`generate_field`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(default = "default_version")]
    pub version: u32,
    pub primitives: Vec<Primitive>,
    /// Density inside the shapes, per unit length.
    #[serde(default = "default_density_scale")]
    pub density_scale: f64,
    /// Width of the linear density falloff band. Defaults to two voxel diagonals of the
    /// generated grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub falloff: Option<f64>,
}

impl SceneSpec {
    pub fn new(primitives: Vec<Primitive>) -> Self {
        Self { version: 1, primitives, density_scale: DEFAULT_DENSITY_SCALE, falloff: None }
    }

    pub fn from_json(text: &str) -> Result<Self, FieldError> {
        let spec: SceneSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FieldError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if self.version != 1 {
            return Err(FieldError::InvalidScene(format!("unsupported version {}", self.version)));
        }
        if self.primitives.is_empty() {
            return Err(FieldError::InvalidScene("at least one primitive is required".into()));
        }
        if !(self.density_scale > 0.0) {
            return Err(FieldError::InvalidScene("density_scale must be positive".into()));
        }
        if let Some(w) = self.falloff {
            if !(w > 0.0) {
                return Err(FieldError::InvalidScene("falloff must be positive".into()));
            }
        }
        for (i, p) in self.primitives.iter().enumerate() {
            p.validate().map_err(|e| FieldError::InvalidScene(format!("primitive {i}: {e}")))?;
        }
        Ok(())
    }

    /// Union signed distance and the index of the closest primitive.
    pub fn sdf(&self, p: &Point3<f64>) -> (f64, usize) {
        self.primitives
            .iter()
            .enumerate()
            .map(|(i, prim)| (prim.sdf(p), i))
            .fold((f64::INFINITY, 0), |best, cur| if cur.0 < best.0 { cur } else { best })
    }

    /// The whole scene moved by a rigid transform.
    pub fn transformed(&self, iso: &Isometry3<f64>) -> SceneSpec {
        self.transform_primitives(iso, |_| true)
    }

    /// Moves only the primitives selected by `select`.
    pub fn transform_primitives(&self, iso: &Isometry3<f64>, select: impl Fn(usize) -> bool) -> SceneSpec {
        SceneSpec {
            primitives: self
                .primitives
                .iter()
                .enumerate()
                .map(|(i, p)| if select(i) { p.transformed(iso) } else { p.clone() })
                .collect(),
            ..self.clone()
        }
    }

    pub fn falloff_for(&self, dims: [usize; 3], bounds: &Aabb) -> f64 {
        self.falloff.unwrap_or_else(|| {
            let e = bounds.extent();
            let spacing = Vector3::new(
                e.x / (dims[0] - 1) as f64,
                e.y / (dims[1] - 1) as f64,
                e.z / (dims[2] - 1) as f64,
            );
            2.0 * spacing.norm()
        })
    }
}

/// Density profile: `k * clamp(-sdf / w + 0.5, 0, 1)`.
#[inline]
pub fn density_from_sdf(sdf: f64, k: f64, w: f64) -> f64 {
    k * (-sdf / w + 0.5).clamp(0.0, 1.0)
}

/// Samples an analytic scene onto a grid.
pub fn generate_field(spec: &SceneSpec, dims: [usize; 3], bounds: Aabb) -> Result<RadianceFieldGrid, FieldError> {
    check_grid(dims, &bounds)?;
    spec.validate()?;
    let w = spec.falloff_for(dims, &bounds);
    let k = spec.density_scale;
    for (index, p) in spec.primitives.iter().enumerate() {
        if !bounds.contains_box(&p.bounding_box().padded(w)) {
            return Err(FieldError::PrimitiveOutOfBounds { index });
        }
    }

    let [nx, ny, nz] = dims;
    let slices: Vec<(Vec<f32>, Vec<[f32; 3]>, Vec<f32>)> = (0..nz)
        .into_par_iter()
        .map(|kz| {
            let mut d = Vec::with_capacity(nx * ny);
            let mut c = Vec::with_capacity(nx * ny);
            let mut s = Vec::with_capacity(nx * ny);
            for jy in 0..ny {
                for ix in 0..nx {
                    let x = node_position(&bounds, dims, ix, jy, kz);
                    let (sdf, nearest) = spec.sdf(&x);
                    d.push(density_from_sdf(sdf, k, w) as f32);
                    let rgb = spec.primitives[nearest].color().eval(&x);
                    c.push(rgb.map(|v| v as f32));
                    s.push(sdf as f32);
                }
            }
            (d, c, s)
        })
        .collect();

    let n = nx * ny * nz;
    let mut density = Vec::with_capacity(n);
    let mut color = Vec::with_capacity(n);
    let mut sdf = Vec::with_capacity(n);
    for (d, c, s) in slices {
        density.extend(d);
        color.extend(c);
        sdf.extend(s);
    }
    RadianceFieldGrid::new(dims, bounds, density, color, Some(sdf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sphere_scene(r: f64) -> SceneSpec {
        SceneSpec::new(vec![Primitive::Sphere {
            center: Point3::origin(),
            radius: r,
            color: ColorFn::Constant { rgb: [0.8, 0.4, 0.2] },
        }])
    }

    fn random_field(dims: [usize; 3], seed: u64) -> RadianceFieldGrid {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = dims.iter().product();
        let density = (0..n).map(|_| rng.random_range(0.0..10.0f32)).collect();
        let color = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let sdf = Some((0..n).map(|_| rng.random_range(-1.0..1.0f32)).collect());
        RadianceFieldGrid::new(dims, Aabb::new(Point3::new(-1.0, -0.5, 0.0), Point3::new(1.0, 0.5, 2.0)), density, color, sdf)
            .unwrap()
    }

    #[test]
    fn sphere_center_saturates_to_density_scale() {
        let f = generate_field(&sphere_scene(0.5), [33, 33, 33], Aabb::cube(1.0)).unwrap();
        let (sigma, rgb) = f.sample(&Point3::origin());
        assert_relative_eq!(sigma, DEFAULT_DENSITY_SCALE, epsilon = 1e-5);
        assert_relative_eq!(rgb[0], 0.8, epsilon = 1e-6);
    }

    #[test]
    fn density_vanishes_one_falloff_outside_surface() {
        let w = 0.1;
        assert_eq!(density_from_sdf(w, 40.0, w), 0.0);
        assert_eq!(density_from_sdf(-0.5, 40.0, w), 40.0);
        assert_relative_eq!(density_from_sdf(0.0, 40.0, w), 20.0);
    }

    #[test]
    fn density_monotone_in_negative_sdf_within_band() {
        let (k, w) = (40.0, 0.2);
        let mut prev = -1.0;
        for i in 0..=100 {
            let sdf = w / 2.0 - w * i as f64 / 100.0;
            let d = density_from_sdf(sdf, k, w);
            assert!(d > prev);
            prev = d;
        }
    }

    #[test]
    fn sample_at_node_returns_stored_value() {
        let f = random_field([5, 4, 3], 1);
        let idx = f.index(2, 1, 1);
        let (sigma, rgb) = f.sample(&f.node_position(2, 1, 1));
        assert_eq!(sigma, f.density()[idx] as f64);
        assert_eq!(rgb[1], f.color()[idx][1] as f64);
    }

    #[test]
    fn sample_midpoint_is_average() {
        let f = random_field([5, 4, 3], 2);
        let a = f.node_position(1, 2, 1);
        let b = f.node_position(2, 2, 1);
        let (sigma, _) = f.sample(&nalgebra::center(&a, &b));
        let expected = (f.density()[f.index(1, 2, 1)] as f64 + f.density()[f.index(2, 2, 1)] as f64) / 2.0;
        assert_relative_eq!(sigma, expected, epsilon = 1e-12);
    }

    #[test]
    fn sample_outside_bounds_is_empty() {
        let f = random_field([4, 4, 4], 3);
        assert_eq!(f.sample(&Point3::new(5.0, 0.0, 1.0)), (0.0, [0.0; 3]));
        assert_eq!(f.sample(&Point3::new(0.0, 0.0, -1e-9)), (0.0, [0.0; 3]));
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(
            generate_field(&sphere_scene(0.5), [1, 4, 4], Aabb::cube(1.0)),
            Err(FieldError::InvalidDims(_))
        ));
        let flat = Aabb::new(Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 1.0));
        assert!(matches!(
            generate_field(&sphere_scene(0.5), [4, 4, 4], flat),
            Err(FieldError::DegenerateBounds { .. })
        ));
        assert!(matches!(
            generate_field(&sphere_scene(0.95), [32, 32, 32], Aabb::cube(1.0)),
            Err(FieldError::PrimitiveOutOfBounds { index: 0 })
        ));
    }

    #[test]
    fn scene_validation() {
        let mut s = sphere_scene(0.5);
        s.primitives.clear();
        assert!(s.validate().is_err());
        assert!(sphere_scene(0.0).validate().is_err());
        let mut s = sphere_scene(0.5);
        s.falloff = Some(-1.0);
        assert!(s.validate().is_err());
    }

    #[test]
    fn scene_json_roundtrip_and_defaults() {
        let text = r#"{"primitives":[{"shape":"capsule","a":[0,0,0],"b":[1,0,0],"radius":0.2,
            "color":{"kind":"gradient","from":[0,0,0],"to":[1,0,0],"rgb_from":[1,0,0],"rgb_to":[0,0,1]}}]}"#;
        let spec = SceneSpec::from_json(text).unwrap();
        assert_eq!(spec.version, 1);
        assert_eq!(spec.density_scale, DEFAULT_DENSITY_SCALE);
        let again = SceneSpec::from_json(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(spec, again);
    }

    #[test]
    fn box_sdf_respects_rotation() {
        let r = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), 0.7);
        let b = Primitive::Box {
            center: Point3::new(0.1, 0.2, 0.3),
            half_extents: Vector3::new(0.3, 0.2, 0.1),
            rotation: None,
            color: ColorFn::Constant { rgb: [1.0; 3] },
        };
        let iso = Isometry3::from_parts(Vector3::new(0.5, -0.2, 0.0).into(), r.into());
        let moved = b.transformed(&iso);
        let p = Point3::new(0.35, 0.1, 0.25);
        assert_relative_eq!(moved.sdf(&(iso * p)), b.sdf(&p), epsilon = 1e-12);
    }

    #[test]
    fn save_load_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let f = random_field([6, 5, 4], 7);
        let path = dir.path().join("a.field");
        f.save(&path).unwrap();
        assert_eq!(RadianceFieldGrid::load(&path).unwrap(), f);
    }

    #[test]
    fn truncated_file_is_payload_error() {
        let bytes = random_field([4, 4, 4], 8).to_bytes();
        assert!(matches!(
            RadianceFieldGrid::from_bytes(&bytes[..bytes.len() - 3]),
            Err(FieldError::PayloadSize { .. })
        ));
    }

    #[test]
    fn wrong_magic_is_format_error() {
        let mut bytes = random_field([4, 4, 4], 9).to_bytes();
        bytes[0] = b'X';
        assert!(matches!(RadianceFieldGrid::from_bytes(&bytes), Err(FieldError::Format(_))));
        let mut bytes = random_field([4, 4, 4], 9).to_bytes();
        bytes[4] = 2;
        assert!(matches!(RadianceFieldGrid::from_bytes(&bytes), Err(FieldError::Format(_))));
    }

    fn closed_form_trilinear(f: &RadianceFieldGrid, p: &Point3<f64>) -> f64 {
        // Independent route: locate the cell by scanning node coordinates.
        let sp = f.spacing();
        let mut lo = [0usize; 3];
        for a in 0..3 {
            while lo[a] + 2 < f.dims()[a] && f.bounds().min[a] + (lo[a] + 1) as f64 * sp[a] <= p[a] {
                lo[a] += 1;
            }
        }
        let x0 = f.node_position(lo[0], lo[1], lo[2]);
        let t: Vec<f64> = (0..3).map(|a| (p[a] - x0[a]) / sp[a]).collect();
        let mut acc = 0.0;
        for dz in 0..2 {
            for dy in 0..2 {
                for dx in 0..2 {
                    let w = (if dx == 1 { t[0] } else { 1.0 - t[0] })
                        * (if dy == 1 { t[1] } else { 1.0 - t[1] })
                        * (if dz == 1 { t[2] } else { 1.0 - t[2] });
                    acc += w * f.density()[f.index(lo[0] + dx, lo[1] + dy, lo[2] + dz)] as f64;
                }
            }
        }
        acc
    }

    proptest! {
        #[test]
        fn sample_is_exactly_trilinear(x in -1.0..1.0f64, y in -0.5..0.5f64, z in 0.0..2.0f64) {
            let f = random_field([5, 6, 4], 11);
            let p = Point3::new(x, y, z);
            prop_assert!((f.sample(&p).0 - closed_form_trilinear(&f, &p)).abs() <= 1e-12);
        }

        #[test]
        fn sample_is_continuous_across_cell_faces(j in 1usize..5, y in -0.49..0.49f64, z in 0.01..1.99f64) {
            let f = random_field([6, 5, 4], 12);
            let x = f.node_position(j, 0, 0).x;
            let max = f.density().iter().cloned().fold(0.0f32, f32::max) as f64;
            let a = f.sample_density(&Point3::new(x - 1e-7, y, z));
            let b = f.sample_density(&Point3::new(x + 1e-7, y, z));
            prop_assert!((a - b).abs() <= 1e-5 * max);
        }
    }
}
