use std::path::Path;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::RenderError;

fn default_version() -> u32 {
    1
}

/// Pinhole camera with a right-handed look-at frame. `fov` is the vertical field of view in
/// radians; rays are parameterized over `[near, far]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    #[serde(default = "default_version")]
    pub version: u32,
    pub position: Point3<f64>,
    pub look_at: Point3<f64>,
    pub up: Vector3<f64>,
    pub fov: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Point3<f64>,
    /// Unit length.
    pub direction: Vector3<f64>,
}

impl Ray {
    pub fn at(&self, t: f64) -> Point3<f64> {
        self.origin + self.direction * t
    }
}

impl Camera {
    pub fn look_at(position: Point3<f64>, look_at: Point3<f64>, fov: f64, width: usize, height: usize) -> Self {
        let dist = (look_at - position).norm();
        Self {
            version: 1,
            position,
            look_at,
            up: Vector3::y(),
            fov,
            width,
            height,
            near: (dist * 0.25).max(1e-3),
            far: dist * 1.75,
        }
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |m: &str| Err(RenderError::InvalidCamera(m.into()));
        if self.version != 1 {
            return bad("unsupported version");
        }
        if (self.look_at - self.position).norm() == 0.0 {
            return bad("position and look_at coincide");
        }
        if !(self.fov > 0.0 && self.fov < std::f64::consts::PI) {
            return bad("fov must lie in (0, pi)");
        }
        if !(self.near < self.far) || self.near < 0.0 {
            return bad("need 0 <= near < far");
        }
        if self.width == 0 || self.height == 0 {
            return bad("image must be at least 1x1");
        }
        if self.up.norm() == 0.0 || self.up.cross(&(self.look_at - self.position)).norm() == 0.0 {
            return bad("up must be non-zero and not parallel to the view axis");
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, RenderError> {
        let cam: Camera = serde_json::from_str(text)?;
        cam.validate()?;
        Ok(cam)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RenderError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Orthonormal (right, up, forward) frame.
    pub fn basis(&self) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let forward = (self.look_at - self.position).normalize();
        let right = forward.cross(&self.up).normalize();
        let up = right.cross(&forward);
        (right, up, forward)
    }

    /// Ray through the center of pixel `(px, py)`; `py` grows downward.
    pub fn generate_ray(&self, px: usize, py: usize) -> Result<Ray, RenderError> {
        if px >= self.width || py >= self.height {
            return Err(RenderError::PixelOutOfRange { x: px, y: py, width: self.width, height: self.height });
        }
        Ok(self.ray_unchecked(px, py))
    }

    pub(crate) fn ray_unchecked(&self, px: usize, py: usize) -> Ray {
        let (right, up, forward) = self.basis();
        let tan = (self.fov / 2.0).tan();
        let aspect = self.width as f64 / self.height as f64;
        let sx = ((px as f64 + 0.5) / self.width as f64 * 2.0 - 1.0) * tan * aspect;
        let sy = (1.0 - (py as f64 + 0.5) / self.height as f64 * 2.0) * tan;
        Ray { origin: self.position, direction: (forward + right * sx + up * sy).normalize() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam(fov: f64, w: usize, h: usize) -> Camera {
        Camera::look_at(Point3::new(1.0, 2.0, 5.0), Point3::new(0.0, 0.5, 0.0), fov, w, h)
    }

    #[test]
    fn center_pixel_is_optical_axis() {
        let c = cam(0.8, 33, 21);
        let r = c.generate_ray(16, 10).unwrap();
        let axis = (c.look_at - c.position).normalize();
        assert!((r.direction - axis).norm() <= 1e-12);
        assert!((r.direction.norm() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn corners_are_symmetric_about_axis() {
        let c = cam(0.9, 16, 10);
        let axis = (c.look_at - c.position).normalize();
        let (right, up, _) = c.basis();
        let tl = c.generate_ray(0, 0).unwrap().direction;
        let br = c.generate_ray(15, 9).unwrap().direction;
        let tr = c.generate_ray(15, 0).unwrap().direction;
        assert!((tl.dot(&axis) - br.dot(&axis)).abs() <= 1e-12);
        assert!((tl.dot(&right) + br.dot(&right)).abs() <= 1e-12);
        assert!((tl.dot(&up) + br.dot(&up)).abs() <= 1e-12);
        assert!((tl.dot(&up) - tr.dot(&up)).abs() <= 1e-12);
        assert!(tl.dot(&up) > 0.0 && tl.dot(&right) < 0.0);
    }

    #[test]
    fn narrow_fov_collapses_to_axis() {
        let c = cam(1e-9, 64, 48);
        let axis = (c.look_at - c.position).normalize();
        for (x, y) in [(0, 0), (63, 47), (10, 40)] {
            assert!((c.generate_ray(x, y).unwrap().direction - axis).norm() <= 1e-6);
        }
    }

    #[test]
    fn out_of_range_pixel() {
        assert!(matches!(cam(0.5, 4, 4).generate_ray(4, 0), Err(RenderError::PixelOutOfRange { .. })));
    }

    #[test]
    fn validation() {
        let mut c = cam(0.5, 4, 4);
        assert!(c.validate().is_ok());
        c.fov = std::f64::consts::PI;
        assert!(c.validate().is_err());
        let mut c = cam(0.5, 4, 4);
        c.look_at = c.position;
        assert!(c.validate().is_err());
        let mut c = cam(0.5, 4, 4);
        c.near = c.far;
        assert!(c.validate().is_err());
        let json = serde_json::to_string(&cam(0.5, 4, 4)).unwrap();
        assert_eq!(Camera::from_json(&json).unwrap(), cam(0.5, 4, 4));
    }
}
