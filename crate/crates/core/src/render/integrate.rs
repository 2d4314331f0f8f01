use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Camera, Image, Ray, RenderError};
use crate::field::RadianceFieldGrid;

pub const DEFAULT_SAMPLES: usize = 256;

/// Rays stop accumulating once transmittance falls below this; the dropped contribution is
/// bounded by it.
const MIN_TRANSMITTANCE: f64 = 1e-12;

fn default_version() -> u32 {
    1
}

/// Per-ray sampling: `samples` stratified positions in `[near, far]`, bin midpoints unless
/// `jitter` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    #[serde(default = "default_version")]
    pub version: u32,
    pub samples: usize,
    #[serde(default)]
    pub jitter: bool,
    #[serde(default)]
    pub seed: u64,
    /// Composite over white instead of black.
    #[serde(default)]
    pub white_background: bool,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self { version: 1, samples: DEFAULT_SAMPLES, jitter: false, seed: 0, white_background: false }
    }
}

impl SampleSpec {
    pub fn new(samples: usize) -> Self {
        Self { samples, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        if self.samples < 2 {
            return Err(RenderError::InvalidSampler(format!("need at least 2 samples, got {}", self.samples)));
        }
        Ok(())
    }
}

/// Maps a sample point in the edited scene to the offset at which the unedited field is
/// queried. `None` marks space that the edit vacated: the sample contributes no density.
pub trait SpaceWarp: Sync {
    fn warp(&self, p: &Point3<f64>) -> Option<Vector3<f64>>;
}

impl<F> SpaceWarp for F
where
    F: Fn(&Point3<f64>) -> Vector3<f64> + Sync,
{
    fn warp(&self, p: &Point3<f64>) -> Option<Vector3<f64>> {
        Some(self(p))
    }
}

/// Emission-absorption quadrature along `ray` over `[near, far]`, querying the field at
/// `p + warp(p)` for every sample point `p`. Result clamped to `[0, 1]`.
pub fn integrate_ray(
    field: &RadianceFieldGrid,
    ray: &Ray,
    (near, far): (f64, f64),
    sampler: &SampleSpec,
    warp: Option<&dyn SpaceWarp>,
) -> [f64; 3] {
    trace(field, ray, near, far, sampler, warp, 0)
}

fn trace(
    field: &RadianceFieldGrid,
    ray: &Ray,
    near: f64,
    far: f64,
    sampler: &SampleSpec,
    warp: Option<&dyn SpaceWarp>,
    stream: u64,
) -> [f64; 3] {
    let n = sampler.samples;
    let bin = (far - near) / n as f64;
    let mut rng = sampler.jitter.then(|| {
        let mut r = ChaCha8Rng::seed_from_u64(sampler.seed);
        r.set_stream(stream);
        r
    });
    let mut offsets = vec![0.5; n];
    if let Some(rng) = rng.as_mut() {
        offsets.iter_mut().for_each(|o| *o = rng.random::<f64>());
    }
    let t_of = |i: usize| near + (i as f64 + offsets[i]) * bin;

    let mut transmittance = 1.0;
    let mut rgb = [0.0; 3];
    for i in 0..n {
        let t = t_of(i);
        let delta = if i + 1 < n { t_of(i + 1) - t } else { far - t };
        let p = ray.at(t);
        let query = match warp {
            None => Some(p),
            Some(w) => w.warp(&p).map(|d| p + d),
        };
        let Some(q) = query else { continue };
        let (sigma, c) = field.sample(&q);
        if sigma <= 0.0 {
            continue;
        }
        let step = (-sigma * delta).exp();
        let weight = transmittance * (1.0 - step);
        rgb[0] += weight * c[0];
        rgb[1] += weight * c[1];
        rgb[2] += weight * c[2];
        transmittance *= step;
        if transmittance < MIN_TRANSMITTANCE {
            break;
        }
    }
    if sampler.white_background {
        rgb.iter_mut().for_each(|v| *v += transmittance);
    }
    rgb.map(|v| v.clamp(0.0, 1.0))
}

/// Renders every pixel; rows are processed in parallel and each pixel owns its random stream,
/// so the result does not depend on thread count or scheduling.
pub fn render_image(
    field: &RadianceFieldGrid,
    camera: &Camera,
    sampler: &SampleSpec,
    warp: Option<&dyn SpaceWarp>,
) -> Result<Image, RenderError> {
    camera.validate()?;
    sampler.validate()?;
    let (w, h) = (camera.width, camera.height);
    let mut pixels = vec![[0.0; 3]; w * h];
    pixels.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, px) in row.iter_mut().enumerate() {
            let ray = camera.ray_unchecked(x, y);
            *px = trace(field, &ray, camera.near, camera.far, sampler, warp, (y * w + x) as u64);
        }
    });
    Ok(Image::from_pixels(w, h, pixels))
}
