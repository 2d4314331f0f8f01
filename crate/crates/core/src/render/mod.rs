//! Pinhole rays, emission-absorption quadrature with optional sample warping, image output and
//! image-fidelity metrics.

mod camera;
mod image;
mod integrate;
mod metrics;

pub use camera::{Camera, Ray};
pub use image::Image;
pub use integrate::{integrate_ray, render_image, SampleSpec, SpaceWarp, DEFAULT_SAMPLES};
pub use metrics::{psnr, ssim};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid sampler: {0}")]
    InvalidSampler(String),
    #[error("pixel ({x}, {y}) outside a {width}x{height} image")]
    PixelOutOfRange { x: usize, y: usize, width: usize, height: usize },
    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("image error: {0}")]
    Image(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
