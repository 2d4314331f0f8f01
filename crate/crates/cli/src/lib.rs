//! Command line workflow (scene generation through evaluation) and the HTTP editing service.

pub mod commands;
pub mod service;

use nerfdeform::pipeline::{PipelineError, EXIT_NUMERICAL, EXIT_VALIDATION};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Pipeline(e) => e.exit_code(),
            Self::Usage(_) => EXIT_VALIDATION,
        }
    }

    pub fn is_numerical(&self) -> bool {
        self.exit_code() == EXIT_NUMERICAL
    }
}

macro_rules! impl_from_core {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Pipeline(e.into())
            }
        })*
    };
}

impl_from_core!(
    nerfdeform::field::FieldError,
    nerfdeform::geom::GeomError,
    nerfdeform::arap::ArapError,
    nerfdeform::tetproxy::TetError,
    nerfdeform::bend::BendError,
    nerfdeform::render::RenderError,
    std::io::Error,
    serde_json::Error
);

/// Caps rayon's global pool at `NS_THREADS` when set. Returns the cap.
pub fn configure_threads() -> Result<Option<usize>, CliError> {
    let Ok(raw) = std::env::var("NS_THREADS") else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("NS_THREADS must be a positive integer, got {raw:?}")))?;
    // A pool built earlier in the process keeps its size; that only happens in tests.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(Some(n))
}
