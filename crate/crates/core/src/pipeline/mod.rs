//! End-to-end plumbing shared by the command line and the editing service: proxy construction,
//! edit sessions, render snapshots and the artifact formats that pass between stages.

mod proxy;
mod session;

pub use proxy::{build_proxy, load_cameras, resample_field, Proxy};
pub use session::{DeformMode, DeformReport, EditSession, RenderSnapshot};

use thiserror::Error;

use crate::arap::ArapError;
use crate::bend::BendError;
use crate::field::FieldError;
use crate::geom::GeomError;
use crate::render::RenderError;
use crate::tetproxy::TetError;

/// Process exit codes of the command line tool.
pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Arap(#[from] ArapError),
    #[error(transparent)]
    Tet(#[from] TetError),
    #[error(transparent)]
    Bend(#[from] BendError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Arap(e) if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_VALIDATION,
        }
    }
}
