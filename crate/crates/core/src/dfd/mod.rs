//! Depth from defocus: recover a disparity map by gradient descent through
//! the soft renderer.

mod loss;
mod optimize;

pub use loss::{hssim, loss, smoothness, LossConfig, LossValue, LossWeights};
pub use optimize::{optimize, AdamConfig, DfdProblem, DfdResult, LossRecord};

use thiserror::Error;

use crate::metrics::MetricError;
use crate::render::RenderError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DfdError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("loss became non-finite at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Render(#[from] RenderError),
}

impl DfdError {
    pub fn code(&self) -> &'static str {
        match self {
            DfdError::ShapeMismatch(_) => "SHAPE_MISMATCH",
            DfdError::InvalidProblem(_) => "INVALID_PROBLEM",
            DfdError::Diverged { .. } => "DIVERGED",
            DfdError::Metric(e) => e.code(),
            DfdError::Render(e) => e.code(),
        }
    }
}
