//! Physically based reference: a biconvex thin-lens ray tracer over
//! textured billboards, and the benchmark built on it.

mod benchmark;
mod lens;
mod recipe;
mod tracer;

pub use benchmark::{
    evaluate_dataset, generate_benchmark, layered_equivalent, BenchmarkReport, SceneScore,
    ALL_IN_FOCUS_FILE, DEPTH_FILE, GROUND_TRUTH_PFM_FILE, PROVENANCE_FILE,
};
pub use lens::{
    blur_scale, coc_from_conjugates, coc_radius_physical, conjugate_distance, disparity_at,
    effective_focal_length, focal_length, focus_distance, glass_thickness, image_plane_for,
    lens_thickness, pixel_pitch, principal_offset, sensor_half_width, OracleLensConfig,
};
pub use recipe::{LayerRecipe, Recipe, SceneRecipe, ShapeSpec, TextureSpec};
pub use tracer::{pinhole_image, trace_image, trace_pixel, Billboard, BillboardScene, Camera, Ray};

use thiserror::Error;

use crate::io::IoError;
use crate::metrics::MetricError;
use crate::render::RenderError;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid lens geometry: {0}")]
    Geometry(String),
    #[error("not focusable: {0}")]
    NotFocusable(String),
    #[error("invalid billboard scene: {0}")]
    InvalidScene(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

impl OracleError {
    pub fn code(&self) -> &'static str {
        match self {
            OracleError::Geometry(_) => "GEOMETRY_INVALID",
            OracleError::NotFocusable(_) => "NOT_FOCUSABLE",
            OracleError::InvalidScene(_) => "SCENE_INVALID",
            OracleError::Io(e) => e.code(),
            OracleError::Render(e) => e.code(),
            OracleError::Metric(e) => e.code(),
        }
    }
}
