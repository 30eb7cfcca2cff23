//! Occlusion-aware layered bokeh rendering with an analytic backward pass.

pub mod buffer;
pub mod cli;
pub mod dfd;
pub mod fixtures;
pub mod io;
pub mod kernels;
pub mod metrics;
pub mod oracle;
pub mod render;
pub mod scene;

pub use buffer::ImageBuffer;
pub use scene::{
    validate_scene, ApertureKernel, KernelMask, Layer, LayeredScene, LensConfig, RadiusPolicy,
    RenderMode, SceneError, SoftParams,
};
