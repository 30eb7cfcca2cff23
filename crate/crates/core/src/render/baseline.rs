//! Occlusion-unaware reference renderer used as the ablation baseline.

use super::{alpha_over, render_unchecked, RenderError, RenderOptions, RenderOutput};
use crate::buffer::ImageBuffer;
use crate::scene::{validate_scene, Layer, LayeredScene, LensConfig};

/// Collapses the layers into one opaque RGBD layer: alpha-over color, and
/// at each pixel the disparity of the frontmost layer with alpha >= 0.5.
pub fn flatten_layers(scene: &LayeredScene) -> Layer {
    let (w, h) = (scene.width(), scene.height());
    let color = alpha_over(scene);
    let disparity = ImageBuffer::from_fn(w, h, 1, |x, y, _| {
        let front = scene
            .layers
            .iter()
            .find(|l| l.alpha.get(x, y, 0) >= 0.5)
            .unwrap_or_else(|| scene.layers.last().expect("non-empty scene"));
        front.disparity.get(x, y, 0)
    });
    Layer::opaque(color, disparity)
}

/// Plain depth-dependent scatter of the flattened image with no occlusion
/// handling, at the window radius the layered render would use.
pub fn render_naive(scene: &LayeredScene, lens: &LensConfig) -> Result<RenderOutput, RenderError> {
    validate_scene(scene)?;
    lens.validate()?;
    let radius = lens.resolve_radius(scene);
    let flat = LayeredScene::new(vec![flatten_layers(scene)]);
    Ok(render_unchecked(
        &flat,
        lens,
        radius,
        RenderOptions {
            in_layer_occlusion: false,
            region: None,
        },
    ))
}
