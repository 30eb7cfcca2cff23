//! Layered scene model and lens parameters shared by every other module.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buffer::ImageBuffer;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("alpha out of range in layer {layer} at ({x}, {y}): {value}")]
    AlphaOutOfRange {
        layer: usize,
        x: usize,
        y: usize,
        value: f64,
    },
    #[error("color out of range in layer {layer} at ({x}, {y}): {value}")]
    ColorOutOfRange {
        layer: usize,
        x: usize,
        y: usize,
        value: f64,
    },
    #[error("backmost layer is not opaque at ({x}, {y}): alpha {value}")]
    BackLayerNotOpaque { x: usize, y: usize, value: f64 },
    #[error("non-finite {buffer} value in layer {layer} at ({x}, {y})")]
    NonfiniteValue {
        layer: usize,
        buffer: &'static str,
        x: usize,
        y: usize,
    },
    #[error("scene has no layers")]
    EmptyScene,
    #[error("invalid lens: {0}")]
    InvalidLens(String),
}

impl SceneError {
    pub fn code(&self) -> &'static str {
        match self {
            SceneError::DimensionMismatch(_) => "DIMENSION_MISMATCH",
            SceneError::AlphaOutOfRange { .. } => "ALPHA_OUT_OF_RANGE",
            SceneError::ColorOutOfRange { .. } => "COLOR_OUT_OF_RANGE",
            SceneError::BackLayerNotOpaque { .. } => "BACK_LAYER_NOT_OPAQUE",
            SceneError::NonfiniteValue { .. } => "NONFINITE_VALUE",
            SceneError::EmptyScene => "EMPTY_SCENE",
            SceneError::InvalidLens(_) => "INVALID_LENS",
        }
    }
}

/// One depth layer: straight (non-premultiplied) color, coverage and a dense
/// disparity map in inverse-depth units.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub color: ImageBuffer,
    pub alpha: ImageBuffer,
    pub disparity: ImageBuffer,
}

impl Layer {
    pub fn new(color: ImageBuffer, alpha: ImageBuffer, disparity: ImageBuffer) -> Self {
        Self {
            color,
            alpha,
            disparity,
        }
    }

    /// A fully opaque layer, as used for the backmost layer.
    pub fn opaque(color: ImageBuffer, disparity: ImageBuffer) -> Self {
        let alpha = ImageBuffer::filled(color.width(), color.height(), 1, 1.0);
        Self::new(color, alpha, disparity)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.color.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.color.height()
    }
}

/// Layers ordered front to back; `layers[0]` is the frontmost.
#[derive(Clone, Debug, PartialEq)]
pub struct LayeredScene {
    pub layers: Vec<Layer>,
}

impl LayeredScene {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn width(&self) -> usize {
        self.layers.first().map_or(0, Layer::width)
    }

    pub fn height(&self) -> usize {
        self.layers.first().map_or(0, Layer::height)
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Largest `|d - focus|` over every layer.
    pub fn max_abs_relative_disparity(&self, focus_disparity: f64) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.disparity.data().iter())
            .fold(0.0_f64, |m, &d| m.max((d - focus_disparity).abs()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RenderMode {
    /// Exact indicator functions; not differentiable.
    Hard,
    /// Smooth surrogates; required by the backward pass.
    #[default]
    Soft,
}

/// Coefficients of the smooth occlusion and scatter surrogates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoftParams {
    /// Width of the focal-plane bump `exp(-k d^2)`.
    pub occ_focal_sharpness: f64,
    /// Slope of the depth-order soft step.
    pub occ_step_sharpness: f64,
    /// Shift of the depth-order soft step, in disparity units.
    pub occ_step_offset: f64,
    /// Slope of the CoC-boundary sigmoid, per pixel.
    pub scat_sharpness: f64,
    pub scat_gain: f64,
    /// Pixels added to the CoC radius before the sigmoid.
    pub scat_margin: f64,
    /// Floor on soft-step derivative magnitudes in the backward pass.
    pub leak_slope: f64,
}

impl Default for SoftParams {
    fn default() -> Self {
        Self {
            occ_focal_sharpness: 3.0,
            occ_step_sharpness: 10.0,
            occ_step_offset: 0.1,
            scat_sharpness: 3.0,
            scat_gain: 10.0,
            scat_margin: 1.0,
            leak_slope: 0.01,
        }
    }
}

impl SoftParams {
    pub fn validate(&self) -> Result<(), SceneError> {
        let positive = [
            ("occ_focal_sharpness", self.occ_focal_sharpness),
            ("occ_step_sharpness", self.occ_step_sharpness),
            ("occ_step_offset", self.occ_step_offset),
            ("scat_sharpness", self.scat_sharpness),
            ("scat_gain", self.scat_gain),
            ("scat_margin", self.scat_margin),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SceneError::InvalidLens(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        if !(self.leak_slope.is_finite() && self.leak_slope >= 0.0) {
            return Err(SceneError::InvalidLens(format!(
                "leak_slope must be >= 0, got {}",
                self.leak_slope
            )));
        }
        Ok(())
    }

    /// Same coefficients with every sharpness scaled by `t`.
    pub fn sharpened(&self, t: f64) -> Self {
        Self {
            occ_focal_sharpness: self.occ_focal_sharpness * t,
            occ_step_sharpness: self.occ_step_sharpness * t,
            scat_sharpness: self.scat_sharpness * t,
            ..*self
        }
    }
}

/// Square aperture bitmap centred on its midpoint, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMask {
    size: usize,
    values: Vec<f64>,
}

impl KernelMask {
    pub fn new(size: usize, values: Vec<f64>) -> Result<Self, SceneError> {
        if size == 0 || values.len() != size * size {
            return Err(SceneError::InvalidLens(format!(
                "kernel mask needs {size}x{size} values, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(SceneError::InvalidLens(format!(
                "kernel mask value {v} outside [0, 1]"
            )));
        }
        Ok(Self { size, values })
    }

    /// Uses the first channel of a square buffer.
    pub fn from_buffer(buf: &ImageBuffer) -> Result<Self, SceneError> {
        if buf.width() != buf.height() {
            return Err(SceneError::InvalidLens(format!(
                "kernel mask must be square, got {}x{}",
                buf.width(),
                buf.height()
            )));
        }
        Self::new(buf.width(), buf.channel(0).into_vec())
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Nearest-texel lookup at `(u, v)` in `[-1, 1]^2`; zero outside.
    pub fn sample(&self, u: f64, v: f64) -> f64 {
        let n = self.size as f64;
        let fx = (u + 1.0) * 0.5 * n;
        let fy = (v + 1.0) * 0.5 * n;
        if !(0.0..n).contains(&fx) || !(0.0..n).contains(&fy) {
            return 0.0;
        }
        self.values[fy as usize * self.size + fx as usize]
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub enum ApertureKernel {
    #[default]
    Circle,
    Mask(KernelMask),
}

impl ApertureKernel {
    /// Lens-shape weight for a receiver offset `(dx, dy)` from a source whose
    /// CoC radius is `radius`. A CoC smaller than one pixel has no shape.
    #[inline]
    pub fn sample(&self, dx: f64, dy: f64, radius: f64) -> f64 {
        match self {
            ApertureKernel::Circle => 1.0,
            ApertureKernel::Mask(_) if radius < 1.0 => 1.0,
            ApertureKernel::Mask(mask) => mask.sample(dx / radius, dy / radius),
        }
    }

    pub fn is_circle(&self) -> bool {
        matches!(self, ApertureKernel::Circle)
    }
}

/// How the scatter/gather window half-width `R` is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RadiusPolicy {
    /// `ceil(blur_scale * max|d_rel|) + 1`, limited to `cap`.
    Auto {
        cap: usize,
    },
    Fixed(usize),
}

impl Default for RadiusPolicy {
    fn default() -> Self {
        RadiusPolicy::Auto { cap: 64 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LensConfig {
    /// Disparity of the focal plane (`1 / z_f`).
    pub focus_disparity: f64,
    /// CoC radius in pixels per unit of relative disparity.
    pub blur_scale: f64,
    pub max_radius: RadiusPolicy,
    pub kernel: ApertureKernel,
    pub soft: SoftParams,
    pub mode: RenderMode,
}

impl Default for LensConfig {
    fn default() -> Self {
        Self {
            focus_disparity: 0.0,
            blur_scale: 8.0,
            max_radius: RadiusPolicy::default(),
            kernel: ApertureKernel::Circle,
            soft: SoftParams::default(),
            mode: RenderMode::Soft,
        }
    }
}

impl LensConfig {
    pub fn new(focus_disparity: f64, blur_scale: f64, mode: RenderMode) -> Self {
        Self {
            focus_disparity,
            blur_scale,
            mode,
            ..Self::default()
        }
    }

    pub fn with_mode(mut self, mode: RenderMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_max_radius(mut self, policy: RadiusPolicy) -> Self {
        self.max_radius = policy;
        self
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if !self.focus_disparity.is_finite() {
            return Err(SceneError::InvalidLens(
                "focus_disparity must be finite".into(),
            ));
        }
        if !(self.blur_scale.is_finite() && self.blur_scale >= 0.0) {
            return Err(SceneError::InvalidLens(format!(
                "blur_scale must be >= 0, got {}",
                self.blur_scale
            )));
        }
        match self.max_radius {
            RadiusPolicy::Auto { cap: 0 } | RadiusPolicy::Fixed(0) => {
                return Err(SceneError::InvalidLens("max radius must be >= 1".into()))
            }
            _ => {}
        }
        self.soft.validate()
    }

    /// Window half-width `R` in pixels for this scene.
    pub fn resolve_radius(&self, scene: &LayeredScene) -> usize {
        match self.max_radius {
            RadiusPolicy::Fixed(r) => r.max(1),
            RadiusPolicy::Auto { cap } => {
                let extent =
                    self.blur_scale * scene.max_abs_relative_disparity(self.focus_disparity);
                ((extent.ceil() as usize) + 1).clamp(1, cap.max(1))
            }
        }
    }
}

/// Checks every layered-scene invariant and reports the first violation,
/// scanning layers front to back.
pub fn validate_scene(scene: &LayeredScene) -> Result<(), SceneError> {
    let first = scene.layers.first().ok_or(SceneError::EmptyScene)?;
    let (w, h) = (first.width(), first.height());
    for (i, layer) in scene.layers.iter().enumerate() {
        for (name, buf, channels) in [
            ("color", &layer.color, 3),
            ("alpha", &layer.alpha, 1),
            ("disparity", &layer.disparity, 1),
        ] {
            if buf.width() != w || buf.height() != h || buf.channels() != channels {
                return Err(SceneError::DimensionMismatch(format!(
                    "layer {i} {name} is {}x{}x{}, expected {w}x{h}x{channels}",
                    buf.width(),
                    buf.height(),
                    buf.channels()
                )));
            }
        }
        for (name, buf) in [
            ("color", &layer.color),
            ("alpha", &layer.alpha),
            ("disparity", &layer.disparity),
        ] {
            if let Some((x, y, _)) = buf.first_nonfinite() {
                return Err(SceneError::NonfiniteValue {
                    layer: i,
                    buffer: name,
                    x,
                    y,
                });
            }
        }
        for (p, &a) in layer.alpha.data().iter().enumerate() {
            if !(0.0..=1.0).contains(&a) {
                return Err(SceneError::AlphaOutOfRange {
                    layer: i,
                    x: p % w,
                    y: p / w,
                    value: a,
                });
            }
        }
        for (k, &c) in layer.color.data().iter().enumerate() {
            if !(0.0..=1.0).contains(&c) {
                let p = k / 3;
                return Err(SceneError::ColorOutOfRange {
                    layer: i,
                    x: p % w,
                    y: p / w,
                    value: c,
                });
            }
        }
    }
    let back = scene.layers.last().expect("non-empty");
    if let Some(p) = back.alpha.data().iter().position(|&a| a != 1.0) {
        return Err(SceneError::BackLayerNotOpaque {
            x: p % w,
            y: p / w,
            value: back.alpha.data()[p],
        });
    }
    Ok(())
}

/// `d - d_f` for a single disparity value.
#[inline]
pub fn relative_disparity(disparity: f64, focus_disparity: f64) -> f64 {
    disparity - focus_disparity
}

/// Per-pixel relative disparity map.
pub fn relative_disparity_map(disparity: &ImageBuffer, lens: &LensConfig) -> ImageBuffer {
    disparity.map(|d| relative_disparity(d, lens.focus_disparity))
}

/// CoC radius in pixels: `min(blur_scale * |d_rel|, max_radius)`.
#[inline]
pub fn coc_radius(d_rel: f64, blur_scale: f64, max_radius: f64) -> f64 {
    (blur_scale * d_rel.abs()).min(max_radius)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layer(w: usize, h: usize, alpha: f64) -> Layer {
        Layer::new(
            ImageBuffer::filled(w, h, 3, 0.5),
            ImageBuffer::filled(w, h, 1, alpha),
            ImageBuffer::filled(w, h, 1, 0.2),
        )
    }

    #[test]
    fn accepts_well_formed_two_layer_scene() {
        let scene = LayeredScene::new(vec![layer(8, 8, 0.3), layer(8, 8, 1.0)]);
        assert_eq!(validate_scene(&scene), Ok(()));
    }

    #[test]
    fn rejects_translucent_back_layer() {
        let mut back = layer(8, 8, 1.0);
        back.alpha.set(3, 5, 0, 0.5);
        let scene = LayeredScene::new(vec![layer(8, 8, 0.3), back]);
        assert_eq!(
            validate_scene(&scene),
            Err(SceneError::BackLayerNotOpaque {
                x: 3,
                y: 5,
                value: 0.5
            })
        );
    }

    #[test]
    fn rejects_mismatched_disparity_size() {
        let mut l = layer(64, 64, 1.0);
        l.disparity = ImageBuffer::new(32, 32, 1);
        let err = validate_scene(&LayeredScene::new(vec![l])).unwrap_err();
        assert_eq!(err.code(), "DIMENSION_MISMATCH");
    }

    #[test]
    fn rejects_empty_nonfinite_and_out_of_range() {
        assert_eq!(
            validate_scene(&LayeredScene::new(vec![])),
            Err(SceneError::EmptyScene)
        );
        let mut l = layer(4, 4, 1.0);
        l.disparity.set(1, 2, 0, f64::INFINITY);
        assert_eq!(
            validate_scene(&LayeredScene::new(vec![l]))
                .unwrap_err()
                .code(),
            "NONFINITE_VALUE"
        );
        let mut front = layer(4, 4, 0.5);
        front.alpha.set(0, 0, 0, 1.5);
        let err = validate_scene(&LayeredScene::new(vec![front, layer(4, 4, 1.0)])).unwrap_err();
        assert_eq!(err.code(), "ALPHA_OUT_OF_RANGE");
    }

    #[test]
    fn relative_disparity_examples() {
        assert_eq!(relative_disparity(1.0, 1.0), 0.0);
        assert_eq!(relative_disparity(0.5, 1.0), -0.5);
        assert_eq!(relative_disparity(2.0, 0.5), 1.5);
    }

    #[test]
    fn coc_radius_examples() {
        assert_eq!(coc_radius(0.0, 10.0, 100.0), 0.0);
        assert_eq!(coc_radius(0.5, 10.0, 100.0), 5.0);
        assert_eq!(coc_radius(50.0, 10.0, 21.0), 21.0);
    }

    #[test]
    fn auto_radius_tracks_scene_extent() {
        let scene = LayeredScene::new(vec![layer(4, 4, 1.0)]);
        let lens = LensConfig::new(0.0, 10.0, RenderMode::Hard);
        // max |d_rel| = 0.2 -> ceil(2) + 1
        assert_eq!(lens.resolve_radius(&scene), 3);
        let capped = lens.clone().with_max_radius(RadiusPolicy::Auto { cap: 2 });
        assert_eq!(capped.resolve_radius(&scene), 2);
        let fixed = lens.with_max_radius(RadiusPolicy::Fixed(9));
        assert_eq!(fixed.resolve_radius(&scene), 9);
    }

    #[test]
    fn mask_sampling_is_centred() {
        let mut v = vec![0.0; 9];
        v[4] = 1.0;
        let mask = KernelMask::new(3, v).unwrap();
        assert_eq!(mask.sample(0.0, 0.0), 1.0);
        assert_eq!(mask.sample(0.9, 0.0), 0.0);
        assert_eq!(mask.sample(1.5, 0.0), 0.0);
        let kernel = ApertureKernel::Mask(mask);
        assert_eq!(kernel.sample(3.0, 0.0, 0.5), 1.0);
    }

    fn arb_scene() -> impl Strategy<Value = (LayeredScene, bool)> {
        (1usize..4, 1usize..5, 1usize..5, any::<u64>()).prop_map(|(n, w, h, seed)| {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut ok = true;
            let layers = (0..n)
                .map(|i| {
                    let alpha = ImageBuffer::from_fn(w, h, 1, |_, _, _| {
                        if i + 1 == n {
                            if rng.gen_bool(0.1) {
                                ok = false;
                                0.9
                            } else {
                                1.0
                            }
                        } else if rng.gen_bool(0.05) {
                            ok = false;
                            -0.1
                        } else {
                            rng.gen::<f64>()
                        }
                    });
                    let color = ImageBuffer::from_fn(w, h, 3, |_, _, _| {
                        if rng.gen_bool(0.02) {
                            ok = false;
                            1.2
                        } else {
                            rng.gen()
                        }
                    });
                    let disp = ImageBuffer::from_fn(w, h, 1, |_, _, _| {
                        if rng.gen_bool(0.02) {
                            ok = false;
                            f64::NAN
                        } else {
                            rng.gen_range(-2.0..2.0)
                        }
                    });
                    Layer::new(color, alpha, disp)
                })
                .collect();
            (LayeredScene::new(layers), ok)
        })
    }

    proptest! {
        #[test]
        fn validation_accepts_iff_invariants_hold((scene, ok) in arb_scene()) {
            prop_assert_eq!(validate_scene(&scene).is_ok(), ok);
        }

        #[test]
        fn coc_radius_even_monotone(d in -10.0f64..10.0, e in 0.0f64..5.0, g in 0.0f64..20.0) {
            let r = 30.0;
            prop_assert_eq!(coc_radius(d, g, r), coc_radius(-d, g, r));
            prop_assert!(coc_radius(d.abs() + e, g, r) >= coc_radius(d, g, r));
            let zero = coc_radius(d, g, r) == 0.0;
            prop_assert_eq!(zero, d == 0.0 || g == 0.0);
        }
    }
}
