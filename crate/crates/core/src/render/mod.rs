//! Forward layered rendering and its analytic adjoint.
//!
//! Each layer is gathered independently (scatter with in-layer occlusion,
//! expressed as a gather over a square window of half-width `R`), then the
//! layers are blended front to back with disk-averaged visibility:
//!
//! ```text
//! B(x) = sum_l c_l(x) N_l(x) / max(W_l(x), eps)
//! c_l(x) = V_l(x) prod_{k<l} (1 - V_k(x))
//! ```

mod backward;
mod baseline;
mod gradcheck;

pub use backward::{backward, GradientSet, LayerGradient};
pub use baseline::{flatten_layers, render_naive};
pub use gradcheck::{gradcheck, FamilyReport, GradcheckConfig, GradcheckReport, ParamFamily};

use rayon::prelude::*;
use thiserror::Error;

use crate::buffer::ImageBuffer;
use crate::kernels::{
    coc_area, energy_weight, occlusion_hard, occlusion_soft, scatter_hard, scatter_soft, visibility,
};
use crate::scene::{
    coc_radius, validate_scene, Layer, LayeredScene, LensConfig, RenderMode, SceneError, SoftParams,
};

/// Guard on the per-layer normaliser.
pub const WEIGHT_EPS: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("invalid scene: {0}")]
    Scene(#[from] SceneError),
    #[error("backward pass requires soft mode")]
    ModeMismatch,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

impl RenderError {
    pub fn code(&self) -> &'static str {
        match self {
            RenderError::Scene(_) => "SCENE_INVALID",
            RenderError::ModeMismatch => "MODE_MISMATCH",
            RenderError::ShapeMismatch(_) => "SHAPE_MISMATCH",
        }
    }
}

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    /// Square of half-width `reach` around `(x, y)`, clipped to `w x h`.
    pub fn around(x: usize, y: usize, reach: usize, w: usize, h: usize) -> Self {
        Self {
            x0: x.saturating_sub(reach),
            y0: y.saturating_sub(reach),
            x1: (x + reach + 1).min(w),
            y1: (y + reach + 1).min(h),
        }
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..self.x1).contains(&x) && (self.y0..self.y1).contains(&y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RenderOptions {
    /// Apply the on-focal occlusion term inside each layer. Turning it off
    /// gives the plain scatter ablation.
    pub in_layer_occlusion: bool,
    /// Only evaluate output pixels inside this rectangle; the rest stay 0.
    pub region: Option<PixelRect>,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            in_layer_occlusion: true,
            region: None,
        }
    }
}

/// Bokeh image plus the per-layer sums the backward pass reuses.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    pub bokeh: ImageBuffer,
    pub per_layer_numerator: Vec<ImageBuffer>,
    pub per_layer_denominator: Vec<ImageBuffer>,
    pub per_layer_visibility: Vec<ImageBuffer>,
    /// `c_l(x)`; sums to 1 per pixel when the back layer is opaque.
    pub composite_weights: Vec<ImageBuffer>,
    /// Window half-width `R` used for this render.
    pub radius: usize,
    pub options: RenderOptions,
}

/// Validates the scene and lens, then renders with default options.
pub fn render(scene: &LayeredScene, lens: &LensConfig) -> Result<RenderOutput, RenderError> {
    render_with(scene, lens, RenderOptions::default())
}

pub fn render_with(
    scene: &LayeredScene,
    lens: &LensConfig,
    options: RenderOptions,
) -> Result<RenderOutput, RenderError> {
    validate_scene(scene)?;
    lens.validate()?;
    let radius = lens.resolve_radius(scene);
    Ok(render_unchecked(scene, lens, radius, options))
}

/// Renders without validation. Used by finite-difference probes that step
/// parameters outside their valid range.
pub fn render_unchecked(
    scene: &LayeredScene,
    lens: &LensConfig,
    radius: usize,
    options: RenderOptions,
) -> RenderOutput {
    let (w, h) = (scene.width(), scene.height());
    let mut numerators = Vec::with_capacity(scene.len());
    let mut denominators = Vec::with_capacity(scene.len());
    let mut visibilities = Vec::with_capacity(scene.len());
    for layer in &scene.layers {
        let (num, den) = render_layer_with(layer, lens, radius, options);
        numerators.push(num);
        denominators.push(den);
        visibilities.push(layer_visibility(layer, lens, radius, options.region));
    }

    let mut bokeh = ImageBuffer::new(w, h, 3);
    let mut weights = vec![ImageBuffer::new(w, h, 1); scene.len()];
    for p in 0..w * h {
        let (x, y) = (p % w, p / w);
        if options.region.is_some_and(|r| !r.contains(x, y)) {
            continue;
        }
        let mut transmit = 1.0;
        let mut out = [0.0; 3];
        for l in 0..scene.len() {
            let den = denominators[l].data()[p];
            let v = gated_visibility(visibilities[l].data()[p], den);
            let c = v * transmit;
            transmit *= 1.0 - v;
            weights[l].data_mut()[p] = c;
            let norm = den.max(WEIGHT_EPS);
            for (ch, o) in out.iter_mut().enumerate() {
                *o += c * numerators[l].data()[p * 3 + ch] / norm;
            }
        }
        bokeh.data_mut()[p * 3..p * 3 + 3].copy_from_slice(&out);
    }

    RenderOutput {
        bokeh,
        per_layer_numerator: numerators,
        per_layer_denominator: denominators,
        per_layer_visibility: visibilities,
        composite_weights: weights,
        radius,
        options,
    }
}

/// A layer whose gathered weight vanishes at a pixel has nothing to show
/// there, so it is treated as fully transparent.
#[inline]
pub(crate) fn gated_visibility(v: f64, den: f64) -> f64 {
    if den > WEIGHT_EPS {
        v
    } else {
        0.0
    }
}

/// Per-pixel `V_l(x)` with disk radius from the layer's own disparity.
pub fn layer_visibility(
    layer: &Layer,
    lens: &LensConfig,
    radius: usize,
    region: Option<PixelRect>,
) -> ImageBuffer {
    let (w, h) = (layer.width(), layer.height());
    let rmax = radius as f64;
    let mut out = ImageBuffer::new(w, h, 1);
    out.data_mut()
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, v) in row.iter_mut().enumerate() {
                if region.is_some_and(|r| !r.contains(x, y)) {
                    continue;
                }
                let d = layer.disparity.get(x, y, 0) - lens.focus_disparity;
                *v = visibility(&layer.alpha, x, y, coc_radius(d, lens.blur_scale, rmax));
            }
        });
    out
}

/// Gathered numerator (3-channel) and normaliser `W` of one layer.
pub fn render_layer(layer: &Layer, lens: &LensConfig, radius: usize) -> (ImageBuffer, ImageBuffer) {
    render_layer_with(layer, lens, radius, RenderOptions::default())
}

pub fn render_layer_with(
    layer: &Layer,
    lens: &LensConfig,
    radius: usize,
    options: RenderOptions,
) -> (ImageBuffer, ImageBuffer) {
    let prep = LayerPrep::new(layer, lens, radius);
    let (w, h) = (prep.width, prep.height);
    let mut num = ImageBuffer::new(w, h, 3);
    let mut den = ImageBuffer::new(w, h, 1);
    let soft = match lens.mode {
        RenderMode::Soft => Some(SoftTables::new(&prep, &lens.soft)),
        RenderMode::Hard => None,
    };
    num.data_mut()
        .par_chunks_mut(w * 3)
        .zip(den.data_mut().par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (num_row, den_row))| {
            if options.region.is_some_and(|r| y < r.y0 || y >= r.y1) {
                return;
            }
            for x in 0..w {
                if options.region.is_some_and(|r| x < r.x0 || x >= r.x1) {
                    continue;
                }
                let (n, d) = match &soft {
                    Some(t) => gather_soft(&prep, t, lens, options, x, y),
                    None => gather_hard(&prep, lens, options, x, y),
                };
                num_row[x * 3..x * 3 + 3].copy_from_slice(&n);
                den_row[x] = d;
            }
        });
    (num, den)
}

/// Per-pixel quantities of one layer shared by the gathers.
pub(crate) struct LayerPrep<'a> {
    pub width: usize,
    pub height: usize,
    pub radius: usize,
    pub layer: &'a Layer,
    pub drel: Vec<f64>,
    pub coc: Vec<f64>,
}

impl<'a> LayerPrep<'a> {
    pub fn new(layer: &'a Layer, lens: &LensConfig, radius: usize) -> Self {
        let rmax = radius as f64;
        let drel: Vec<f64> = layer
            .disparity
            .data()
            .iter()
            .map(|&d| d - lens.focus_disparity)
            .collect();
        let coc = drel
            .iter()
            .map(|&d| coc_radius(d, lens.blur_scale, rmax))
            .collect();
        Self {
            width: layer.width(),
            height: layer.height(),
            radius,
            layer,
            drel,
            coc,
        }
    }

    /// Clipped window bounds around `(x, y)`, inclusive.
    #[inline]
    pub fn window(&self, x: usize, y: usize) -> (usize, usize, usize, usize) {
        let r = self.radius;
        (
            x.saturating_sub(r),
            y.saturating_sub(r),
            (x + r).min(self.width - 1),
            (y + r).min(self.height - 1),
        )
    }
}

fn gather_hard(
    prep: &LayerPrep,
    lens: &LensConfig,
    options: RenderOptions,
    x: usize,
    y: usize,
) -> ([f64; 3], f64) {
    let w = prep.width;
    let rmax = prep.radius as f64;
    let alpha = prep.layer.alpha.data();
    let color = prep.layer.color.data();
    let d_recv = prep.drel[y * w + x];
    let (x0, y0, x1, y1) = prep.window(x, y);
    let mut num = [0.0; 3];
    let mut den = 0.0;
    for sy in y0..=y1 {
        for sx in x0..=x1 {
            let j = sy * w + sx;
            if alpha[j] == 0.0 {
                continue;
            }
            let (dx, dy) = (x as isize - sx as isize, y as isize - sy as isize);
            let r = prep.coc[j];
            let s = scatter_hard(dx, dy, r, rmax);
            if s == 0.0 {
                continue;
            }
            let k = lens.kernel.sample(dx as f64, dy as f64, r);
            let mut t = energy_weight(s, k, alpha[j], r);
            if options.in_layer_occlusion {
                t *= occlusion_hard(d_recv, prep.drel[j]);
            }
            for c in 0..3 {
                num[c] += color[j * 3 + c] * t;
            }
            den += t;
        }
    }
    (num, den)
}

/// Exponentials factored out of the soft kernels so a pair costs one
/// division:
///
/// ```text
/// S = 1 / (1 + e_src f_offset),   e = g exp(-s (r + m)),  f = exp(s |offset|)
/// O = 1 - G_recv / (1 + p_src q_recv),  p = exp(2 c2 d),  q = exp(2 c2 (c3 - d))
/// ```
///
/// Falls back to direct evaluation when any product could overflow.
pub(crate) struct SoftTables {
    pub fast: bool,
    pub span: usize,
    pub offset_exp: Vec<f64>,
    pub offset_dist: Vec<f64>,
    pub src_e: Vec<f64>,
    pub src_p: Vec<f64>,
    pub recv_g: Vec<f64>,
    pub recv_q: Vec<f64>,
    /// `a / A(r)` per source.
    pub src_scale: Vec<f64>,
}

impl SoftTables {
    pub fn new(prep: &LayerPrep, soft: &SoftParams) -> Self {
        let r = prep.radius as isize;
        let span = (2 * r + 1) as usize;
        let offset_dist: Vec<f64> = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| ((dx * dx + dy * dy) as f64).sqrt()))
            .collect();
        let offset_exp: Vec<f64> = offset_dist
            .iter()
            .map(|&d| (soft.scat_sharpness * d).exp())
            .collect();
        let src_e: Vec<f64> = prep
            .coc
            .iter()
            .map(|&r| soft.scat_gain * (-soft.scat_sharpness * (r + soft.scat_margin)).exp())
            .collect();
        let c2 = soft.occ_step_sharpness;
        let src_p: Vec<f64> = prep.drel.iter().map(|&d| (2.0 * c2 * d).exp()).collect();
        let recv_q: Vec<f64> = prep
            .drel
            .iter()
            .map(|&d| (2.0 * c2 * (soft.occ_step_offset - d)).exp())
            .collect();
        let recv_g: Vec<f64> = prep
            .drel
            .iter()
            .map(|&d| (-soft.occ_focal_sharpness * d * d).exp())
            .collect();
        let src_scale = prep
            .layer
            .alpha
            .data()
            .iter()
            .zip(&prep.coc)
            .map(|(&a, &r)| a / coc_area(r))
            .collect();

        let max = |v: &[f64]| v.iter().fold(0.0_f64, |m, &x| m.max(x));
        let min_pos = |v: &[f64]| v.iter().fold(f64::INFINITY, |m, &x| m.min(x));
        let fast = [max(&offset_exp) * max(&src_e), max(&src_p) * max(&recv_q)]
            .iter()
            .all(|v| v.is_finite() && *v < 1e300)
            && min_pos(&src_e) > 0.0
            && min_pos(&src_p) > 0.0
            && min_pos(&recv_q) > 0.0;
        Self {
            fast,
            span,
            offset_exp,
            offset_dist,
            src_e,
            src_p,
            recv_g,
            recv_q,
            src_scale,
        }
    }
}

fn gather_soft(
    prep: &LayerPrep,
    t: &SoftTables,
    lens: &LensConfig,
    options: RenderOptions,
    x: usize,
    y: usize,
) -> ([f64; 3], f64) {
    let w = prep.width;
    let r = prep.radius;
    let alpha = prep.layer.alpha.data();
    let color = prep.layer.color.data();
    let i = y * w + x;
    let (g, q) = (t.recv_g[i], t.recv_q[i]);
    let occlude = options.in_layer_occlusion && g > 0.0;
    let circle = lens.kernel.is_circle();
    let (x0, y0, x1, y1) = prep.window(x, y);
    let mut num = [0.0; 3];
    let mut den = 0.0;
    for sy in y0..=y1 {
        let row = (sy + r - y) * t.span + r;
        for sx in x0..=x1 {
            let j = sy * w + sx;
            if alpha[j] == 0.0 {
                continue;
            }
            let o = row + sx - x;
            let mut weight = if t.fast {
                t.src_scale[j] / (1.0 + t.src_e[j] * t.offset_exp[o])
            } else {
                t.src_scale[j] * scatter_soft(t.offset_dist[o], prep.coc[j], &lens.soft)
            };
            if !circle {
                let (dx, dy) = (x as f64 - sx as f64, y as f64 - sy as f64);
                weight *= lens.kernel.sample(dx, dy, prep.coc[j]);
            }
            if occlude {
                weight *= if t.fast {
                    1.0 - g / (1.0 + t.src_p[j] * q)
                } else {
                    occlusion_soft(prep.drel[i], prep.drel[j], &lens.soft)
                };
            }
            for c in 0..3 {
                num[c] += color[j * 3 + c] * weight;
            }
            den += weight;
        }
    }
    (num, den)
}

/// Standard front-to-back straight-alpha over composite of the layers with
/// no blur.
pub fn alpha_over(scene: &LayeredScene) -> ImageBuffer {
    let (w, h) = (scene.width(), scene.height());
    ImageBuffer::from_fn(w, h, 3, |x, y, c| {
        let mut transmit = 1.0;
        let mut out = 0.0;
        for layer in &scene.layers {
            let a = layer.alpha.get(x, y, 0);
            out += transmit * a * layer.color.get(x, y, c);
            transmit *= 1.0 - a;
        }
        out
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::RadiusPolicy;

    fn constant_layer(w: usize, h: usize, c: f64, a: f64, d: f64) -> Layer {
        Layer::new(
            ImageBuffer::filled(w, h, 3, c),
            ImageBuffer::filled(w, h, 1, a),
            ImageBuffer::filled(w, h, 1, d),
        )
    }

    #[test]
    fn constant_layer_normalises_to_its_color() {
        let layer = constant_layer(16, 16, 0.37, 1.0, 0.5);
        for mode in [RenderMode::Hard, RenderMode::Soft] {
            let lens = LensConfig::new(0.0, 10.0, mode);
            let (n, d) = render_layer(&layer, &lens, 6);
            let v = n.get(8, 8, 1) / d.get(8, 8, 0);
            assert!((v - 0.37).abs() < 1e-14, "{mode:?} {v}");
        }
    }

    #[test]
    fn zero_blur_is_identity_per_layer() {
        let layer = Layer::opaque(
            ImageBuffer::from_fn(6, 5, 3, |x, y, c| ((x * 7 + y * 3 + c) % 11) as f64 / 10.0),
            ImageBuffer::from_fn(6, 5, 1, |x, _, _| x as f64 * 0.1),
        );
        let lens = LensConfig::new(0.0, 0.0, RenderMode::Hard);
        let (n, d) = render_layer(&layer, &lens, 3);
        for y in 0..5 {
            for x in 0..6 {
                for c in 0..3 {
                    let v = n.get(x, y, c) / d.get(x, y, 0);
                    assert!((v - layer.color.get(x, y, c)).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn composite_weights_sum_to_one() {
        let front = Layer::new(
            ImageBuffer::filled(12, 12, 3, 0.2),
            ImageBuffer::from_fn(12, 12, 1, |x, _, _| if x < 6 { 1.0 } else { 0.3 }),
            ImageBuffer::filled(12, 12, 1, 0.6),
        );
        let back = constant_layer(12, 12, 0.8, 1.0, -0.2);
        let scene = LayeredScene::new(vec![front, back]);
        let out = render(&scene, &LensConfig::new(0.0, 5.0, RenderMode::Soft)).unwrap();
        for p in 0..144 {
            let s: f64 = out.composite_weights.iter().map(|c| c.data()[p]).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn region_render_matches_full_render_inside() {
        let front = Layer::new(
            ImageBuffer::from_fn(14, 10, 3, |x, y, c| ((x + 2 * y + c) % 5) as f64 / 4.0),
            ImageBuffer::from_fn(14, 10, 1, |x, y, _| ((x * y) % 3) as f64 / 2.0),
            ImageBuffer::from_fn(14, 10, 1, |x, _, _| 0.1 * x as f64 - 0.6),
        );
        let back = constant_layer(14, 10, 0.5, 1.0, -0.4);
        let scene = LayeredScene::new(vec![front, back]);
        let lens =
            LensConfig::new(0.0, 4.0, RenderMode::Soft).with_max_radius(RadiusPolicy::Fixed(4));
        let full = render_unchecked(&scene, &lens, 4, RenderOptions::default());
        let rect = PixelRect::around(5, 4, 3, 14, 10);
        let part = render_unchecked(
            &scene,
            &lens,
            4,
            RenderOptions {
                region: Some(rect),
                ..RenderOptions::default()
            },
        );
        for y in 0..10 {
            for x in 0..14 {
                for c in 0..3 {
                    let expect = if rect.contains(x, y) {
                        full.bokeh.get(x, y, c)
                    } else {
                        0.0
                    };
                    assert_eq!(part.bokeh.get(x, y, c), expect);
                }
            }
        }
    }

    #[test]
    fn soft_fast_path_matches_direct_kernels() {
        let layer = Layer::opaque(
            ImageBuffer::from_fn(9, 9, 3, |x, y, c| ((3 * x + y + c) % 7) as f64 / 6.0),
            ImageBuffer::from_fn(9, 9, 1, |x, y, _| 0.15 * x as f64 - 0.1 * y as f64),
        );
        let lens = LensConfig::new(0.0, 3.0, RenderMode::Soft);
        let prep = LayerPrep::new(&layer, &lens, 4);
        let mut tables = SoftTables::new(&prep, &lens.soft);
        assert!(tables.fast);
        let opts = RenderOptions::default();
        let fast = gather_soft(&prep, &tables, &lens, opts, 4, 4);
        tables.fast = false;
        let direct = gather_soft(&prep, &tables, &lens, opts, 4, 4);
        assert!((fast.1 - direct.1).abs() < 1e-13 * direct.1);
        for c in 0..3 {
            assert!((fast.0[c] - direct.0[c]).abs() < 1e-13 * direct.1);
        }
    }

    #[test]
    fn very_sharp_soft_params_fall_back_without_overflow() {
        let layer = Layer::opaque(
            ImageBuffer::filled(8, 8, 3, 0.4),
            ImageBuffer::from_fn(8, 8, 1, |x, _, _| 0.3 * x as f64 - 1.0),
        );
        let mut lens = LensConfig::new(0.0, 3.0, RenderMode::Soft);
        lens.soft = lens.soft.sharpened(100.0);
        let prep = LayerPrep::new(&layer, &lens, 5);
        assert!(!SoftTables::new(&prep, &lens.soft).fast);
        let (n, d) = render_layer(&layer, &lens, 5);
        assert!(n.first_nonfinite().is_none() && d.first_nonfinite().is_none());
        assert!((n.get(3, 3, 0) / d.get(3, 3, 0) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn render_rejects_invalid_scene() {
        let mut back = constant_layer(4, 4, 0.5, 1.0, 0.0);
        back.alpha.set(0, 0, 0, 0.5);
        let err = render(&LayeredScene::new(vec![back]), &LensConfig::default()).unwrap_err();
        assert_eq!(err.code(), "SCENE_INVALID");
    }
}
