//! Reverse-mode derivatives of [`render`](super::render) in gather form:
//! every parameter pixel sums the contributions of the outputs it can reach,
//! so rows are written by exactly one worker.

use rayon::prelude::*;

use super::{gated_visibility, LayerPrep, RenderError, RenderOutput, SoftTables, WEIGHT_EPS};
use crate::buffer::ImageBuffer;
use crate::kernels::{
    coc_area, coc_area_derivative, coc_radius_derivative, kernel_partials, leaky,
    visibility_disk_count, visibility_radius, KernelEval, PairInput,
};
use crate::scene::{LayeredScene, LensConfig, RenderMode};

/// `dL/dI`, `dL/dd` and `dL/da` of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradient {
    pub color: ImageBuffer,
    pub disparity: ImageBuffer,
    pub alpha: ImageBuffer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGradient>,
}

impl GradientSet {
    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|g| {
            g.color.first_nonfinite().is_none()
                && g.disparity.first_nonfinite().is_none()
                && g.alpha.first_nonfinite().is_none()
        })
    }
}

/// Adjoints of the per-layer sums at each output pixel.
struct LayerAdjoint {
    /// `dL/dN_l(x)`, 3 channels.
    numerator: Vec<f64>,
    /// `dL/dW_l(x)`
    denominator: Vec<f64>,
    /// `dL/dV_l(x) / |D_l(x)|`
    visibility: Vec<f64>,
}

/// Gradient of `sum_x <upstream(x), B(x)>` with respect to every layer
/// parameter. `output` must come from rendering the same inputs.
pub fn backward(
    scene: &LayeredScene,
    lens: &LensConfig,
    output: &RenderOutput,
    upstream: &ImageBuffer,
) -> Result<GradientSet, RenderError> {
    if lens.mode != RenderMode::Soft {
        return Err(RenderError::ModeMismatch);
    }
    let (w, h) = (scene.width(), scene.height());
    if upstream.width() != w || upstream.height() != h || upstream.channels() != 3 {
        return Err(RenderError::ShapeMismatch(format!(
            "upstream gradient is {}x{}x{}, expected {w}x{h}x3",
            upstream.width(),
            upstream.height(),
            upstream.channels()
        )));
    }
    if output.per_layer_denominator.len() != scene.len() || !output.bokeh.same_extent(upstream) {
        return Err(RenderError::ShapeMismatch(
            "render output does not belong to this scene".into(),
        ));
    }
    let preps: Vec<LayerPrep> = scene
        .layers
        .iter()
        .map(|l| LayerPrep::new(l, lens, output.radius))
        .collect();
    let adjoints = composite_adjoints(&preps, output, upstream);
    let layers = preps
        .iter()
        .zip(&adjoints)
        .map(|(prep, adj)| layer_backward(prep, adj, lens, output.options.in_layer_occlusion, true))
        .collect();
    Ok(GradientSet { layers })
}

fn composite_adjoints(
    preps: &[LayerPrep],
    output: &RenderOutput,
    upstream: &ImageBuffer,
) -> Vec<LayerAdjoint> {
    let n = preps.len();
    let (w, h) = (output.bokeh.width(), output.bokeh.height());
    let mut adj: Vec<LayerAdjoint> = (0..n)
        .map(|_| LayerAdjoint {
            numerator: vec![0.0; w * h * 3],
            denominator: vec![0.0; w * h],
            visibility: vec![0.0; w * h],
        })
        .collect();
    let mut vis = vec![0.0; n];
    let mut transmit = vec![0.0; n];
    let mut color = vec![[0.0; 3]; n];
    for p in 0..w * h {
        let (x, y) = (p % w, p / w);
        let g = upstream.pixel(x, y);
        let mut t = 1.0;
        for l in 0..n {
            let den = output.per_layer_denominator[l].data()[p];
            vis[l] = gated_visibility(output.per_layer_visibility[l].data()[p], den);
            transmit[l] = t;
            t *= 1.0 - vis[l];
            let norm = den.max(WEIGHT_EPS);
            let num = &output.per_layer_numerator[l].data()[p * 3..p * 3 + 3];
            for (c, v) in color[l].iter_mut().zip(num) {
                *c = v / norm;
            }
        }
        // composite of everything behind layer m, relative to m
        let mut behind = [0.0; 3];
        for m in (0..n).rev() {
            let den = output.per_layer_denominator[m].data()[p];
            if den > WEIGHT_EPS {
                let weight = vis[m] * transmit[m];
                let mut dot = 0.0;
                let mut dv = 0.0;
                for c in 0..3 {
                    let u = weight * g[c];
                    adj[m].numerator[p * 3 + c] = u / den;
                    dot += u * color[m][c];
                    dv += g[c] * transmit[m] * (color[m][c] - behind[c]);
                }
                adj[m].denominator[p] = -dot / den;
                let r = preps[m].coc[p];
                adj[m].visibility[p] = dv / visibility_disk_count(w, h, x, y, r) as f64;
            }
            for c in 0..3 {
                behind[c] = vis[m] * color[m][c] + (1.0 - vis[m]) * behind[c];
            }
        }
    }
    adj
}

fn layer_backward(
    prep: &LayerPrep,
    adj: &LayerAdjoint,
    lens: &LensConfig,
    occlusion: bool,
    allow_fast: bool,
) -> LayerGradient {
    let w = prep.width;
    let h = prep.height;
    let rmax = prep.radius as f64;
    let alpha = prep.layer.alpha.data();
    let color = prep.layer.color.data();
    let vis_rad2: Vec<f64> = prep
        .coc
        .iter()
        .map(|&r| visibility_radius(r).powi(2))
        .collect();
    let soft = &lens.soft;
    let tables = SoftTables::new(prep, soft);
    let span = tables.span as isize;
    let centre = prep.radius as isize * (span + 1);
    // per-source radius derivative terms
    let dr_s: Vec<f64> = prep
        .drel
        .iter()
        .map(|&d| soft.scat_sharpness * coc_radius_derivative(d, lens.blur_scale, rmax))
        .collect();
    let darea_rel: Vec<f64> = prep
        .drel
        .iter()
        .zip(&prep.coc)
        .map(|(&d, &r)| coc_area_derivative(d, lens.blur_scale, rmax) / coc_area(r))
        .collect();
    let inv_area: Vec<f64> = prep.coc.iter().map(|&r| 1.0 / coc_area(r)).collect();
    let c1 = soft.occ_focal_sharpness;
    let c2 = soft.occ_step_sharpness;
    let leak = soft.leak_slope;
    let pair = |recv: usize, src: usize, dx: f64, dy: f64| -> KernelEval {
        let kernel = lens.kernel.sample(dx, dy, prep.coc[src]);
        let mut e = if allow_fast && tables.fast {
            let o = (centre + dy as isize * span + dx as isize) as usize;
            let s = 1.0 / (1.0 + tables.src_e[src] * tables.offset_exp[o]);
            let dscatter = leaky(s * (1.0 - s), leak) * dr_s[src];
            let g = tables.recv_g[recv];
            let sigma = 1.0 / (1.0 + tables.src_p[src] * tables.recv_q[recv]);
            let docc_dz = leaky(2.0 * g * sigma * (1.0 - sigma), leak);
            let ka = kernel * alpha[src] * inv_area[src];
            KernelEval {
                scatter: s,
                occlusion: 1.0 - g * sigma,
                weight: s * ka,
                dscatter_dsrc: dscatter,
                docc_drecv: 2.0 * c1 * prep.drel[recv] * g * sigma - c2 * docc_dz,
                docc_dsrc: c2 * docc_dz,
                dweight_dsrc: ka * (dscatter - s * darea_rel[src]),
                dweight_dalpha: s * kernel * inv_area[src],
            }
        } else {
            kernel_partials(
                &PairInput {
                    d_recv: prep.drel[recv],
                    d_src: prep.drel[src],
                    distance: (dx * dx + dy * dy).sqrt(),
                    alpha_src: alpha[src],
                    kernel,
                    blur_scale: lens.blur_scale,
                    max_radius: rmax,
                },
                soft,
            )
        };
        if !occlusion {
            e.occlusion = 1.0;
            e.docc_dsrc = 0.0;
            e.docc_drecv = 0.0;
        }
        e
    };

    let mut grad_color = ImageBuffer::new(w, h, 3);
    let mut grad_disp = ImageBuffer::new(w, h, 1);
    let mut grad_alpha = ImageBuffer::new(w, h, 1);
    grad_color
        .data_mut()
        .par_chunks_mut(w * 3)
        .zip(grad_disp.data_mut().par_chunks_mut(w))
        .zip(grad_alpha.data_mut().par_chunks_mut(w))
        .enumerate()
        .for_each(|(py, ((gc_row, gd_row), ga_row))| {
            for px in 0..w {
                let p = py * w + px;
                let col_p = &color[p * 3..p * 3 + 3];
                let an_p = &adj.numerator[p * 3..p * 3 + 3];
                let ad_p = adj.denominator[p];
                let (x0, y0, x1, y1) = prep.window(px, py);
                let mut gi = [0.0; 3];
                let mut gd = 0.0;
                let mut ga = 0.0;
                for qy in y0..=y1 {
                    for qx in x0..=x1 {
                        let q = qy * w + qx;
                        let (dx, dy) = (qx as f64 - px as f64, qy as f64 - py as f64);
                        let an_q = &adj.numerator[q * 3..q * 3 + 3];
                        let ad_q = adj.denominator[q];
                        // p scatters onto q
                        if ad_q != 0.0 || an_q.iter().any(|&v| v != 0.0) {
                            let e = pair(q, p, dx, dy);
                            let t = e.weight * e.occlusion;
                            let mut lambda = ad_q;
                            for c in 0..3 {
                                gi[c] += an_q[c] * t;
                                lambda += an_q[c] * col_p[c];
                            }
                            ga += lambda * e.dweight_dalpha * e.occlusion;
                            gd += lambda * (e.dweight_dsrc * e.occlusion + e.weight * e.docc_dsrc);
                        }
                        // q scatters onto p; only the occlusion term depends on d_p
                        if occlusion && (ad_p != 0.0 || an_p.iter().any(|&v| v != 0.0)) {
                            let e = pair(p, q, -dx, -dy);
                            let mut lambda = ad_p;
                            for c in 0..3 {
                                lambda += an_p[c] * color[q * 3 + c];
                            }
                            gd += lambda * e.weight * e.docc_drecv;
                        }
                        // p inside the visibility disk of q
                        if adj.visibility[q] != 0.0 && dx * dx + dy * dy < vis_rad2[q] {
                            ga += adj.visibility[q];
                        }
                    }
                }
                gc_row[px * 3..px * 3 + 3].copy_from_slice(&gi);
                gd_row[px] = gd;
                ga_row[px] = ga;
            }
        });
    LayerGradient {
        color: grad_color,
        disparity: grad_disp,
        alpha: grad_alpha,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::render;
    use crate::scene::Layer;

    fn scene() -> LayeredScene {
        let front = Layer::new(
            ImageBuffer::from_fn(10, 10, 3, |x, y, c| ((x + 3 * y + c) % 7) as f64 / 6.0),
            ImageBuffer::from_fn(10, 10, 1, |x, y, _| {
                if (3..7).contains(&x) && y > 2 {
                    0.9
                } else {
                    0.1
                }
            }),
            ImageBuffer::from_fn(10, 10, 1, |x, _, _| 0.4 + 0.02 * x as f64),
        );
        let back = Layer::opaque(
            ImageBuffer::from_fn(10, 10, 3, |x, y, c| ((2 * x + y + c) % 5) as f64 / 4.0),
            ImageBuffer::filled(10, 10, 1, -0.3),
        );
        LayeredScene::new(vec![front, back])
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let s = scene();
        let lens = LensConfig::new(0.0, 4.0, RenderMode::Soft);
        let out = render(&s, &lens).unwrap();
        let g = backward(&s, &lens, &out, &ImageBuffer::new(10, 10, 3)).unwrap();
        for l in &g.layers {
            assert!(l.color.data().iter().all(|&v| v == 0.0));
            assert!(l.disparity.data().iter().all(|&v| v == 0.0));
            assert!(l.alpha.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn fast_and_exact_pair_terms_agree() {
        let s = scene();
        let lens = LensConfig::new(0.0, 4.0, RenderMode::Soft);
        let out = render(&s, &lens).unwrap();
        let up = ImageBuffer::from_fn(10, 10, 3, |x, y, c| {
            ((x * 5 + y * 3 + c) % 7) as f64 / 3.0 - 1.0
        });
        let fast = backward(&s, &lens, &out, &up).unwrap();
        let preps: Vec<LayerPrep> = s
            .layers
            .iter()
            .map(|l| LayerPrep::new(l, &lens, out.radius))
            .collect();
        let adj = composite_adjoints(&preps, &out, &up);
        let exact: Vec<LayerGradient> = preps
            .iter()
            .zip(&adj)
            .map(|(p, a)| layer_backward(p, a, &lens, true, false))
            .collect();
        for (f, e) in fast.layers.iter().zip(&exact) {
            for (a, b) in [
                (&f.color, &e.color),
                (&f.disparity, &e.disparity),
                (&f.alpha, &e.alpha),
            ] {
                for (u, v) in a.data().iter().zip(b.data()) {
                    assert!((u - v).abs() <= 1e-10 * u.abs().max(1.0), "{u} {v}");
                }
            }
        }
    }

    #[test]
    fn hard_mode_is_rejected() {
        let s = scene();
        let lens = LensConfig::new(0.0, 4.0, RenderMode::Hard);
        let out = render(&s, &lens).unwrap();
        let err = backward(&s, &lens, &out, &ImageBuffer::filled(10, 10, 3, 1.0)).unwrap_err();
        assert_eq!(err.code(), "MODE_MISMATCH");
    }

    #[test]
    fn color_gradient_of_sum_loss_single_layer() {
        let layer = Layer::opaque(
            ImageBuffer::from_fn(9, 9, 3, |x, y, c| ((x * y + c) % 4) as f64 / 3.0),
            ImageBuffer::from_fn(9, 9, 1, |x, y, _| 0.1 * x as f64 - 0.05 * y as f64),
        );
        let s = LayeredScene::new(vec![layer]);
        let lens = LensConfig::new(0.0, 3.0, RenderMode::Soft);
        let out = render(&s, &lens).unwrap();
        let g = backward(&s, &lens, &out, &ImageBuffer::filled(9, 9, 3, 1.0)).unwrap();
        let prep = LayerPrep::new(&s.layers[0], &lens, out.radius);
        // dL/dI(y) = a(y) sum_x S K / A O / W(x)
        for (px, py) in [(0, 0), (4, 4), (8, 2)] {
            let mut expect = 0.0;
            let (x0, y0, x1, y1) = prep.window(px, py);
            for qy in y0..=y1 {
                for qx in x0..=x1 {
                    let (dx, dy) = (qx as f64 - px as f64, qy as f64 - py as f64);
                    let e = kernel_partials(
                        &PairInput {
                            d_recv: prep.drel[qy * 9 + qx],
                            d_src: prep.drel[py * 9 + px],
                            distance: (dx * dx + dy * dy).sqrt(),
                            alpha_src: 1.0,
                            kernel: 1.0,
                            blur_scale: 3.0,
                            max_radius: out.radius as f64,
                        },
                        &lens.soft,
                    );
                    expect += e.weight * e.occlusion / out.per_layer_denominator[0].get(qx, qy, 0);
                }
            }
            for c in 0..3 {
                let got = g.layers[0].color.get(px, py, c);
                assert!(got >= 0.0);
                assert!(
                    (got - expect).abs() < 1e-12 * expect.max(1.0),
                    "{got} {expect}"
                );
            }
        }
    }
}
