//! Shared helpers for the integration suites.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use layered_bokeh::kernels::{
    coc_area, energy_weight, occlusion_hard, occlusion_soft, scatter_hard, scatter_soft,
    visibility_radius,
};
use layered_bokeh::render::WEIGHT_EPS;
use layered_bokeh::scene::coc_radius;
use layered_bokeh::{ImageBuffer, Layer, LayeredScene, LensConfig, RenderMode};

/// Direct evaluation of the layered render: every source against every
/// receiver, sources visited in row-major order, no windowing.
pub fn brute_force_render(scene: &LayeredScene, lens: &LensConfig, radius: usize) -> ImageBuffer {
    let (w, h) = (scene.width(), scene.height());
    let rmax = radius as f64;
    let n = w * h;
    let mut gathered = Vec::new();
    for layer in &scene.layers {
        let drel: Vec<f64> = layer
            .disparity
            .data()
            .iter()
            .map(|d| d - lens.focus_disparity)
            .collect();
        let coc: Vec<f64> = drel
            .iter()
            .map(|&d| coc_radius(d, lens.blur_scale, rmax))
            .collect();
        let mut num = vec![[0.0; 3]; n];
        let mut den = vec![0.0; n];
        let mut vis = vec![0.0; n];
        for recv in 0..n {
            let (x, y) = ((recv % w) as isize, (recv / w) as isize);
            for src in 0..n {
                let a = layer.alpha.data()[src];
                if a == 0.0 {
                    continue;
                }
                let (sx, sy) = ((src % w) as isize, (src / w) as isize);
                let (dx, dy) = (x - sx, y - sy);
                let r = coc[src];
                let k = lens.kernel.sample(dx as f64, dy as f64, r);
                let t = match lens.mode {
                    RenderMode::Hard => {
                        let s = scatter_hard(dx, dy, r, rmax);
                        if s == 0.0 {
                            continue;
                        }
                        energy_weight(s, k, a, r) * occlusion_hard(drel[recv], drel[src])
                    }
                    RenderMode::Soft => {
                        let dist = ((dx * dx + dy * dy) as f64).sqrt();
                        let s = scatter_soft(dist, r, &lens.soft);
                        s * k * a / coc_area(r) * occlusion_soft(drel[recv], drel[src], &lens.soft)
                    }
                };
                let colour = &layer.color.data()[src * 3..src * 3 + 3];
                for (acc, v) in num[recv].iter_mut().zip(colour) {
                    *acc += v * t;
                }
                den[recv] += t;
            }
            let rad = visibility_radius(coc[recv]);
            let (mut sum, mut count) = (0.0, 0usize);
            for q in 0..n {
                let (qx, qy) = ((q % w) as isize, (q / w) as isize);
                if (((qx - x).pow(2) + (qy - y).pow(2)) as f64) < rad * rad {
                    sum += layer.alpha.data()[q];
                    count += 1;
                }
            }
            vis[recv] = sum / count as f64;
        }
        gathered.push((num, den, vis));
    }
    let mut out = ImageBuffer::new(w, h, 3);
    for p in 0..n {
        let mut transmit = 1.0;
        let mut px = [0.0; 3];
        for (num, den, vis) in &gathered {
            let v = if den[p] > WEIGHT_EPS { vis[p] } else { 0.0 };
            let c = v * transmit;
            transmit *= 1.0 - v;
            let norm = den[p].max(WEIGHT_EPS);
            for ch in 0..3 {
                px[ch] += c * num[p][ch] / norm;
            }
        }
        out.data_mut()[p * 3..p * 3 + 3].copy_from_slice(&px);
    }
    out
}

/// Random scene with `layers` layers: partial alpha in front, an opaque
/// back layer, disparities spread on both sides of zero.
pub fn random_scene(w: usize, h: usize, layers: usize, seed: u64) -> LayeredScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = (0..layers)
        .map(|l| {
            let color = ImageBuffer::from_fn(w, h, 3, |_, _, _| rng.gen());
            let disparity = ImageBuffer::from_fn(w, h, 1, |_, _, _| rng.gen_range(-0.8..0.8));
            if l + 1 == layers {
                Layer::opaque(color, disparity)
            } else {
                let alpha = ImageBuffer::from_fn(w, h, 1, |_, _, _| {
                    if rng.gen_bool(0.3) {
                        0.0
                    } else {
                        rng.gen_range(0.0..=1.0)
                    }
                });
                Layer::new(color, alpha, disparity)
            }
        })
        .collect();
    LayeredScene::new(layers)
}

pub fn max_abs_diff(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}
