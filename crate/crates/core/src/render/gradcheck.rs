//! Central finite-difference check of [`backward`](super::backward).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{backward, render_unchecked, PixelRect, RenderError, RenderOptions};
use crate::buffer::ImageBuffer;
use crate::kernels::{visibility_disk_count, MIN_AREA_RADIUS};
use crate::scene::{
    coc_radius, validate_scene, LayeredScene, LensConfig, RadiusPolicy, RenderMode,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamFamily {
    Color,
    Disparity,
    Alpha,
}

impl ParamFamily {
    pub const ALL: [ParamFamily; 3] = [
        ParamFamily::Color,
        ParamFamily::Disparity,
        ParamFamily::Alpha,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamFamily::Color => "color",
            ParamFamily::Disparity => "disparity",
            ParamFamily::Alpha => "alpha",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradcheckConfig {
    /// Finite-difference step.
    pub eps: f64,
    /// Relative error bound per entry.
    pub tol: f64,
    /// Seed of the random upstream gradient.
    pub seed: u64,
    /// Fraction of non-degenerate entries that must be within `tol`.
    pub pass_fraction: f64,
    /// Entries whose window holds a normaliser below this are skipped.
    pub min_weight: f64,
    /// Relative errors are measured against at least this fraction of the
    /// largest analytic magnitude in the family.
    pub rel_floor: f64,
    /// Check the exact gradient rather than the leaky one.
    pub disable_leak: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            tol: 1e-3,
            seed: 0,
            pass_fraction: 0.99,
            min_weight: 1e-6,
            rel_floor: 1e-6,
            disable_leak: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FamilyReport {
    pub family: ParamFamily,
    pub checked: usize,
    pub excluded: usize,
    pub max_rel: f64,
    pub median_rel: f64,
    /// Fraction of checked entries with relative error within `tol`.
    pub within_tol: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub radius: usize,
    pub families: Vec<FamilyReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.families.iter().all(|f| f.pass)
    }

    pub fn family(&self, family: ParamFamily) -> &FamilyReport {
        self.families
            .iter()
            .find(|f| f.family == family)
            .expect("every family is reported")
    }
}

struct Entry {
    family: ParamFamily,
    analytic: f64,
    /// `None` when the step crosses a kink.
    numeric: Option<f64>,
}

/// Compares the analytic gradient of `<u, render(scene)>` for a seeded
/// random `u` against central differences, parameter by parameter.
pub fn gradcheck(
    scene: &LayeredScene,
    lens: &LensConfig,
    cfg: &GradcheckConfig,
) -> Result<GradcheckReport, RenderError> {
    validate_scene(scene)?;
    lens.validate()?;
    if lens.mode != RenderMode::Soft {
        return Err(RenderError::ModeMismatch);
    }
    let radius = lens.resolve_radius(scene);
    let mut lens = lens.clone().with_max_radius(RadiusPolicy::Fixed(radius));
    if cfg.disable_leak {
        lens.soft.leak_slope = 0.0;
    }
    let (w, h) = (scene.width(), scene.height());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let upstream = ImageBuffer::from_fn(w, h, 3, |_, _, _| rng.gen_range(-1.0..=1.0));

    let out = render_unchecked(scene, &lens, radius, RenderOptions::default());
    let grads = backward(scene, &lens, &out, &upstream)?;

    let sites: Vec<(usize, usize)> = (0..scene.len())
        .flat_map(|l| (0..w * h).map(move |p| (l, p)))
        .collect();
    let entries: Vec<Entry> = sites
        .par_iter()
        .flat_map_iter(|&(l, p)| {
            let (x, y) = (p % w, p / w);
            let rect = PixelRect::around(x, y, radius, w, h);
            let low_weight = (rect.y0..rect.y1).any(|yy| {
                (rect.x0..rect.x1)
                    .any(|xx| out.per_layer_denominator[l].get(xx, yy, 0) < cfg.min_weight)
            });
            let probe = |edit: &dyn Fn(&mut LayeredScene, f64)| -> f64 {
                let mut plus = scene.clone();
                edit(&mut plus, cfg.eps);
                let mut minus = scene.clone();
                edit(&mut minus, -cfg.eps);
                (region_loss(&plus, &lens, radius, rect, &upstream)
                    - region_loss(&minus, &lens, radius, rect, &upstream))
                    / (2.0 * cfg.eps)
            };
            let g = &grads.layers[l];
            let mut found = Vec::with_capacity(5);
            for c in 0..3 {
                let numeric = (!low_weight).then(|| {
                    probe(&|s: &mut LayeredScene, step| {
                        let v = s.layers[l].color.get(x, y, c);
                        s.layers[l].color.set(x, y, c, v + step);
                    })
                });
                found.push(Entry {
                    family: ParamFamily::Color,
                    analytic: g.color.get(x, y, c),
                    numeric,
                });
            }
            let d = scene.layers[l].disparity.get(x, y, 0);
            let smooth =
                !low_weight && !disparity_step_is_degenerate(d, &lens, radius, w, h, x, y, cfg.eps);
            found.push(Entry {
                family: ParamFamily::Disparity,
                analytic: g.disparity.get(x, y, 0),
                numeric: smooth.then(|| {
                    probe(&|s: &mut LayeredScene, step| {
                        s.layers[l].disparity.set(x, y, 0, d + step);
                    })
                }),
            });
            let a = scene.layers[l].alpha.get(x, y, 0);
            found.push(Entry {
                family: ParamFamily::Alpha,
                analytic: g.alpha.get(x, y, 0),
                numeric: (!low_weight).then(|| {
                    probe(&|s: &mut LayeredScene, step| {
                        s.layers[l].alpha.set(x, y, 0, a + step);
                    })
                }),
            });
            found
        })
        .collect();

    let families = ParamFamily::ALL
        .iter()
        .map(|&family| summarize(family, &entries, cfg))
        .collect();
    Ok(GradcheckReport { radius, families })
}

fn region_loss(
    scene: &LayeredScene,
    lens: &LensConfig,
    radius: usize,
    rect: PixelRect,
    upstream: &ImageBuffer,
) -> f64 {
    let out = render_unchecked(
        scene,
        lens,
        radius,
        RenderOptions {
            region: Some(rect),
            ..RenderOptions::default()
        },
    );
    let mut sum = 0.0;
    for y in rect.y0..rect.y1 {
        for x in rect.x0..rect.x1 {
            for c in 0..3 {
                sum += upstream.get(x, y, c) * out.bokeh.get(x, y, c);
            }
        }
    }
    sum
}

/// True when moving the disparity by `+-eps` crosses a point where the
/// render is not differentiable: the sign of `d_rel`, the radius clamp, the
/// area floor, a change of the visibility disk, or a change of any sampled
/// aperture-mask value.
#[allow(clippy::too_many_arguments)]
fn disparity_step_is_degenerate(
    d: f64,
    lens: &LensConfig,
    radius: usize,
    w: usize,
    h: usize,
    x: usize,
    y: usize,
    eps: f64,
) -> bool {
    let rmax = radius as f64;
    let lo = d - eps - lens.focus_disparity;
    let hi = d + eps - lens.focus_disparity;
    if lo <= 0.0 && hi >= 0.0 {
        return true;
    }
    let (ulo, uhi) = (lens.blur_scale * lo.abs(), lens.blur_scale * hi.abs());
    if (ulo < rmax) != (uhi < rmax) {
        return true;
    }
    let (rlo, rhi) = (
        coc_radius(lo, lens.blur_scale, rmax),
        coc_radius(hi, lens.blur_scale, rmax),
    );
    if (rlo > MIN_AREA_RADIUS) != (rhi > MIN_AREA_RADIUS) {
        return true;
    }
    if visibility_disk_count(w, h, x, y, rlo) != visibility_disk_count(w, h, x, y, rhi) {
        return true;
    }
    if !lens.kernel.is_circle() {
        let r = radius as isize;
        for dy in -r..=r {
            for dx in -r..=r {
                let (fx, fy) = (dx as f64, dy as f64);
                if lens.kernel.sample(fx, fy, rlo) != lens.kernel.sample(fx, fy, rhi) {
                    return true;
                }
            }
        }
    }
    false
}

fn summarize(family: ParamFamily, entries: &[Entry], cfg: &GradcheckConfig) -> FamilyReport {
    let mine: Vec<&Entry> = entries.iter().filter(|e| e.family == family).collect();
    let scale = mine
        .iter()
        .fold(0.0_f64, |m, e| m.max(e.analytic.abs()))
        .max(f64::MIN_POSITIVE);
    let floor = cfg.rel_floor * scale;
    let mut rels: Vec<f64> = mine
        .iter()
        .filter_map(|e| {
            e.numeric.map(|n| {
                let denom = e.analytic.abs().max(n.abs()).max(floor);
                (e.analytic - n).abs() / denom
            })
        })
        .collect();
    rels.sort_by(f64::total_cmp);
    let checked = rels.len();
    let excluded = mine.len() - checked;
    let within = rels.iter().filter(|&&r| r <= cfg.tol).count();
    let within_tol = if checked == 0 {
        1.0
    } else {
        within as f64 / checked as f64
    };
    FamilyReport {
        family,
        checked,
        excluded,
        max_rel: rels.last().copied().unwrap_or(0.0),
        median_rel: if checked == 0 { 0.0 } else { rels[checked / 2] },
        within_tol,
        pass: within_tol >= cfg.pass_fraction,
    }
}
