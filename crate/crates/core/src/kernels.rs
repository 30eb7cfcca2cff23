//! Pointwise scatter, occlusion and visibility terms with their partial
//! derivatives.
//!
//! Naming: a *source* pixel scatters energy onto a *receiver* pixel. Depths
//! are relative disparities (`d - d_f`), positive in front of the focal
//! plane.
//!
//! Smooth surrogates used in [`RenderMode::Soft`](crate::scene::RenderMode):
//!
//! ```text
//! O(src -> recv) = 1 - exp(-c1 d_recv^2) * 1/2 (1 - tanh(c2 (d_src - d_recv + c3)))
//! S(src -> recv) = 1 / (1 + g exp(-s (r_src + m - |p_recv - p_src|)))
//! w(src -> recv) = S K a_src / A(r_src),    A(r) = pi max(r, r_min)^2
//! ```

use crate::buffer::ImageBuffer;
use crate::scene::{coc_radius, SoftParams};

/// `|d_rel|` below which a receiver counts as on the focal plane.
pub const FOCAL_EPS: f64 = 1e-3;
/// Minimum depth gap for an on-focal receiver to block a source.
pub const ORDER_EPS: f64 = 0.0;
/// Floor on the CoC radius used for the energy-normalising area.
pub const MIN_AREA_RADIUS: f64 = 0.5;

/// Hard on-focal occlusion with explicit tolerances: 0 when the receiver is
/// on the focal plane and the source lies behind it, else 1.
#[inline]
pub fn occlusion_hard_with(d_recv: f64, d_src: f64, eps_focal: f64, eps_order: f64) -> f64 {
    if d_recv.abs() < eps_focal && d_recv - d_src > eps_order {
        0.0
    } else {
        1.0
    }
}

#[inline]
pub fn occlusion_hard(d_recv: f64, d_src: f64) -> f64 {
    occlusion_hard_with(d_recv, d_src, FOCAL_EPS, ORDER_EPS)
}

/// Smooth on-focal occlusion in `[0, 1]`.
#[inline]
pub fn occlusion_soft(d_recv: f64, d_src: f64, soft: &SoftParams) -> f64 {
    let focal = (-soft.occ_focal_sharpness * d_recv * d_recv).exp();
    let step =
        0.5 * (1.0 - (soft.occ_step_sharpness * (d_src - d_recv + soft.occ_step_offset)).tanh());
    1.0 - focal * step
}

/// Hard scatter membership: a source reaches receivers strictly inside its
/// CoC (clamped to `max_radius`) and always reaches itself.
#[inline]
pub fn scatter_hard(dx: isize, dy: isize, r_src: f64, max_radius: f64) -> f64 {
    if dx == 0 && dy == 0 {
        return 1.0;
    }
    let dist = ((dx * dx + dy * dy) as f64).sqrt();
    if dist < r_src.min(max_radius) {
        1.0
    } else {
        0.0
    }
}

/// Smooth scatter membership for a receiver at pixel `distance` from a
/// source with CoC radius `r_src`.
#[inline]
pub fn scatter_soft(distance: f64, r_src: f64, soft: &SoftParams) -> f64 {
    let u = soft.scat_sharpness * (r_src + soft.scat_margin - distance);
    1.0 / (1.0 + soft.scat_gain * (-u).exp())
}

/// Energy-normalising CoC area.
#[inline]
pub fn coc_area(r: f64) -> f64 {
    let r = r.max(MIN_AREA_RADIUS);
    std::f64::consts::PI * r * r
}

/// Fraction of a source's energy landing on one receiver.
#[inline]
pub fn energy_weight(scatter: f64, kernel: f64, alpha_src: f64, r_src: f64) -> f64 {
    scatter * kernel * alpha_src / coc_area(r_src)
}

/// Radius of the visibility disk for a CoC radius.
#[inline]
pub fn visibility_radius(r: f64) -> f64 {
    r.max(0.5)
}

/// Number of in-image pixels strictly inside the visibility disk of radius
/// `max(r, 0.5)` around `(x, y)`.
pub fn visibility_disk_count(width: usize, height: usize, x: usize, y: usize, r: f64) -> usize {
    let rad = visibility_radius(r);
    let rad2 = rad * rad;
    let reach = rad.ceil() as isize;
    let (w, h) = (width as isize, height as isize);
    let (cx, cy) = (x as isize, y as isize);
    let mut count = 0;
    for sy in (cy - reach).max(0)..=(cy + reach).min(h - 1) {
        for sx in (cx - reach).max(0)..=(cx + reach).min(w - 1) {
            let (dx, dy) = (sx - cx, sy - cy);
            if ((dx * dx + dy * dy) as f64) < rad2 {
                count += 1;
            }
        }
    }
    count
}

/// Mean alpha over the pixels strictly inside the disk of radius
/// `max(r, 0.5)` centred on `(x, y)`, clipped to the image.
pub fn visibility(alpha: &ImageBuffer, x: usize, y: usize, r: f64) -> f64 {
    let rad = visibility_radius(r);
    let rad2 = rad * rad;
    let reach = rad.ceil() as isize;
    let (w, h) = (alpha.width() as isize, alpha.height() as isize);
    let (cx, cy) = (x as isize, y as isize);
    let mut sum = 0.0;
    let mut count = 0usize;
    for sy in (cy - reach).max(0)..=(cy + reach).min(h - 1) {
        for sx in (cx - reach).max(0)..=(cx + reach).min(w - 1) {
            let (dx, dy) = (sx - cx, sy - cy);
            if ((dx * dx + dy * dy) as f64) < rad2 {
                sum += alpha.get(sx as usize, sy as usize, 0);
                count += 1;
            }
        }
    }
    sum / count as f64
}

/// Replaces a non-negative soft-step derivative by `leak` when it is smaller.
#[inline]
pub fn leaky(derivative: f64, leak: f64) -> f64 {
    derivative.max(leak)
}

/// Values and first derivatives of the soft kernel terms for one
/// source/receiver pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelEval {
    pub scatter: f64,
    pub occlusion: f64,
    pub weight: f64,
    /// `dS / d d_src`
    pub dscatter_dsrc: f64,
    /// `dO / d d_recv`
    pub docc_drecv: f64,
    /// `dO / d d_src`
    pub docc_dsrc: f64,
    /// `dw / d d_src`
    pub dweight_dsrc: f64,
    /// `dw / d a_src`
    pub dweight_dalpha: f64,
}

/// Inputs of [`kernel_partials`].
#[derive(Clone, Copy, Debug)]
pub struct PairInput {
    pub d_recv: f64,
    pub d_src: f64,
    /// Euclidean pixel distance between source and receiver.
    pub distance: f64,
    pub alpha_src: f64,
    pub kernel: f64,
    pub blur_scale: f64,
    pub max_radius: f64,
}

/// `dr/dd` of the clamped CoC radius with `sign(0) = 0`.
#[inline]
pub fn coc_radius_derivative(d_rel: f64, blur_scale: f64, max_radius: f64) -> f64 {
    if blur_scale * d_rel.abs() < max_radius {
        blur_scale * sign0(d_rel)
    } else {
        0.0
    }
}

/// `dA/dd` of [`coc_area`] composed with the clamped CoC radius.
#[inline]
pub fn coc_area_derivative(d_rel: f64, blur_scale: f64, max_radius: f64) -> f64 {
    let r = coc_radius(d_rel, blur_scale, max_radius);
    if r > MIN_AREA_RADIUS {
        2.0 * std::f64::consts::PI * r * coc_radius_derivative(d_rel, blur_scale, max_radius)
    } else {
        0.0
    }
}

#[inline]
pub fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Closed-form partials of the soft kernels. Soft-step derivatives below
/// `soft.leak_slope` are raised to it.
pub fn kernel_partials(p: &PairInput, soft: &SoftParams) -> KernelEval {
    let r = coc_radius(p.d_src, p.blur_scale, p.max_radius);
    let dr = coc_radius_derivative(p.d_src, p.blur_scale, p.max_radius);
    let area = coc_area(r);
    let darea = coc_area_derivative(p.d_src, p.blur_scale, p.max_radius);

    let scatter = scatter_soft(p.distance, r, soft);
    let dscatter_du = leaky(scatter * (1.0 - scatter), soft.leak_slope);
    let dscatter_dsrc = dscatter_du * soft.scat_sharpness * dr;

    let focal = (-soft.occ_focal_sharpness * p.d_recv * p.d_recv).exp();
    let z = soft.occ_step_sharpness * (p.d_src - p.d_recv + soft.occ_step_offset);
    let step = 0.5 * (1.0 - z.tanh());
    let occlusion = 1.0 - focal * step;
    // dO/dz = focal * sech^2(z) / 2
    let sech = 1.0 / z.cosh();
    let docc_dz = leaky(0.5 * focal * sech * sech, soft.leak_slope);
    let docc_dsrc = soft.occ_step_sharpness * docc_dz;
    let docc_drecv = 2.0 * soft.occ_focal_sharpness * p.d_recv * focal * step
        - soft.occ_step_sharpness * docc_dz;

    let weight = scatter * p.kernel * p.alpha_src / area;
    let dweight_dsrc =
        p.kernel * p.alpha_src * (dscatter_dsrc * area - scatter * darea) / (area * area);
    let dweight_dalpha = scatter * p.kernel / area;

    KernelEval {
        scatter,
        occlusion,
        weight,
        dscatter_dsrc,
        docc_drecv,
        docc_dsrc,
        dweight_dsrc,
        dweight_dalpha,
    }
}
