//! Depth-from-defocus objective:
//!
//! ```text
//! L = l1 * mean|pred - target| + grad * G(D, I) + hssim * (1 - mean_w SSIM_w(target, pred))
//! G = 1/N sum_levels [ mean |dx D| exp(-|dx I|) + mean |dy D| exp(-|dy I|) ]
//! ```
//!
//! `|dx I|` is averaged over color channels; levels are 2x box
//! downsamplings of both `D` and `I`.

use serde::{Deserialize, Serialize};

use super::DfdError;
use crate::buffer::ImageBuffer;
use crate::metrics::ssim_with_grad;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub l1: f64,
    pub grad: f64,
    pub hssim: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            l1: 1.0,
            grad: 0.1,
            hssim: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub weights: LossWeights,
    /// Odd SSIM window sizes, equally weighted.
    pub windows: Vec<usize>,
    pub pyramid_levels: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            windows: vec![11, 21, 31],
            pyramid_levels: 4,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), DfdError> {
        let w = self.weights;
        if [w.l1, w.grad, w.hssim]
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(DfdError::InvalidProblem("loss weights must be >= 0".into()));
        }
        if self.windows.is_empty() || self.windows.iter().any(|&k| k < 3 || k % 2 == 0) {
            return Err(DfdError::InvalidProblem(
                "SSIM windows must be odd and >= 3".into(),
            ));
        }
        if self.pyramid_levels == 0 {
            return Err(DfdError::InvalidProblem(
                "pyramid needs at least one level".into(),
            ));
        }
        Ok(())
    }
}

/// Loss terms (unweighted) and gradients of the weighted total.
#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub l1: f64,
    pub grad: f64,
    /// `1 - mean SSIM`
    pub hssim: f64,
    pub d_pred: ImageBuffer,
    pub d_disparity: ImageBuffer,
}

/// Hierarchical SSIM and its gradient with respect to `pred`.
pub fn hssim(
    target: &ImageBuffer,
    pred: &ImageBuffer,
    windows: &[usize],
) -> Result<(f64, ImageBuffer), DfdError> {
    let mut total = 0.0;
    let mut grad = ImageBuffer::new(pred.width(), pred.height(), pred.channels());
    for &win in windows {
        let (v, g) = ssim_with_grad(target, pred, win)?;
        total += v;
        for (a, b) in grad.data_mut().iter_mut().zip(g.data()) {
            *a += b;
        }
    }
    let n = windows.len() as f64;
    Ok((total / n, grad.map(|v| v / n)))
}

pub fn loss(
    pred: &ImageBuffer,
    target: &ImageBuffer,
    disparity: &ImageBuffer,
    image: &ImageBuffer,
    cfg: &LossConfig,
) -> Result<LossValue, DfdError> {
    if !pred.same_shape(target) || !pred.same_shape(image) || !disparity.same_extent(pred) {
        return Err(DfdError::ShapeMismatch(
            "prediction, target, image and disparity must share dimensions".into(),
        ));
    }
    let wts = cfg.weights;
    let n = pred.data().len() as f64;
    let mut d_pred = ImageBuffer::new(pred.width(), pred.height(), pred.channels());
    let mut l1 = 0.0;
    for ((g, &p), &t) in d_pred
        .data_mut()
        .iter_mut()
        .zip(pred.data())
        .zip(target.data())
    {
        let diff = p - t;
        l1 += diff.abs();
        *g = wts.l1 * sign0(diff) / n;
    }
    l1 /= n;

    let (grad, grad_d) = smoothness(disparity, image, cfg.pyramid_levels);
    let d_disparity = grad_d.map(|v| wts.grad * v);

    let mut hs = 0.0;
    if wts.hssim > 0.0 {
        let (s, g) = hssim(target, pred, &cfg.windows)?;
        hs = 1.0 - s;
        for (a, b) in d_pred.data_mut().iter_mut().zip(g.data()) {
            *a -= wts.hssim * b;
        }
    }
    Ok(LossValue {
        total: wts.l1 * l1 + wts.grad * grad + wts.hssim * hs,
        l1,
        grad,
        hssim: hs,
        d_pred,
        d_disparity,
    })
}

#[inline]
fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// 2x box downsampling; odd trailing rows and columns are dropped.
fn downsample(buf: &ImageBuffer) -> ImageBuffer {
    let (w, h, ch) = (buf.width() / 2, buf.height() / 2, buf.channels());
    ImageBuffer::from_fn(w, h, ch, |x, y, c| {
        0.25 * (buf.get(2 * x, 2 * y, c)
            + buf.get(2 * x + 1, 2 * y, c)
            + buf.get(2 * x, 2 * y + 1, c)
            + buf.get(2 * x + 1, 2 * y + 1, c))
    })
}

fn upsample_adjoint(g: &ImageBuffer, w: usize, h: usize) -> ImageBuffer {
    let mut out = ImageBuffer::new(w, h, g.channels());
    for y in 0..g.height() {
        for x in 0..g.width() {
            for c in 0..g.channels() {
                let v = 0.25 * g.get(x, y, c);
                for (sx, sy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    out.set(2 * x + sx, 2 * y + sy, c, v);
                }
            }
        }
    }
    out
}

/// Edge-aware smoothness of one level and its gradient.
fn smoothness_level(d: &ImageBuffer, img: &ImageBuffer) -> (f64, ImageBuffer) {
    let (w, h, ch) = (d.width(), d.height(), img.channels());
    let mut grad = ImageBuffer::new(w, h, 1);
    let mut value = 0.0;
    let edge = |x0: usize, y0: usize, x1: usize, y1: usize| {
        let m: f64 = (0..ch)
            .map(|c| (img.get(x1, y1, c) - img.get(x0, y0, c)).abs())
            .sum::<f64>();
        (-m / ch as f64).exp()
    };
    if w > 1 {
        let n = ((w - 1) * h) as f64;
        for y in 0..h {
            for x in 0..w - 1 {
                let diff = d.get(x + 1, y, 0) - d.get(x, y, 0);
                let e = edge(x, y, x + 1, y);
                value += diff.abs() * e / n;
                let g = sign0(diff) * e / n;
                grad.data_mut()[y * w + x + 1] += g;
                grad.data_mut()[y * w + x] -= g;
            }
        }
    }
    if h > 1 {
        let n = (w * (h - 1)) as f64;
        for y in 0..h - 1 {
            for x in 0..w {
                let diff = d.get(x, y + 1, 0) - d.get(x, y, 0);
                let e = edge(x, y, x, y + 1);
                value += diff.abs() * e / n;
                let g = sign0(diff) * e / n;
                grad.data_mut()[(y + 1) * w + x] += g;
                grad.data_mut()[y * w + x] -= g;
            }
        }
    }
    (value, grad)
}

/// Pyramid-averaged smoothness `G` and `dG/dD`. Levels stop early once a
/// side would drop below 2 pixels.
pub fn smoothness(
    disparity: &ImageBuffer,
    image: &ImageBuffer,
    levels: usize,
) -> (f64, ImageBuffer) {
    let mut ds = vec![disparity.clone()];
    let mut is = vec![image.clone()];
    while ds.len() < levels {
        let last = ds.last().expect("non-empty");
        if last.width() < 4 || last.height() < 4 {
            break;
        }
        let next_d = downsample(last);
        let next_i = downsample(is.last().expect("non-empty"));
        ds.push(next_d);
        is.push(next_i);
    }
    let count = ds.len() as f64;
    let mut total = 0.0;
    let mut carry: Option<ImageBuffer> = None;
    for k in (0..ds.len()).rev() {
        let (v, mut g) = smoothness_level(&ds[k], &is[k]);
        total += v / count;
        for a in g.data_mut() {
            *a /= count;
        }
        if let Some(c) = carry.take() {
            let up = upsample_adjoint(&c, ds[k].width(), ds[k].height());
            for (a, b) in g.data_mut().iter_mut().zip(up.data()) {
                *a += b;
            }
        }
        carry = Some(g);
    }
    (total, carry.expect("at least one level"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random(w: usize, h: usize, ch: usize, seed: u64) -> ImageBuffer {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ImageBuffer::from_fn(w, h, ch, |_, _, _| rng.gen())
    }

    #[test]
    fn perfect_fit_on_flat_depth_is_zero() {
        let y = random(32, 32, 3, 1);
        let d = ImageBuffer::filled(32, 32, 1, 0.3);
        let v = loss(&y, &y, &d, &y, &LossConfig::default()).unwrap();
        assert!(v.total.abs() < 1e-12, "{}", v.total);
    }

    #[test]
    fn constant_offset_l1_only() {
        let y = random(16, 16, 3, 2).map(|v| 0.8 * v);
        let pred = y.map(|v| v + 0.1);
        let cfg = LossConfig {
            weights: LossWeights {
                l1: 2.0,
                grad: 0.0,
                hssim: 0.0,
            },
            ..LossConfig::default()
        };
        let d = random(16, 16, 1, 3);
        let v = loss(&pred, &y, &d, &y, &cfg).unwrap();
        assert!((v.total - 0.2).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = random(16, 16, 3, 4);
        let d = random(15, 16, 1, 4);
        let err = loss(&a, &a, &d, &a, &LossConfig::default()).unwrap_err();
        assert_eq!(err.code(), "SHAPE_MISMATCH");
    }

    #[test]
    fn window_too_large_is_reported() {
        let a = random(16, 16, 3, 5);
        let d = random(16, 16, 1, 5);
        let err = loss(&a, &a.map(|v| v * 0.5), &d, &a, &LossConfig::default()).unwrap_err();
        assert_eq!(err.code(), "WINDOW_TOO_LARGE");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (w, h) = (35, 33);
        let target = random(w, h, 3, 6);
        let pred = random(w, h, 3, 7);
        let image = random(w, h, 3, 8);
        let d = random(w, h, 1, 9);
        let cfg = LossConfig {
            windows: vec![5, 11],
            ..LossConfig::default()
        };
        let base = loss(&pred, &target, &d, &image, &cfg).unwrap();
        let step = 1e-6;
        for &(x, y, c) in &[(0, 0, 0), (17, 16, 1), (34, 32, 2), (3, 20, 0)] {
            let f = |v: f64| {
                let mut p = pred.clone();
                p.set(x, y, c, v);
                loss(&p, &target, &d, &image, &cfg).unwrap().total
            };
            let v0 = pred.get(x, y, c);
            let fd = (f(v0 + step) - f(v0 - step)) / (2.0 * step);
            let an = base.d_pred.get(x, y, c);
            assert!(
                (an - fd).abs() <= 1e-3 * an.abs().max(fd.abs()),
                "pred {an} {fd}"
            );
        }
        for &(x, y) in &[(0, 0), (12, 9), (34, 32), (30, 2)] {
            let f = |v: f64| {
                let mut dd = d.clone();
                dd.set(x, y, 0, v);
                loss(&pred, &target, &dd, &image, &cfg).unwrap().total
            };
            let v0 = d.get(x, y, 0);
            let fd = (f(v0 + step) - f(v0 - step)) / (2.0 * step);
            let an = base.d_disparity.get(x, y, 0);
            assert!(
                (an - fd).abs() <= 1e-3 * an.abs().max(fd.abs()),
                "disp {an} {fd}"
            );
        }
    }

    #[test]
    fn transposition_covariance() {
        let target = random(24, 22, 3, 10);
        let pred = random(24, 22, 3, 11);
        let image = random(24, 22, 3, 12);
        let d = random(24, 22, 1, 13);
        let cfg = LossConfig {
            windows: vec![5, 11],
            ..LossConfig::default()
        };
        let a = loss(&pred, &target, &d, &image, &cfg).unwrap();
        let b = loss(
            &pred.transpose(),
            &target.transpose(),
            &d.transpose(),
            &image.transpose(),
            &cfg,
        )
        .unwrap();
        assert!((a.total - b.total).abs() < 1e-12);
        for (u, v) in a
            .d_disparity
            .transpose()
            .data()
            .iter()
            .zip(b.d_disparity.data())
        {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn hssim_of_identical_images_is_one() {
        let a = random(40, 40, 3, 14);
        let (v, g) = hssim(&a, &a, &[11, 21, 31]).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
        assert!(g.data().iter().all(|x| x.abs() < 1e-9));
    }
}
