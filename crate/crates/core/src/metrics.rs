//! Full-reference image quality metrics.
//!
//! Argument order is `(prediction, reference)` wherever it matters
//! (`rmse_s`, and `psnr` only in name).

use serde::Serialize;
use thiserror::Error;

use crate::buffer::ImageBuffer;

/// PSNR reported for identical images.
pub const PSNR_IDENTICAL_DB: f64 = 99.0;
pub const SSIM_C1: f64 = 1e-4;
pub const SSIM_C2: f64 = 9e-4;
pub const SSIM_DEFAULT_WINDOW: usize = 11;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("zero variance input")]
    ZeroVariance,
    #[error("window {window} exceeds image extent {width}x{height}")]
    WindowTooLarge {
        window: usize,
        width: usize,
        height: usize,
    },
    #[error("window {0} must be odd and >= 3")]
    BadWindow(usize),
}

impl MetricError {
    pub fn code(&self) -> &'static str {
        match self {
            MetricError::ShapeMismatch(_) => "SHAPE_MISMATCH",
            MetricError::ZeroVariance => "ZERO_VARIANCE",
            MetricError::WindowTooLarge { .. } => "WINDOW_TOO_LARGE",
            MetricError::BadWindow(_) => "BAD_WINDOW",
        }
    }
}

fn check_shape(a: &ImageBuffer, b: &ImageBuffer) -> Result<(), MetricError> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(MetricError::ShapeMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )))
    }
}

pub fn rmse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, MetricError> {
    check_shape(a, b)?;
    let n = a.data().len() as f64;
    let sse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).powi(2))
        .sum();
    Ok((sse / n).sqrt())
}

/// Peak signal-to-noise ratio for unit peak, in dB.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, MetricError> {
    let e = rmse(a, b)?;
    Ok(if e == 0.0 {
        PSNR_IDENTICAL_DB
    } else {
        20.0 * (1.0 / e).log10()
    })
}

/// RMSE after the least-squares scale `s* = <pred, target> / <pred, pred>`
/// is applied to the prediction.
pub fn rmse_s(pred: &ImageBuffer, target: &ImageBuffer) -> Result<f64, MetricError> {
    check_shape(pred, target)?;
    let aa: f64 = pred.data().iter().map(|v| v * v).sum();
    if aa == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    let ab: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(x, y)| x * y)
        .sum();
    let s = ab / aa;
    rmse(&pred.map(|v| s * v), target)
}

/// Zero-mean normalised cross-correlation over all samples.
pub fn zncc(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, MetricError> {
    check_shape(a, b)?;
    let n = a.data().len() as f64;
    let ma = a.data().iter().sum::<f64>() / n;
    let mb = b.data().iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.data().iter().zip(b.data()) {
        let (u, v) = (x - ma, y - mb);
        sab += u * v;
        saa += u * u;
        sbb += v * v;
    }
    if saa <= 1e-24 * n || sbb <= 1e-24 * n {
        return Err(MetricError::ZeroVariance);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Mean SSIM with a normalised Gaussian window of `window` taps
/// (`sigma = 1.5 window / 11`), evaluated where the window fits entirely
/// inside the image and averaged over channels.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer, window: usize) -> Result<f64, MetricError> {
    ssim_impl(a, b, window, false).map(|(v, _)| v)
}

/// SSIM value and its gradient with respect to `pred`.
pub fn ssim_with_grad(
    reference: &ImageBuffer,
    pred: &ImageBuffer,
    window: usize,
) -> Result<(f64, ImageBuffer), MetricError> {
    ssim_impl(reference, pred, window, true).map(|(v, g)| (v, g.expect("gradient requested")))
}

pub fn gaussian_window(window: usize) -> Vec<f64> {
    let sigma = 1.5 * window as f64 / 11.0;
    let half = (window / 2) as f64;
    let raw: Vec<f64> = (0..window)
        .map(|i| {
            let t = i as f64 - half;
            (-0.5 * t * t / (sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Separable valid-mode correlation of a `w x h` plane.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = k.iter().zip(&row[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: spreads an `ow x oh` plane back to `w x h`.
fn filter_valid_adjoint(g: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..oh {
        for (i, kv) in k.iter().enumerate() {
            for x in 0..ow {
                tmp[(y + i) * ow + x] += kv * g[y * ow + x];
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..ow {
            let v = tmp[y * ow + x];
            for (i, kv) in k.iter().enumerate() {
                out[y * w + x + i] += kv * v;
            }
        }
    }
    out
}

fn ssim_impl(
    a: &ImageBuffer,
    b: &ImageBuffer,
    window: usize,
    want_grad: bool,
) -> Result<(f64, Option<ImageBuffer>), MetricError> {
    check_shape(a, b)?;
    if window < 3 || window.is_multiple_of(2) {
        return Err(MetricError::BadWindow(window));
    }
    let (w, h, ch) = (a.width(), a.height(), a.channels());
    if window > w || window > h {
        return Err(MetricError::WindowTooLarge {
            window,
            width: w,
            height: h,
        });
    }
    let k = gaussian_window(window);
    let (ow, oh) = (w + 1 - window, h + 1 - window);
    let count = (ow * oh * ch) as f64;
    let mut total = 0.0;
    let mut grad = want_grad.then(|| ImageBuffer::new(w, h, ch));
    for c in 0..ch {
        let pa = a.channel(c).into_vec();
        let pb = b.channel(c).into_vec();
        let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
            pa.iter().zip(&pb).map(|(&x, &y)| f(x, y)).collect()
        };
        let ma = filter_valid(&pa, w, h, &k);
        let mb = filter_valid(&pb, w, h, &k);
        let maa = filter_valid(&prod(&|x, _| x * x), w, h, &k);
        let mbb = filter_valid(&prod(&|_, y| y * y), w, h, &k);
        let mab = filter_valid(&prod(&|x, y| x * y), w, h, &k);
        let mut d_mb = vec![0.0; ow * oh];
        let mut d_mbb = vec![0.0; ow * oh];
        let mut d_mab = vec![0.0; ow * oh];
        for i in 0..ow * oh {
            let (ua, ub) = (ma[i], mb[i]);
            let a1 = 2.0 * ua * ub + SSIM_C1;
            let a2 = 2.0 * (mab[i] - ua * ub) + SSIM_C2;
            let b1 = ua * ua + ub * ub + SSIM_C1;
            let b2 = (maa[i] - ua * ua) + (mbb[i] - ub * ub) + SSIM_C2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            if want_grad {
                d_mb[i] = (2.0 * ua * a2 - 2.0 * ua * a1) / (b1 * b2)
                    - s * (2.0 * ub / b1 - 2.0 * ub / b2);
                d_mbb[i] = -s / b2;
                d_mab[i] = 2.0 * a1 / (b1 * b2);
            }
        }
        if let Some(g) = grad.as_mut() {
            let gb = filter_valid_adjoint(&d_mb, w, h, &k);
            let gbb = filter_valid_adjoint(&d_mbb, w, h, &k);
            let gab = filter_valid_adjoint(&d_mab, w, h, &k);
            for p in 0..w * h {
                let v = (gb[p] + 2.0 * pb[p] * gbb[p] + pa[p] * gab[p]) / count;
                g.data_mut()[p * ch + c] = v;
            }
        }
    }
    Ok((total / count, grad))
}

/// One row of a benchmark table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricRow {
    pub rmse: f64,
    pub rmse_s: f64,
    pub ssim: f64,
    pub psnr: f64,
    pub zncc: f64,
}

impl MetricRow {
    pub const COLUMNS: [&'static str; 5] = ["rmse", "rmse_s", "ssim", "psnr", "zncc"];

    /// Every metric of `pred` against `target`.
    pub fn compute(pred: &ImageBuffer, target: &ImageBuffer) -> Result<Self, MetricError> {
        Ok(Self {
            rmse: rmse(pred, target)?,
            rmse_s: rmse_s(pred, target)?,
            ssim: ssim(pred, target, SSIM_DEFAULT_WINDOW)?,
            psnr: psnr(pred, target)?,
            zncc: zncc(pred, target)?,
        })
    }

    pub fn values(&self) -> [f64; 5] {
        [self.rmse, self.rmse_s, self.ssim, self.psnr, self.zncc]
    }

    fn from_values(v: [f64; 5]) -> Self {
        Self {
            rmse: v[0],
            rmse_s: v[1],
            ssim: v[2],
            psnr: v[3],
            zncc: v[4],
        }
    }
}

/// Per-image rows plus their mean and population standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<(String, MetricRow)>,
}

impl MetricReport {
    pub fn new() -> Self {
        Self { rows: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, row: MetricRow) {
        self.rows.push((name.into(), row));
    }

    pub fn mean(&self) -> MetricRow {
        let n = self.rows.len().max(1) as f64;
        let mut acc = [0.0; 5];
        for (_, r) in &self.rows {
            for (a, v) in acc.iter_mut().zip(r.values()) {
                *a += v;
            }
        }
        MetricRow::from_values(acc.map(|a| a / n))
    }

    pub fn std(&self) -> MetricRow {
        let n = self.rows.len().max(1) as f64;
        let mean = self.mean().values();
        let mut acc = [0.0; 5];
        for (_, r) in &self.rows {
            for ((a, v), m) in acc.iter_mut().zip(r.values()).zip(mean) {
                *a += (v - m).powi(2);
            }
        }
        MetricRow::from_values(acc.map(|a| (a / n).sqrt()))
    }
}

impl Default for MetricReport {
    fn default() -> Self {
        Self::new()
    }
}
