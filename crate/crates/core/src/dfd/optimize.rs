use std::fmt::Write as _;

use super::{loss, DfdError, LossConfig};
use crate::buffer::ImageBuffer;
use crate::render::{backward, render_unchecked, RenderOptions};
use crate::scene::{Layer, LayeredScene, LensConfig, RadiusPolicy, RenderMode};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Stop once the best loss improved by less than this fraction over the
    /// last `patience` iterations.
    pub tolerance: f64,
    pub patience: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_iterations: 2000,
            tolerance: 1e-5,
            patience: 50,
        }
    }
}

/// Single-layer (opaque RGBD) depth recovery problem.
#[derive(Clone, Debug, PartialEq)]
pub struct DfdProblem {
    /// All-in-focus image.
    pub image: ImageBuffer,
    /// Observed defocused image.
    pub target: ImageBuffer,
    /// Soft-mode lens; `focus_disparity` and `blur_scale` are held fixed.
    pub lens: LensConfig,
    /// Starting disparity (absolute, not relative to focus).
    pub init_disparity: ImageBuffer,
    pub loss: LossConfig,
    pub optimizer: AdamConfig,
}

impl DfdProblem {
    pub fn new(
        image: ImageBuffer,
        target: ImageBuffer,
        lens: LensConfig,
        init: ImageBuffer,
    ) -> Self {
        Self {
            image,
            target,
            lens,
            init_disparity: init,
            loss: LossConfig::default(),
            optimizer: AdamConfig::default(),
        }
    }

    /// Window radius held for the whole run: the lens's fixed radius, or
    /// twice the initial blur extent (limited by the cap).
    pub fn radius(&self) -> usize {
        match self.lens.max_radius {
            RadiusPolicy::Fixed(r) => r.max(1),
            RadiusPolicy::Auto { cap } => {
                let extent = self.init_disparity.data().iter().fold(0.0_f64, |m, &d| {
                    m.max((d - self.lens.focus_disparity).abs())
                });
                ((2.0 * self.lens.blur_scale * extent).ceil() as usize + 1).clamp(1, cap.max(1))
            }
        }
    }

    fn validate(&self) -> Result<(), DfdError> {
        if !self.image.same_shape(&self.target) || self.image.channels() != 3 {
            return Err(DfdError::ShapeMismatch(
                "image and target must be matching 3-channel buffers".into(),
            ));
        }
        if !self.init_disparity.same_extent(&self.image) || self.init_disparity.channels() != 1 {
            return Err(DfdError::ShapeMismatch(
                "initial disparity must be a 1-channel map the size of the image".into(),
            ));
        }
        if self.lens.mode != RenderMode::Soft {
            return Err(DfdError::Render(crate::render::RenderError::ModeMismatch));
        }
        self.lens
            .validate()
            .map_err(|e| DfdError::Render(e.into()))?;
        self.loss.validate()?;
        let o = &self.optimizer;
        if o.learning_rate.is_nan() || o.learning_rate <= 0.0 || o.patience == 0 {
            return Err(DfdError::InvalidProblem(
                "learning rate must be > 0 and patience >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub total: f64,
    pub l1: f64,
    pub grad: f64,
    pub hssim: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DfdResult {
    /// Disparity with the lowest loss seen.
    pub disparity: ImageBuffer,
    pub trace: Vec<LossRecord>,
    /// Render of `disparity`.
    pub render: ImageBuffer,
    pub best_iteration: usize,
    pub best_loss: f64,
}

impl DfdResult {
    /// Running minimum of the total loss.
    pub fn running_min(&self) -> Vec<f64> {
        self.trace
            .iter()
            .scan(f64::INFINITY, |m, r| {
                *m = m.min(r.total);
                Some(*m)
            })
            .collect()
    }

    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iteration,total,l1,grad,hssim\n");
        for r in &self.trace {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.iteration, r.total, r.l1, r.grad, r.hssim
            );
        }
        s
    }
}

/// Adam on the per-pixel disparity. Returns the best iterate.
pub fn optimize(problem: &DfdProblem) -> Result<DfdResult, DfdError> {
    problem.validate()?;
    let opt = problem.optimizer;
    let lens = &problem.lens;
    let radius = problem.radius();
    let mut d = problem.init_disparity.clone();
    let n = d.data().len();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut trace = Vec::new();
    let mut best_hist = Vec::new();
    let mut best = (f64::INFINITY, d.clone(), ImageBuffer::new(1, 1, 3), 0);

    for it in 0..opt.max_iterations.max(1) {
        let scene = LayeredScene::new(vec![Layer::opaque(problem.image.clone(), d.clone())]);
        let out = render_unchecked(&scene, lens, radius, RenderOptions::default());
        let lv = loss(
            &out.bokeh,
            &problem.target,
            &d,
            &problem.image,
            &problem.loss,
        )?;
        if !lv.total.is_finite() {
            return Err(DfdError::Diverged { iteration: it });
        }
        trace.push(LossRecord {
            iteration: it,
            total: lv.total,
            l1: lv.l1,
            grad: lv.grad,
            hssim: lv.hssim,
        });
        if lv.total < best.0 {
            best = (lv.total, d.clone(), out.bokeh.clone(), it);
        }
        best_hist.push(best.0);
        if best.0 < 1e-12 {
            break;
        }
        if it >= opt.patience {
            let prev = best_hist[it - opt.patience];
            if prev - best.0 <= opt.tolerance * prev {
                break;
            }
        }
        if it + 1 == opt.max_iterations {
            break;
        }
        let grads = backward(&scene, lens, &out, &lv.d_pred)?;
        let gd = &grads.layers[0].disparity;
        let t = (it + 1) as i32;
        let (c1, c2) = (1.0 - opt.beta1.powi(t), 1.0 - opt.beta2.powi(t));
        for (i, di) in d.data_mut().iter_mut().enumerate() {
            let g = gd.data()[i] + lv.d_disparity.data()[i];
            m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g;
            v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g * g;
            *di -= opt.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + opt.epsilon);
        }
        if d.first_nonfinite().is_some() {
            return Err(DfdError::Diverged { iteration: it + 1 });
        }
    }
    Ok(DfdResult {
        disparity: best.1,
        trace,
        render: best.2,
        best_iteration: best.3,
        best_loss: best.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::render_with;

    fn texture(w: usize, h: usize) -> ImageBuffer {
        ImageBuffer::from_fn(w, h, 3, |x, y, c| {
            let (x, y, c) = (x as f64, y as f64, c as f64);
            0.5 + 0.4 * (0.7 * x + 0.3 * c).sin() * (0.5 * y - 0.2 * c).cos()
        })
    }

    #[test]
    fn starting_at_the_optimum_stops_immediately() {
        let img = texture(32, 32);
        let d = ImageBuffer::filled(32, 32, 1, 0.4);
        let lens =
            LensConfig::new(0.0, 4.0, RenderMode::Soft).with_max_radius(RadiusPolicy::Fixed(4));
        let scene = LayeredScene::new(vec![Layer::opaque(img.clone(), d.clone())]);
        let target = render_with(&scene, &lens, RenderOptions::default())
            .unwrap()
            .bokeh;
        let mut p = DfdProblem::new(img, target, lens, d);
        p.loss.windows = vec![11];
        let r = optimize(&p).unwrap();
        assert_eq!(r.trace.len(), 1);
        assert!(r.best_loss < 1e-6);
    }

    #[test]
    fn loss_decreases_and_trace_is_well_formed() {
        let img = texture(32, 32);
        let truth = ImageBuffer::filled(32, 32, 1, 0.5);
        let lens =
            LensConfig::new(0.0, 4.0, RenderMode::Soft).with_max_radius(RadiusPolicy::Fixed(4));
        let scene = LayeredScene::new(vec![Layer::opaque(img.clone(), truth)]);
        let target = render_with(&scene, &lens, RenderOptions::default())
            .unwrap()
            .bokeh;
        let mut p = DfdProblem::new(img, target, lens, ImageBuffer::filled(32, 32, 1, 0.2));
        p.loss.windows = vec![11];
        p.optimizer.max_iterations = 40;
        let r = optimize(&p).unwrap();
        let mins = r.running_min();
        assert!(mins.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.best_loss < r.trace[0].total * 0.5);
        let csv = r.trace_csv();
        assert!(csv.starts_with("iteration,total,l1,grad,hssim\n"));
        assert_eq!(csv.lines().count(), r.trace.len() + 1);
    }

    #[test]
    fn hard_lens_is_rejected() {
        let img = texture(16, 16);
        let d = ImageBuffer::filled(16, 16, 1, 0.0);
        let p = DfdProblem::new(
            img.clone(),
            img,
            LensConfig::new(0.0, 2.0, RenderMode::Hard),
            d,
        );
        assert_eq!(optimize(&p).unwrap_err().code(), "MODE_MISMATCH");
    }
}
