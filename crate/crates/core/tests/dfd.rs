use layered_bokeh::dfd::{hssim, loss, optimize, DfdProblem, LossConfig};
use layered_bokeh::fixtures::{two_plane, TWO_PLANE_RADIUS};
use layered_bokeh::render::{backward, render_unchecked, RenderOptions};
use layered_bokeh::{ImageBuffer, Layer, LayeredScene, LensConfig};
use proptest::prelude::*;

/// Largest |dL/dd| of the default loss through the renderer at a uniform
/// disparity.
fn disparity_gradient(lens: &LensConfig, d: f64) -> f64 {
    let tp = two_plane();
    let (w, h) = (tp.image.width(), tp.image.height());
    let disparity = ImageBuffer::filled(w, h, 1, d);
    let scene = LayeredScene::new(vec![Layer::opaque(tp.image.clone(), disparity.clone())]);
    let out = render_unchecked(&scene, lens, TWO_PLANE_RADIUS, RenderOptions::default());
    let lv = loss(
        &out.bokeh,
        &tp.target,
        &disparity,
        &tp.image,
        &LossConfig::default(),
    )
    .unwrap();
    let g = backward(&scene, lens, &out, &lv.d_pred).unwrap();
    g.layers[0]
        .disparity
        .data()
        .iter()
        .zip(lv.d_disparity.data())
        .fold(0.0_f64, |m, (a, b)| m.max((a + b).abs()))
}

#[test]
fn gradient_vanishes_far_from_focus_without_leak() {
    let lens = two_plane().lens;
    let mut no_leak = lens.clone();
    no_leak.soft.leak_slope = 0.0;
    for d in [2.0, 3.0] {
        let without = disparity_gradient(&no_leak, d);
        let with = disparity_gradient(&lens, d);
        assert!(without <= 1e-6, "d {d}: {without:e}");
        assert!(with > 1e-6, "d {d}: {with:e}");
    }
}

#[test]
fn two_plane_run_reduces_the_loss() {
    let tp = two_plane();
    let init = ImageBuffer::filled(tp.image.width(), tp.image.height(), 1, tp.init);
    let mut p = DfdProblem::new(tp.image, tp.target, tp.lens, init);
    p.optimizer.max_iterations = 40;
    let r = optimize(&p).unwrap();
    assert_eq!(r.trace.len(), 40);
    assert!(r.best_loss < 0.8 * r.trace[0].total);
    let mins = r.running_min();
    assert!(mins.windows(2).all(|p| p[1] <= p[0]));
}

#[test]
fn diverging_step_is_reported() {
    let tp = two_plane();
    let init = ImageBuffer::filled(tp.image.width(), tp.image.height(), 1, f64::NAN);
    let p = DfdProblem::new(tp.image, tp.target, tp.lens, init);
    assert_eq!(optimize(&p).unwrap_err().code(), "DIVERGED");
}

fn image(seed: u64) -> ImageBuffer {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    ImageBuffer::from_fn(24, 24, 3, |_, _, _| rng.gen())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hssim_is_bounded_and_one_only_for_equal_inputs(a in 0u64..1000, b in 0u64..1000) {
        let (x, y) = (image(a), image(b));
        let (s, _) = hssim(&x, &y, &[5, 11]).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        let (same, _) = hssim(&x, &x, &[5, 11]).unwrap();
        prop_assert!((same - 1.0).abs() < 1e-9);
        if a != b {
            prop_assert!(s < 1.0 - 1e-9);
        }
    }
}
