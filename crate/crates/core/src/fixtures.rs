//! Deterministic scenes shared by the examples, the CLI fixtures and the
//! test suites.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::buffer::ImageBuffer;
use crate::io::{
    load_gray_png, load_scene, save_color_png, save_gray_png, save_scene, write_pfm, IoError,
};
use crate::oracle::TextureSpec;
use crate::render::{render, render_unchecked, RenderOptions};
use crate::scene::{
    ApertureKernel, KernelMask, Layer, LayeredScene, LensConfig, RadiusPolicy, RenderMode,
};

/// Depth-from-defocus problem with known answer: the left half of the
/// image sits at disparity 0.5, the right half on the focal plane.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoPlane {
    pub image: ImageBuffer,
    /// Hard-mode render of `image` at `truth`.
    pub target: ImageBuffer,
    pub truth: ImageBuffer,
    /// Soft-mode lens to optimise with.
    pub lens: LensConfig,
    pub init: f64,
}

pub const TWO_PLANE_SIZE: usize = 64;
pub const TWO_PLANE_NEAR: f64 = 0.5;
pub const TWO_PLANE_BLUR: f64 = 8.0;
pub const TWO_PLANE_RADIUS: usize = 6;
pub const TWO_PLANE_INIT: f64 = 0.25;

pub fn two_plane_image() -> ImageBuffer {
    TextureSpec::Noise { cells: 12, seed: 7 }
        .render(TWO_PLANE_SIZE, TWO_PLANE_SIZE, Path::new("."))
        .expect("procedural texture")
}

pub fn two_plane() -> TwoPlane {
    two_plane_with(TWO_PLANE_BLUR, TWO_PLANE_RADIUS, RenderMode::Hard)
}

pub fn two_plane_with(blur: f64, radius: usize, target_mode: RenderMode) -> TwoPlane {
    let n = TWO_PLANE_SIZE;
    let image = two_plane_image();
    let truth = ImageBuffer::from_fn(
        n,
        n,
        1,
        |x, _, _| if x < n / 2 { TWO_PLANE_NEAR } else { 0.0 },
    );
    let lens =
        LensConfig::new(0.0, blur, RenderMode::Soft).with_max_radius(RadiusPolicy::Fixed(radius));
    let hard = lens.clone().with_mode(target_mode);
    let scene = LayeredScene::new(vec![Layer::opaque(image.clone(), truth.clone())]);
    let target = render_unchecked(&scene, &hard, radius, RenderOptions::default()).bokeh;
    TwoPlane {
        image,
        target,
        truth,
        lens,
        init: TWO_PLANE_INIT,
    }
}

/// Random opaque single-layer scene for gradient checks: uniform colour,
/// disparity of random sign with magnitude in `[0.05, 1)`.
pub fn random_layer_scene(width: usize, height: usize, seed: u64) -> LayeredScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let color = ImageBuffer::from_fn(width, height, 3, |_, _, _| rng.gen());
    let disparity = ImageBuffer::from_fn(width, height, 1, |_, _, _| {
        let m: f64 = rng.gen_range(0.05..1.0);
        if rng.gen::<bool>() {
            m
        } else {
            -m
        }
    });
    LayeredScene::new(vec![Layer::opaque(color, disparity)])
}

/// Five-pointed star aperture mask.
pub fn star_kernel(size: usize) -> KernelMask {
    let c = (size as f64 - 1.0) / 2.0;
    let values = (0..size * size)
        .map(|i| {
            let (x, y) = ((i % size) as f64 - c, (i / size) as f64 - c);
            let r = (x * x + y * y).sqrt() / (c + 0.5);
            let sector = std::f64::consts::TAU / 5.0;
            let phi = (y.atan2(x) + std::f64::consts::FRAC_PI_2).rem_euclid(sector) / sector;
            let edge = 0.4 + 0.6 * (2.0 * phi - 1.0).abs();
            if r < edge {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    KernelMask::new(size, values).expect("square mask")
}

/// Single-layer 12x12 soft-mode scene: an opaque textured plane tilted in
/// front of the focal plane.
pub fn gradcheck_scene() -> (LayeredScene, LensConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 12;
    let color = ImageBuffer::from_fn(n, n, 3, |_, _, _| rng.gen_range(0.0..1.0));
    let disparity =
        ImageBuffer::from_fn(n, n, 1, |x, y, _| 1.0 + 0.02 * x as f64 + 0.01 * y as f64);
    let lens = LensConfig::new(0.0, 3.0, RenderMode::Soft);
    (
        LayeredScene::new(vec![Layer::opaque(color, disparity)]),
        lens,
    )
}

pub const STAR_KERNEL_SIZE: usize = 15;

/// Dark opaque layer with a few small bright highlights, all defocused to
/// about 7 px of blur.
pub fn spots_scene() -> (LayeredScene, LensConfig) {
    let n = 48;
    let spots = [(12, 12), (35, 14), (24, 30), (10, 38), (38, 38)];
    let color = ImageBuffer::from_fn(n, n, 3, |x, y, c| {
        let lit = spots
            .iter()
            .any(|&(sx, sy)| x.abs_diff(sx) <= 1 && y.abs_diff(sy) <= 1);
        if lit {
            [1.0, 0.95, 0.8][c]
        } else {
            [0.03, 0.04, 0.06][c]
        }
    });
    let disparity = ImageBuffer::filled(n, n, 1, 0.6);
    let lens = LensConfig::new(0.0, 12.0, RenderMode::Soft);
    (
        LayeredScene::new(vec![Layer::opaque(color, disparity)]),
        lens,
    )
}

pub fn spots_star_lens() -> LensConfig {
    let (_, lens) = spots_scene();
    LensConfig {
        kernel: ApertureKernel::Mask(star_kernel(STAR_KERNEL_SIZE)),
        ..lens
    }
}

/// Files of the bundled fixture directory, relative to its root.
pub mod bundled {
    pub const TWO_PLANE_IMAGE: &str = "two_plane/image.png";
    pub const TWO_PLANE_TARGET: &str = "two_plane/target.png";
    pub const TWO_PLANE_TRUTH: &str = "two_plane/truth_disparity.pfm";
    pub const GRADCHECK_MANIFEST: &str = "gradcheck_12/manifest.toml";
    pub const SPOTS_MANIFEST: &str = "spots/manifest.toml";
    pub const STAR_KERNEL: &str = "star.png";
    pub const SPOTS_STAR_GOLDEN: &str = "spots/bokeh_star_golden.png";
    pub const BENCHMARK_RECIPE: &str = "benchmark_recipe.toml";
}

/// The crate's `fixtures/` directory.
pub fn bundled_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Writes every generated fixture under `root` (the benchmark recipe is
/// hand-written and left alone).
pub fn write_bundled(root: &Path) -> Result<(), IoError> {
    let tp = two_plane();
    save_color_png(&root.join(bundled::TWO_PLANE_IMAGE), &tp.image)?;
    save_color_png(&root.join(bundled::TWO_PLANE_TARGET), &tp.target)?;
    write_pfm(&root.join(bundled::TWO_PLANE_TRUTH), &tp.truth)?;

    let (scene, lens) = gradcheck_scene();
    save_scene(&root.join("gradcheck_12"), &scene, &lens)?;

    let (scene, lens) = spots_scene();
    let manifest = save_scene(&root.join("spots"), &scene, &lens)?;
    let star = star_kernel(STAR_KERNEL_SIZE);
    let mask = ImageBuffer::from_vec(star.size(), star.size(), 1, star.values().to_vec())?;
    let star_path = root.join(bundled::STAR_KERNEL);
    save_gray_png(&star_path, &mask)?;
    // the golden comes from the quantised files, as the CLI sees them
    let (scene, mut lens) = load_scene(&manifest)?;
    lens.kernel = ApertureKernel::Mask(KernelMask::from_buffer(&load_gray_png(&star_path)?)?);
    let golden = render(&scene, &lens).map_err(|e| match e {
        crate::render::RenderError::Scene(s) => IoError::Scene(s),
        other => unreachable!("validated fixture: {other}"),
    })?;
    save_color_png(&root.join(bundled::SPOTS_STAR_GOLDEN), &golden.bokeh)?;
    Ok(())
}
