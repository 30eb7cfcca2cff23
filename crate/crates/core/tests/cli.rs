mod common;

use std::path::Path;
use std::process::{Command, Output};

use layered_bokeh::fixtures::{bundled, bundled_dir};
use layered_bokeh::io::{load_scene, read_pfm, save_color_png, save_scene};
use layered_bokeh::render::alpha_over;
use layered_bokeh::{LensConfig, RenderMode};

fn bokeh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bokeh"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn summary(o: &Output) -> String {
    stdout(o).lines().last().unwrap_or_default().to_string()
}

fn fixture(rel: &str) -> String {
    bundled_dir().join(rel).display().to_string()
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

#[test]
fn zero_blur_render_is_the_alpha_composite() {
    let dir = tempfile::tempdir().unwrap();
    let scene = common::random_scene(24, 20, 3, 77);
    let manifest = save_scene(
        &dir.path().join("scene"),
        &scene,
        &LensConfig::new(0.0, 5.0, RenderMode::Soft),
    )
    .unwrap();
    let out = dir.path().join("out.png");
    let o = bokeh(&[
        "render",
        "--scene",
        p(&manifest),
        "--out",
        p(&out),
        "--radius",
        "0",
        "--mode",
        "hard",
    ]);
    assert!(o.status.success(), "{}", summary(&o));
    let (loaded, _) = load_scene(&manifest).unwrap();
    let expected = dir.path().join("expected.png");
    save_color_png(&expected, &alpha_over(&loaded)).unwrap();
    assert_eq!(
        std::fs::read(&out).unwrap(),
        std::fs::read(&expected).unwrap()
    );
}

#[test]
fn repeated_renders_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture(bundled::SPOTS_MANIFEST);
    let a = dir.path().join("a.png");
    let b = dir.path().join("b.png");
    assert!(bokeh(&["render", "--scene", &manifest, "--out", p(&a)])
        .status
        .success());
    assert!(bokeh(&[
        "--threads",
        "2",
        "render",
        "--scene",
        &manifest,
        "--out",
        p(&b)
    ])
    .status
    .success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn star_aperture_matches_the_golden_image() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("star.png");
    let o = bokeh(&[
        "render",
        "--scene",
        &fixture(bundled::SPOTS_MANIFEST),
        "--kernel",
        &fixture(bundled::STAR_KERNEL),
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", summary(&o));
    let golden = std::fs::read(bundled_dir().join(bundled::SPOTS_STAR_GOLDEN)).unwrap();
    assert_eq!(std::fs::read(&out).unwrap(), golden);
}

#[test]
fn debug_flag_writes_weights_and_visibility() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.png");
    let dbg = dir.path().join("debug");
    let o = bokeh(&[
        "render",
        "--scene",
        &fixture(bundled::SPOTS_MANIFEST),
        "--out",
        p(&out),
        "--debug",
        p(&dbg),
    ]);
    assert!(o.status.success());
    let w = read_pfm(&dbg.join("composite_weight_0.pfm")).unwrap();
    assert!(w.data().iter().all(|&v| (v - 1.0).abs() < 1e-6));
    assert!(dbg.join("visibility_0.pfm").is_file());
}

#[test]
fn gradcheck_on_the_bundled_fixture_passes() {
    let o = bokeh(&[
        "gradcheck",
        "--scene",
        &fixture(bundled::GRADCHECK_MANIFEST),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    for family in ["color", "disparity", "alpha"] {
        assert!(text.contains(&format!("family={family} ")), "{text}");
    }
    assert!(summary(&o).starts_with("status=ok cmd=gradcheck wall_ms="));
}

#[test]
fn unreachable_gradcheck_tolerance_is_a_numerical_failure() {
    let o = bokeh(&[
        "gradcheck",
        "--scene",
        &fixture(bundled::GRADCHECK_MANIFEST),
        "--tol",
        "1e-12",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(summary(&o).contains("error=GRADCHECK_FAILED"));
}

#[test]
fn gradcheck_in_hard_mode_is_a_mode_mismatch() {
    let o = bokeh(&[
        "gradcheck",
        "--scene",
        &fixture(bundled::GRADCHECK_MANIFEST),
        "--mode",
        "hard",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(summary(&o).contains("error=MODE_MISMATCH"));
}

const SMALL_RECIPE: &str = r#"
[lens]
sphere_radius = 20.0
aperture_radius = 1.0
image_plane_distance = 27.0
fov = 20.0
sensor_resolution = [32, 32]
samples_per_pixel = 16
rng_seed = 3

[[scene]]
name = "a"
[[scene.layer]]
distance = 35.0
color = { kind = "noise", cells = 4, seed = 1 }
shape = { kind = "disk", center = [0.5, 0.5], radius = 0.25 }
[[scene.layer]]
distance = 70.0
color = { kind = "checker", cells = 4, a = [0.9, 0.9, 0.9], b = [0.1, 0.2, 0.3] }

[[scene]]
name = "b"
focus_distance = 40.0
[[scene.layer]]
distance = 40.0
color = { kind = "solid", color = [0.8, 0.2, 0.2] }
shape = { kind = "rect", center = [0.4, 0.5], half = [0.2, 0.3] }
[[scene.layer]]
distance = 90.0
color = { kind = "noise", cells = 6, seed = 2 }

[[scene]]
name = "c"
[[scene.layer]]
distance = 60.0
color = { kind = "noise", cells = 5, seed = 3 }
"#;

#[test]
fn oracle_is_deterministic_and_benchmark_scores_it() {
    let dir = tempfile::tempdir().unwrap();
    let recipe = dir.path().join("recipe.toml");
    std::fs::write(&recipe, SMALL_RECIPE).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = bokeh(&["oracle", "--recipe", p(&recipe), "--out", p(out)]);
        assert!(o.status.success(), "{}", summary(&o));
        assert!(summary(&o).contains("scenes=3"));
    }
    for scene in ["a", "b", "c"] {
        let f = format!("{scene}/bokeh_gt.png");
        assert_eq!(
            std::fs::read(a.join(&f)).unwrap(),
            std::fs::read(b.join(&f)).unwrap()
        );
    }

    let report = dir.path().join("report.csv");
    let o = bokeh(&["benchmark", "--dataset", p(&a), "--out", p(&report)]);
    assert!(o.status.success(), "{}", summary(&o));
    let csv = std::fs::read_to_string(&report).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("scene,method,rmse,rmse_s,ssim,psnr,zncc")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.iter().filter(|l| l.contains(",layered,")).count(), 5);
    assert!(rows.iter().any(|l| l.starts_with("mean,naive,")));
}

#[test]
fn dfd_on_the_two_plane_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.pfm");
    let csv = dir.path().join("loss.csv");
    let o = bokeh(&[
        "dfd",
        "--image",
        &fixture(bundled::TWO_PLANE_IMAGE),
        "--target",
        &fixture(bundled::TWO_PLANE_TARGET),
        "--truth",
        &fixture(bundled::TWO_PLANE_TRUTH),
        "--out",
        p(&out),
        "--max-radius",
        "6",
        "--iters",
        "30",
        "--loss-csv",
        p(&csv),
    ]);
    assert!(o.status.success(), "{}", summary(&o));
    assert!(summary(&o).contains("disparity_rmse="));
    assert_eq!(read_pfm(&out).unwrap().width(), 64);
    let totals: Vec<f64> = std::fs::read_to_string(&csv)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(totals.len(), 30);
    let mins: Vec<f64> = totals
        .iter()
        .scan(f64::INFINITY, |m, &t| {
            *m = m.min(t);
            Some(*m)
        })
        .collect();
    assert!(mins.windows(2).all(|w| w[1] <= w[0]));
    assert!(mins[29] < totals[0]);
}

#[test]
fn validate_reports_bad_inputs() {
    let ok = bokeh(&["validate", "--scene", &fixture(bundled::SPOTS_MANIFEST)]);
    assert!(ok.status.success());
    assert!(summary(&ok).starts_with("status=ok cmd=validate"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("manifest.toml");
    std::fs::write(
        &bad,
        "[lens]\nfocus_disparity = 0.0\nblur_scale = 1.0\nbogus = 1\n",
    )
    .unwrap();
    let o = bokeh(&["validate", "--scene", p(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(summary(&o).contains("error=PARSE_ERROR"));

    let missing = bokeh(&[
        "render",
        "--scene",
        "/nonexistent/manifest.toml",
        "--out",
        p(&dir.path().join("x.png")),
    ]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(bokeh(&["render"]).status.code(), Some(1));
    assert_eq!(bokeh(&["paint"]).status.code(), Some(1));
    assert_eq!(bokeh(&["--help"]).status.code(), Some(0));
}
