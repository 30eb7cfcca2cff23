//! Ray-traced benchmark datasets and their evaluation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::lens::{
    blur_scale, disparity_at, effective_focal_length, focus_distance, glass_thickness, pixel_pitch,
    principal_offset, OracleLensConfig,
};
use super::recipe::{Recipe, SceneRecipe};
use super::tracer::{pinhole_image, trace_image, BillboardScene};
use super::OracleError;
use crate::buffer::ImageBuffer;
use crate::io::{
    display_referred, list_scene_dirs, load_color_png, load_scene, save_color_png, save_scene,
    write_pfm, write_text, GROUND_TRUTH_FILE, MANIFEST_FILE,
};
use crate::metrics::{MetricReport, MetricRow};
use crate::render::{flatten_layers, render, render_naive};
use crate::scene::{Layer, LayeredScene, LensConfig, RadiusPolicy, RenderMode};

pub const ALL_IN_FOCUS_FILE: &str = "all_in_focus.png";
pub const DEPTH_FILE: &str = "depth.pfm";
pub const GROUND_TRUTH_PFM_FILE: &str = "bokeh_gt.pfm";
pub const PROVENANCE_FILE: &str = "provenance.toml";

/// Window radius limit written into generated manifests.
const RADIUS_CAP: usize = 64;

#[derive(Serialize)]
struct Derived {
    glass_thickness: f64,
    effective_focal_length: f64,
    principal_offset: f64,
    focus_distance: f64,
    focus_disparity: f64,
    blur_scale: f64,
    pixel_pitch: f64,
    layer_disparities: Vec<f64>,
}

#[derive(Serialize)]
struct Provenance<'a> {
    lens: &'a OracleLensConfig,
    scene: &'a SceneRecipe,
    derived: Derived,
}

/// Engine-side description of a billboard scene: one constant-disparity
/// layer per billboard plus the matching soft-mode lens.
pub fn layered_equivalent(
    cfg: &OracleLensConfig,
    billboards: &BillboardScene,
) -> Result<(LayeredScene, LensConfig), OracleError> {
    let (w, h) = (cfg.width(), cfg.height());
    let layers = billboards
        .billboards
        .iter()
        .map(|b| {
            let d = disparity_at(cfg, b.distance)?;
            Ok(Layer::new(
                b.color.clone(),
                b.alpha.clone(),
                ImageBuffer::filled(w, h, 1, d),
            ))
        })
        .collect::<Result<Vec<_>, OracleError>>()?;
    let lens = LensConfig::new(
        disparity_at(cfg, focus_distance(cfg)?)?,
        blur_scale(cfg)?,
        RenderMode::Soft,
    )
    .with_max_radius(RadiusPolicy::Auto { cap: RADIUS_CAP });
    Ok((LayeredScene::new(layers), lens))
}

fn scene_dir(out: &Path, name: &str) -> Result<PathBuf, OracleError> {
    let ok = !name.is_empty()
        && name != "."
        && name != ".."
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
    if !ok {
        return Err(OracleError::InvalidScene(format!(
            "scene name {name:?} is not a plain file name"
        )));
    }
    Ok(out.join(name))
}

/// Generates one sub-directory per recipe scene under `out` and returns
/// their paths. Relative texture paths resolve against `recipe_dir`.
pub fn generate_benchmark(
    recipe: &Recipe,
    recipe_dir: &Path,
    out: &Path,
) -> Result<Vec<PathBuf>, OracleError> {
    recipe.lens.validate()?;
    let mut dirs = Vec::with_capacity(recipe.scenes.len());
    for s in &recipe.scenes {
        let dir = scene_dir(out, &s.name)?;
        let cfg = s.lens(&recipe.lens)?;
        let billboards = s.build(&cfg, recipe_dir)?;
        let (layered, lens) = layered_equivalent(&cfg, &billboards)?;
        save_scene(&dir, &layered, &lens)?;
        save_color_png(
            &dir.join(ALL_IN_FOCUS_FILE),
            &pinhole_image(&cfg, &billboards)?,
        )?;
        write_pfm(&dir.join(DEPTH_FILE), &flatten_layers(&layered).disparity)?;
        let truth = trace_image(&cfg, &billboards)?;
        save_color_png(&dir.join(GROUND_TRUTH_FILE), &truth)?;
        write_pfm(&dir.join(GROUND_TRUTH_PFM_FILE), &truth)?;
        let provenance = Provenance {
            lens: &cfg,
            scene: s,
            derived: Derived {
                glass_thickness: glass_thickness(&cfg)?,
                effective_focal_length: effective_focal_length(&cfg)?,
                principal_offset: principal_offset(&cfg)?,
                focus_distance: focus_distance(&cfg)?,
                focus_disparity: lens.focus_disparity,
                blur_scale: lens.blur_scale,
                pixel_pitch: pixel_pitch(&cfg)?,
                layer_disparities: billboards
                    .billboards
                    .iter()
                    .map(|b| disparity_at(&cfg, b.distance))
                    .collect::<Result<_, _>>()?,
            },
        };
        let text = toml::to_string(&provenance).expect("provenance serialises");
        write_text(&dir.join(PROVENANCE_FILE), &text)?;
        dirs.push(dir);
    }
    Ok(dirs)
}

/// Scores of one scene for the layered renderer and the flattened,
/// occlusion-unaware baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneScore {
    pub name: String,
    pub engine: MetricRow,
    pub baseline: MetricRow,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct BenchmarkReport {
    pub scenes: Vec<SceneScore>,
}

impl BenchmarkReport {
    pub fn engine(&self) -> MetricReport {
        self.collect(|s| s.engine)
    }

    pub fn baseline(&self) -> MetricReport {
        self.collect(|s| s.baseline)
    }

    fn collect(&self, pick: impl Fn(&SceneScore) -> MetricRow) -> MetricReport {
        let mut r = MetricReport::new();
        for s in &self.scenes {
            r.push(s.name.clone(), pick(s));
        }
        r
    }

    /// CSV with per-scene rows followed by mean and std rows per method.
    pub fn to_csv(&self) -> String {
        let mut out = format!("scene,method,{}\n", MetricRow::COLUMNS.join(","));
        let mut line = |scene: &str, method: &str, row: &MetricRow| {
            let vals: Vec<String> = row.values().iter().map(|v| format!("{v:.6}")).collect();
            let _ = writeln!(out, "{scene},{method},{}", vals.join(","));
        };
        for s in &self.scenes {
            line(&s.name, "layered", &s.engine);
            line(&s.name, "naive", &s.baseline);
        }
        for (method, rep) in [("layered", self.engine()), ("naive", self.baseline())] {
            line("mean", method, &rep.mean());
            line("std", method, &rep.std());
        }
        out
    }
}

/// Renders every scene of a dataset with the manifest lens and compares it
/// to the ray-traced ground truth in display-referred 8-bit units.
pub fn evaluate_dataset(root: &Path) -> Result<BenchmarkReport, OracleError> {
    let mut report = BenchmarkReport::default();
    for dir in list_scene_dirs(root)? {
        let (scene, lens) = load_scene(&dir.join(MANIFEST_FILE))?;
        let truth = display_referred(&load_color_png(&dir.join(GROUND_TRUTH_FILE))?);
        let ours = display_referred(&render(&scene, &lens)?.bokeh);
        let naive = display_referred(&render_naive(&scene, &lens)?.bokeh);
        report.scenes.push(SceneScore {
            name: dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            engine: MetricRow::compute(&ours, &truth)?,
            baseline: MetricRow::compute(&naive, &truth)?,
        });
    }
    if report.scenes.is_empty() {
        return Err(OracleError::InvalidScene(format!(
            "no scenes under {}",
            root.display()
        )));
    }
    Ok(report)
}
