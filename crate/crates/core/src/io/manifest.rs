//! TOML scene manifests.
//!
//! ```toml
//! [lens]
//! focus_disparity = 0.5
//! blur_scale = 8.0
//! mode = "soft"          # or "hard"
//! kernel = "circle"      # or a grayscale PNG path
//! radius_cap = 64        # auto window radius limit
//! # max_radius = 12      # fixed window radius instead of auto
//! [lens.soft]            # any subset of the soft coefficients
//! leak_slope = 0.01
//!
//! [[layer]]              # front to back
//! color = "front_color.png"
//! alpha = "front_alpha.png"
//! disparity = "front_disparity.pfm"
//!
//! [[layer]]
//! color = "back_color.png"   # alpha omitted: opaque
//! disparity = "back_disparity.pfm"
//! ```
//!
//! Paths are relative to the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    load_color_png, load_gray_png, read_pfm, save_color_png, save_gray_png, write_pfm, write_text,
    IoError, MANIFEST_FILE,
};
use crate::buffer::ImageBuffer;
use crate::scene::{
    validate_scene, ApertureKernel, KernelMask, Layer, LayeredScene, LensConfig, RadiusPolicy,
    RenderMode, SoftParams,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneManifest {
    pub lens: LensSection,
    #[serde(rename = "layer", default)]
    pub layers: Vec<LayerEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LensSection {
    pub focus_disparity: f64,
    pub blur_scale: f64,
    #[serde(default)]
    pub mode: RenderMode,
    #[serde(default = "circle")]
    pub kernel: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_radius: Option<usize>,
    #[serde(default = "default_cap")]
    pub radius_cap: usize,
    #[serde(default)]
    pub soft: SoftParams,
}

fn circle() -> String {
    "circle".into()
}

fn default_cap() -> usize {
    64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub color: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<String>,
    pub disparity: String,
}

impl SceneManifest {
    pub fn parse(text: &str, path: &Path) -> Result<Self, IoError> {
        toml::from_str(text).map_err(|e| IoError::Parse {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serialises")
    }

    /// Lens described by the manifest; a kernel path is resolved against
    /// `base`.
    pub fn lens_config(&self, base: &Path) -> Result<LensConfig, IoError> {
        let l = &self.lens;
        let kernel = if l.kernel == "circle" {
            ApertureKernel::Circle
        } else {
            let path = base.join(&l.kernel);
            let mask = KernelMask::from_buffer(&load_gray_png(&path)?)?;
            ApertureKernel::Mask(mask)
        };
        let lens = LensConfig {
            focus_disparity: l.focus_disparity,
            blur_scale: l.blur_scale,
            max_radius: match l.max_radius {
                Some(r) => RadiusPolicy::Fixed(r),
                None => RadiusPolicy::Auto { cap: l.radius_cap },
            },
            kernel,
            soft: l.soft,
            mode: l.mode,
        };
        lens.validate()?;
        Ok(lens)
    }

    /// Decodes every layer; the scene is not validated.
    pub fn layers(&self, base: &Path) -> Result<LayeredScene, IoError> {
        let layers = self
            .layers
            .iter()
            .map(|e| {
                let color = load_color_png(&base.join(&e.color))?;
                let disparity = read_pfm(&base.join(&e.disparity))?;
                let alpha = match &e.alpha {
                    Some(a) => load_gray_png(&base.join(a))?,
                    None => ImageBuffer::filled(color.width(), color.height(), 1, 1.0),
                };
                Ok(Layer::new(color, alpha, disparity))
            })
            .collect::<Result<Vec<_>, IoError>>()?;
        Ok(LayeredScene::new(layers))
    }
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Reads a manifest and everything it references, then validates the
/// scene.
pub fn load_scene(manifest: &Path) -> Result<(LayeredScene, LensConfig), IoError> {
    let m = SceneManifest::load(manifest)?;
    let base = base_dir(manifest);
    let lens = m.lens_config(&base)?;
    let scene = m.layers(&base)?;
    validate_scene(&scene)?;
    Ok((scene, lens))
}

/// Writes every layer plus `manifest.toml` into `dir` and returns the
/// manifest path.
pub fn save_scene(dir: &Path, scene: &LayeredScene, lens: &LensConfig) -> Result<PathBuf, IoError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let mut layers = Vec::with_capacity(scene.len());
    for (i, layer) in scene.layers.iter().enumerate() {
        let entry = LayerEntry {
            color: format!("layer_{i}_color.png"),
            alpha: Some(format!("layer_{i}_alpha.png")),
            disparity: format!("layer_{i}_disparity.pfm"),
        };
        save_color_png(&dir.join(&entry.color), &layer.color)?;
        save_gray_png(
            &dir.join(entry.alpha.as_ref().expect("set above")),
            &layer.alpha,
        )?;
        write_pfm(&dir.join(&entry.disparity), &layer.disparity)?;
        layers.push(entry);
    }
    let kernel = match &lens.kernel {
        ApertureKernel::Circle => "circle".to_string(),
        ApertureKernel::Mask(mask) => {
            let buf = ImageBuffer::from_vec(mask.size(), mask.size(), 1, mask.values().to_vec())?;
            save_gray_png(&dir.join("kernel.png"), &buf)?;
            "kernel.png".to_string()
        }
    };
    let (max_radius, radius_cap) = match lens.max_radius {
        RadiusPolicy::Fixed(r) => (Some(r), default_cap()),
        RadiusPolicy::Auto { cap } => (None, cap),
    };
    let manifest = SceneManifest {
        lens: LensSection {
            focus_disparity: lens.focus_disparity,
            blur_scale: lens.blur_scale,
            mode: lens.mode,
            kernel,
            max_radius,
            radius_cap,
            soft: lens.soft,
        },
        layers,
    };
    let path = dir.join(MANIFEST_FILE);
    write_text(&path, &manifest.to_toml())?;
    Ok(path)
}
