//! Benchmark recipes: lens, then per-scene billboards built from procedural
//! or file textures.
//!
//! ```toml
//! [lens]
//! sphere_radius = 10.0
//! aperture_radius = 0.6
//! image_plane_distance = 13.5
//! fov = 40.0
//! sensor_resolution = [128, 128]
//! samples_per_pixel = 512
//! rng_seed = 7
//!
//! [[scene]]
//! name = "disk_over_noise"
//! focus_distance = 40.0      # optional: moves the sensor
//! [[scene.layer]]
//! distance = 25.0
//! color = { kind = "noise", cells = 6, seed = 3 }
//! shape = { kind = "disk", center = [0.5, 0.5], radius = 0.25 }
//! [[scene.layer]]
//! distance = 90.0
//! color = { kind = "checker", cells = 8, a = [0.8, 0.7, 0.3], b = [0.2, 0.3, 0.6] }
//! ```
//!
//! Shape coordinates are fractions of the image width and height; radii
//! are fractions of the width.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lens::{image_plane_for, OracleLensConfig};
use super::tracer::{Billboard, BillboardScene};
use super::OracleError;
use crate::buffer::ImageBuffer;
use crate::io::{load_color_png, load_gray_png, IoError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recipe {
    pub lens: OracleLensConfig,
    #[serde(rename = "scene", default)]
    pub scenes: Vec<SceneRecipe>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneRecipe {
    pub name: String,
    /// Refocus by placing the sensor so this distance is sharp.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focus_distance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_pixel: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(rename = "layer")]
    pub layers: Vec<LayerRecipe>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRecipe {
    pub distance: f64,
    pub color: TextureSpec,
    #[serde(default)]
    pub shape: ShapeSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TextureSpec {
    Solid {
        color: [f64; 3],
    },
    /// Two-octave value noise.
    Noise {
        cells: usize,
        seed: u64,
    },
    Checker {
        cells: usize,
        a: [f64; 3],
        b: [f64; 3],
    },
    Image {
        path: String,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ShapeSpec {
    #[default]
    Full,
    Disk {
        center: [f64; 2],
        radius: f64,
    },
    Rect {
        center: [f64; 2],
        half: [f64; 2],
    },
    Star {
        center: [f64; 2],
        outer: f64,
        inner: f64,
        points: usize,
    },
    Image {
        path: String,
    },
}

impl Recipe {
    pub fn parse(text: &str, path: &Path) -> Result<Self, OracleError> {
        toml::from_str(text).map_err(|e| {
            OracleError::Io(IoError::Parse {
                path: path.to_path_buf(),
                message: e.message().to_string(),
            })
        })
    }

    pub fn load(path: &Path) -> Result<Self, OracleError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| OracleError::Io(IoError::io(path, e)))?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("recipe serialises")
    }
}

impl SceneRecipe {
    /// The recipe lens with this scene's focus, sample count and seed.
    pub fn lens(&self, base: &OracleLensConfig) -> Result<OracleLensConfig, OracleError> {
        let mut cfg = base.clone();
        if let Some(spp) = self.samples_per_pixel {
            cfg.samples_per_pixel = spp;
        }
        if let Some(seed) = self.seed {
            cfg.rng_seed = seed;
        }
        if let Some(d) = self.focus_distance {
            cfg.image_plane_distance = image_plane_for(&cfg, d)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Builds the billboards at the sensor resolution; relative texture
    /// paths resolve against `base`.
    pub fn build(
        &self,
        cfg: &OracleLensConfig,
        base: &Path,
    ) -> Result<BillboardScene, OracleError> {
        let (w, h) = (cfg.width(), cfg.height());
        let billboards = self
            .layers
            .iter()
            .map(|l| {
                Ok(Billboard {
                    color: l.color.render(w, h, base)?,
                    alpha: l.shape.render(w, h, base)?,
                    distance: l.distance,
                })
            })
            .collect::<Result<Vec<_>, OracleError>>()?;
        let scene = BillboardScene { billboards };
        scene.validate(cfg)?;
        Ok(scene)
    }
}

fn resolve(base: &Path, path: &str) -> PathBuf {
    base.join(path)
}

fn check_extent(
    buf: ImageBuffer,
    w: usize,
    h: usize,
    path: &Path,
) -> Result<ImageBuffer, OracleError> {
    if buf.width() != w || buf.height() != h {
        return Err(OracleError::Io(IoError::Decode {
            path: path.to_path_buf(),
            message: format!("expected {w}x{h}, found {}x{}", buf.width(), buf.height()),
        }));
    }
    Ok(buf)
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Value noise: random lattice colours, smoothly interpolated.
fn value_noise(w: usize, h: usize, cells: usize, rng: &mut ChaCha8Rng) -> ImageBuffer {
    let cells = cells.max(1);
    let n = cells + 1;
    let lattice: Vec<[f64; 3]> = (0..n * n)
        .map(|_| [rng.gen(), rng.gen(), rng.gen()])
        .collect();
    ImageBuffer::from_fn(w, h, 3, |x, y, c| {
        let fx = (x as f64 + 0.5) / w as f64 * cells as f64;
        let fy = (y as f64 + 0.5) / h as f64 * cells as f64;
        let (ix, iy) = (
            (fx.floor() as usize).min(cells - 1),
            (fy.floor() as usize).min(cells - 1),
        );
        let (tx, ty) = (smoothstep(fx - ix as f64), smoothstep(fy - iy as f64));
        let at = |i: usize, j: usize| lattice[j * n + i][c];
        let top = at(ix, iy) * (1.0 - tx) + at(ix + 1, iy) * tx;
        let bottom = at(ix, iy + 1) * (1.0 - tx) + at(ix + 1, iy + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    })
}

impl TextureSpec {
    pub fn render(&self, w: usize, h: usize, base: &Path) -> Result<ImageBuffer, OracleError> {
        Ok(match self {
            TextureSpec::Solid { color } => ImageBuffer::from_fn(w, h, 3, |_, _, c| color[c]),
            TextureSpec::Noise { cells, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let coarse = value_noise(w, h, *cells, &mut rng);
                let fine = value_noise(w, h, cells * 2, &mut rng);
                let mut out = coarse;
                for (o, f) in out.data_mut().iter_mut().zip(fine.data()) {
                    *o = 0.1 + 0.8 * (0.7 * *o + 0.3 * f);
                }
                out
            }
            TextureSpec::Checker { cells, a, b } => {
                let cells = (*cells).max(1);
                ImageBuffer::from_fn(w, h, 3, |x, y, c| {
                    if (x * cells / w + y * cells / h).is_multiple_of(2) {
                        a[c]
                    } else {
                        b[c]
                    }
                })
            }
            TextureSpec::Image { path } => {
                let p = resolve(base, path);
                check_extent(load_color_png(&p)?, w, h, &p)?
            }
        })
    }
}

/// Supersampling grid per pixel edge for procedural coverage.
const COVERAGE_SAMPLES: usize = 4;

impl ShapeSpec {
    fn inside(&self, u: f64, v: f64, aspect: f64) -> bool {
        match self {
            ShapeSpec::Full | ShapeSpec::Image { .. } => true,
            ShapeSpec::Disk { center, radius } => {
                let (dx, dy) = (u - center[0], (v - center[1]) * aspect);
                dx * dx + dy * dy < radius * radius
            }
            ShapeSpec::Rect { center, half } => {
                (u - center[0]).abs() < half[0] && (v - center[1]).abs() < half[1]
            }
            ShapeSpec::Star {
                center,
                outer,
                inner,
                points,
            } => {
                let (dx, dy) = (u - center[0], (v - center[1]) * aspect);
                let r = (dx * dx + dy * dy).sqrt();
                let n = (*points).max(2) as f64;
                let sector = std::f64::consts::TAU / n;
                let phi = dy.atan2(dx).rem_euclid(sector) / sector;
                // linear between tip (phi = 0 or 1) and notch (phi = 0.5)
                let t = (2.0 * phi - 1.0).abs();
                r < inner + (outer - inner) * t
            }
        }
    }

    /// Alpha map: fractional pixel coverage of the shape.
    pub fn render(&self, w: usize, h: usize, base: &Path) -> Result<ImageBuffer, OracleError> {
        if let ShapeSpec::Image { path } = self {
            let p = resolve(base, path);
            return check_extent(load_gray_png(&p)?, w, h, &p);
        }
        let aspect = h as f64 / w as f64;
        let s = COVERAGE_SAMPLES;
        Ok(ImageBuffer::from_fn(w, h, 1, |x, y, _| {
            let mut hits = 0;
            for j in 0..s {
                for i in 0..s {
                    let u = (x as f64 + (i as f64 + 0.5) / s as f64) / w as f64;
                    let v = (y as f64 + (j as f64 + 0.5) / s as f64) / h as f64;
                    hits += self.inside(u, v, aspect) as usize;
                }
            }
            hits as f64 / (s * s) as f64
        }))
    }
}
