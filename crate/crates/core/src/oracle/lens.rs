//! Biconvex lens geometry and the focus relations built on it.
//!
//! The lens is the intersection of two balls of radius `R_c` whose rims
//! meet in a circle of radius `R_a` at `z = 0`. Light travels from the scene
//! (`z > 0`) to the sensor at `z = -D_I`.

use serde::{Deserialize, Serialize};

use super::OracleError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleLensConfig {
    /// `R_c`
    pub sphere_radius: f64,
    /// `R_a`
    pub aperture_radius: f64,
    #[serde(default = "default_eta")]
    pub refractive_index: f64,
    /// `D_I`, measured from the lens centre.
    pub image_plane_distance: f64,
    /// Horizontal field of view in degrees.
    pub fov: f64,
    /// `[width, height]`
    pub sensor_resolution: [usize; 2],
    pub samples_per_pixel: usize,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_eta() -> f64 {
    1.5
}

impl OracleLensConfig {
    pub fn width(&self) -> usize {
        self.sensor_resolution[0]
    }

    pub fn height(&self) -> usize {
        self.sensor_resolution[1]
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let geometry = |m: &str| Err(OracleError::Geometry(m.to_string()));
        let finite = [
            self.sphere_radius,
            self.aperture_radius,
            self.refractive_index,
            self.image_plane_distance,
            self.fov,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return geometry("lens parameters must be finite");
        }
        if self.aperture_radius.is_nan()
            || self.aperture_radius <= 0.0
            || self.aperture_radius >= self.sphere_radius
        {
            return geometry("need 0 < aperture_radius < sphere_radius");
        }
        if self.refractive_index.is_nan() || self.refractive_index <= 1.0 {
            return geometry("refractive_index must exceed 1");
        }
        if !(self.fov > 0.0 && self.fov < 180.0) {
            return geometry("fov must lie in (0, 180) degrees");
        }
        if self.width() == 0 || self.height() == 0 || self.samples_per_pixel == 0 {
            return geometry("sensor resolution and samples_per_pixel must be >= 1");
        }
        let f = focal_length(self)?.max(effective_focal_length(self)?);
        if self.image_plane_distance <= f {
            return Err(OracleError::NotFocusable(format!(
                "image_plane_distance {} must exceed the focal length {f}",
                self.image_plane_distance
            )));
        }
        Ok(())
    }
}

fn check_geometry(cfg: &OracleLensConfig) -> Result<(), OracleError> {
    if cfg.aperture_radius >= cfg.sphere_radius
        || cfg.aperture_radius.is_nan()
        || cfg.aperture_radius < 0.0
    {
        return Err(OracleError::Geometry(format!(
            "aperture radius {} must be below sphere radius {}",
            cfg.aperture_radius, cfg.sphere_radius
        )));
    }
    Ok(())
}

/// `2 sqrt(R_c^2 - R_a^2)`: the separation of the two sphere centres.
pub fn lens_thickness(cfg: &OracleLensConfig) -> Result<f64, OracleError> {
    check_geometry(cfg)?;
    Ok(2.0 * (cfg.sphere_radius.powi(2) - cfg.aperture_radius.powi(2)).sqrt())
}

/// Focal length from the lensmaker form
/// `1/f = (eta - 1)(2/R_c + (eta - 1) d / (eta R_c^2))` with `d` from
/// [`lens_thickness`].
pub fn focal_length(cfg: &OracleLensConfig) -> Result<f64, OracleError> {
    let d = lens_thickness(cfg)?;
    let (eta, rc) = (cfg.refractive_index, cfg.sphere_radius);
    Ok(1.0 / ((eta - 1.0) * (2.0 / rc + (eta - 1.0) * d / (eta * rc * rc))))
}

/// Axial thickness of the glass, vertex to vertex.
pub fn glass_thickness(cfg: &OracleLensConfig) -> Result<f64, OracleError> {
    check_geometry(cfg)?;
    Ok(2.0 * cfg.sphere_radius - lens_thickness(cfg)?)
}

/// Paraxial focal length of the traced element (thick biconvex lens with
/// surface radii `R_c` and `-R_c`).
pub fn effective_focal_length(cfg: &OracleLensConfig) -> Result<f64, OracleError> {
    let t = glass_thickness(cfg)?;
    let (eta, rc) = (cfg.refractive_index, cfg.sphere_radius);
    Ok(1.0 / ((eta - 1.0) * (2.0 / rc - (eta - 1.0) * t / (eta * rc * rc))))
}

/// Distance of either principal plane from the lens centre. Object and
/// image distances in the focus relations are measured from these planes.
pub fn principal_offset(cfg: &OracleLensConfig) -> Result<f64, OracleError> {
    let t = glass_thickness(cfg)?;
    let f = effective_focal_length(cfg)?;
    let inset = f * (cfg.refractive_index - 1.0) * t / (cfg.refractive_index * cfg.sphere_radius);
    Ok(0.5 * t - inset)
}

/// Thin-lens conjugate `1 / (1/f - 1/distance)`.
pub fn conjugate_distance(f: f64, distance: f64) -> Result<f64, OracleError> {
    if distance <= f {
        return Err(OracleError::NotFocusable(format!(
            "distance {distance} does not exceed focal length {f}"
        )));
    }
    Ok(1.0 / (1.0 / f - 1.0 / distance))
}

/// `R_a |D_I - D_I'| / D_I'`.
pub fn coc_from_conjugates(aperture_radius: f64, image_distance: f64, conjugate: f64) -> f64 {
    aperture_radius * (image_distance - conjugate).abs() / conjugate
}

/// Object distance in focus on the sensor, from the lens centre.
pub fn focus_distance(cfg: &OracleLensConfig) -> Result<f64, OracleError> {
    let p = principal_offset(cfg)?;
    Ok(conjugate_distance(effective_focal_length(cfg)?, cfg.image_plane_distance - p)? + p)
}

/// Sensor distance that brings `distance` into focus.
pub fn image_plane_for(cfg: &OracleLensConfig, distance: f64) -> Result<f64, OracleError> {
    let p = principal_offset(cfg)?;
    Ok(conjugate_distance(effective_focal_length(cfg)?, distance - p)? + p)
}

/// Circle-of-confusion radius on the sensor, in scene units, of a point at
/// `distance` from the lens centre.
pub fn coc_radius_physical(cfg: &OracleLensConfig, distance: f64) -> Result<f64, OracleError> {
    let p = principal_offset(cfg)?;
    let conj = conjugate_distance(effective_focal_length(cfg)?, distance - p)?;
    Ok(coc_from_conjugates(
        cfg.aperture_radius,
        cfg.image_plane_distance - p,
        conj,
    ))
}

/// Half-width of the sensor in scene units.
pub fn sensor_half_width(cfg: &OracleLensConfig) -> Result<f64, OracleError> {
    let p = principal_offset(cfg)?;
    Ok((cfg.image_plane_distance - p) * (cfg.fov.to_radians() * 0.5).tan())
}

pub fn pixel_pitch(cfg: &OracleLensConfig) -> Result<f64, OracleError> {
    Ok(2.0 * sensor_half_width(cfg)? / cfg.width() as f64)
}

/// Disparity the renderer uses for an object at `distance`: inverse
/// distance from the object-side principal plane.
pub fn disparity_at(cfg: &OracleLensConfig, distance: f64) -> Result<f64, OracleError> {
    Ok(1.0 / (distance - principal_offset(cfg)?))
}

/// Pixels of blur radius per unit disparity away from focus. With this and
/// [`disparity_at`], `blur_scale * |d - d_focus|` reproduces
/// [`coc_radius_physical`] in pixels.
pub fn blur_scale(cfg: &OracleLensConfig) -> Result<f64, OracleError> {
    let p = principal_offset(cfg)?;
    Ok(cfg.aperture_radius * (cfg.image_plane_distance - p) / pixel_pitch(cfg)?)
}
