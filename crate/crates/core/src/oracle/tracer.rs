//! Monte Carlo ray tracer through the biconvex lens onto textured
//! billboards.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::lens::{principal_offset, sensor_half_width, OracleLensConfig};
use super::OracleError;
use crate::buffer::ImageBuffer;

/// Resampling attempts for a sample whose ray misses the glass or is
/// totally internally reflected.
const MAX_RESAMPLES: usize = 16;

/// Textured plane facing the camera, sized to fill the field of view at
/// its distance.
#[derive(Clone, Debug, PartialEq)]
pub struct Billboard {
    pub color: ImageBuffer,
    pub alpha: ImageBuffer,
    /// Distance from the lens centre.
    pub distance: f64,
}

/// Billboards front to back; the last one is opaque.
#[derive(Clone, Debug, PartialEq)]
pub struct BillboardScene {
    pub billboards: Vec<Billboard>,
}

impl BillboardScene {
    pub fn validate(&self, cfg: &OracleLensConfig) -> Result<(), OracleError> {
        let bad = |m: String| Err(OracleError::InvalidScene(m));
        let Some(back) = self.billboards.last() else {
            return bad("scene has no billboards".into());
        };
        let half = 0.5 * super::lens::glass_thickness(cfg)?;
        for (i, b) in self.billboards.iter().enumerate() {
            if b.color.channels() != 3 || b.alpha.channels() != 1 || !b.color.same_extent(&b.alpha)
            {
                return bad(format!(
                    "billboard {i}: need 3-channel colour and matching 1-channel alpha"
                ));
            }
            if b.distance.is_nan() || b.distance <= half {
                return bad(format!(
                    "billboard {i}: distance {} inside the lens",
                    b.distance
                ));
            }
            if i > 0 && b.distance <= self.billboards[i - 1].distance {
                return bad(format!(
                    "billboard {i}: distances must increase front to back"
                ));
            }
        }
        if back.alpha.data().iter().any(|&a| a < 1.0) {
            return bad("background billboard must be opaque".into());
        }
        Ok(())
    }

    pub fn mirrored(&self) -> Self {
        Self {
            billboards: self
                .billboards
                .iter()
                .map(|b| Billboard {
                    color: b.color.flip_horizontal(),
                    alpha: b.alpha.flip_horizontal(),
                    distance: b.distance,
                })
                .collect(),
        }
    }
}

type Vec3 = [f64; 3];

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn add_scaled(a: Vec3, b: Vec3, t: f64) -> Vec3 {
    [a[0] + t * b[0], a[1] + t * b[1], a[2] + t * b[2]]
}

fn normalize(a: Vec3) -> Vec3 {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
}

impl Ray {
    /// Point where the ray meets the plane `z = z0`, if ahead of it.
    pub fn at_plane(&self, z0: f64) -> Option<[f64; 2]> {
        if self.dir[2] <= 0.0 {
            return None;
        }
        let t = (z0 - self.origin[2]) / self.dir[2];
        (t >= 0.0).then(|| {
            [
                self.origin[0] + t * self.dir[0],
                self.origin[1] + t * self.dir[1],
            ]
        })
    }
}

/// Snell refraction of unit `d` at unit normal `n` facing against `d`.
fn refract(d: Vec3, n: Vec3, ratio: f64) -> Option<Vec3> {
    let cos_i = -dot(n, d);
    let sin2_t = ratio * ratio * (1.0 - cos_i * cos_i);
    if sin2_t > 1.0 {
        return None;
    }
    let k = ratio * cos_i - (1.0 - sin2_t).sqrt();
    Some(normalize([
        ratio * d[0] + k * n[0],
        ratio * d[1] + k * n[1],
        ratio * d[2] + k * n[2],
    ]))
}

/// Ray parameters where `origin + t dir` meets the sphere, ascending.
fn sphere_hits(origin: Vec3, dir: Vec3, center: Vec3, radius: f64) -> Option<(f64, f64)> {
    let oc = sub(origin, center);
    let b = dot(oc, dir);
    let c = dot(oc, oc) - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some((-b - s, -b + s))
}

/// Camera geometry derived once from the lens description.
#[derive(Clone, Copy, Debug)]
pub struct Camera {
    rc: f64,
    ra: f64,
    eta: f64,
    /// Distance of each sphere centre from the lens centre.
    center_offset: f64,
    principal: f64,
    sensor_z: f64,
    half_w: f64,
    half_h: f64,
    width: usize,
    height: usize,
    tan_half: f64,
}

impl Camera {
    pub fn new(cfg: &OracleLensConfig) -> Result<Self, OracleError> {
        cfg.validate()?;
        let half_w = sensor_half_width(cfg)?;
        Ok(Self {
            rc: cfg.sphere_radius,
            ra: cfg.aperture_radius,
            eta: cfg.refractive_index,
            center_offset: 0.5 * super::lens::lens_thickness(cfg)?,
            principal: principal_offset(cfg)?,
            sensor_z: -cfg.image_plane_distance,
            half_w,
            half_h: half_w * cfg.height() as f64 / cfg.width() as f64,
            width: cfg.width(),
            height: cfg.height(),
            tan_half: (cfg.fov.to_radians() * 0.5).tan(),
        })
    }

    /// Sensor point of pixel `(x, y)`'s centre. The image is inverted on the
    /// sensor so that pixel rows read upright.
    pub fn sensor_point(&self, x: usize, y: usize) -> Vec3 {
        let u = 2.0 * (x as f64 + 0.5) / self.width as f64 - 1.0;
        let v = 2.0 * (y as f64 + 0.5) / self.height as f64 - 1.0;
        [-u * self.half_w, -v * self.half_h, self.sensor_z]
    }

    /// Refracts the ray from `sensor` towards `aperture` (a point on the
    /// `z = 0` disk) through both glass surfaces.
    pub fn through_lens(&self, sensor: Vec3, aperture: [f64; 2]) -> Option<Ray> {
        let rim2 = self.ra * self.ra * (1.0 + 1e-12);
        let dir = normalize(sub([aperture[0], aperture[1], 0.0], sensor));
        let back = [0.0, 0.0, self.center_offset];
        let (t0, _) = sphere_hits(sensor, dir, back, self.rc)?;
        let p0 = add_scaled(sensor, dir, t0);
        if p0[2] > 0.0 || p0[0] * p0[0] + p0[1] * p0[1] > rim2 {
            return None;
        }
        let n0 = normalize(sub(p0, back));
        let inside = refract(dir, n0, 1.0 / self.eta)?;
        let front = [0.0, 0.0, -self.center_offset];
        let (_, t1) = sphere_hits(p0, inside, front, self.rc)?;
        let p1 = add_scaled(p0, inside, t1);
        if p1[2] < 0.0 || p1[0] * p1[0] + p1[1] * p1[1] > rim2 {
            return None;
        }
        let n1 = normalize(sub(front, p1));
        let out = refract(inside, n1, self.eta)?;
        Some(Ray {
            origin: p1,
            dir: out,
        })
    }

    /// Texel of a billboard at `distance` hit at lateral position `xy`,
    /// clamped to the billboard's edge.
    fn texel(&self, xy: [f64; 2], distance: f64) -> (usize, usize) {
        let half_w = (distance - self.principal) * self.tan_half;
        let half_h = half_w * self.height as f64 / self.width as f64;
        let u = (xy[0] / half_w + 1.0) * 0.5 * self.width as f64;
        let v = (xy[1] / half_h + 1.0) * 0.5 * self.height as f64;
        let clamp = |t: f64, n: usize| (t.floor().max(0.0) as usize).min(n - 1);
        (clamp(u, self.width), clamp(v, self.height))
    }

    /// Straight-alpha over compositing of the billboards along `ray`.
    pub fn shade(&self, scene: &BillboardScene, ray: &Ray) -> Option<[f64; 3]> {
        let mut acc = [0.0; 3];
        let mut transmit = 1.0;
        for b in &scene.billboards {
            let xy = ray.at_plane(b.distance)?;
            let (tx, ty) = self.texel(xy, b.distance);
            let a = b.alpha.get(tx, ty, 0);
            if a > 0.0 {
                for (c, v) in acc.iter_mut().enumerate() {
                    *v += transmit * a * b.color.get(tx, ty, c);
                }
                transmit *= 1.0 - a;
            }
            if transmit <= 0.0 {
                break;
            }
        }
        Some(acc)
    }
}

/// Shirley-Chiu concentric map of the unit square onto the unit disk.
fn concentric_disk(u: f64, v: f64) -> [f64; 2] {
    let (a, b) = (2.0 * u - 1.0, 2.0 * v - 1.0);
    if a == 0.0 && b == 0.0 {
        return [0.0, 0.0];
    }
    let q = std::f64::consts::FRAC_PI_4;
    let (r, phi) = if a.abs() > b.abs() {
        (a, q * (b / a))
    } else {
        (b, 2.0 * q - q * (a / b))
    };
    [r * phi.cos(), r * phi.sin()]
}

/// Per-pixel generator: one ChaCha stream per pixel index, so the result
/// does not depend on scheduling.
fn pixel_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Stratified aperture samples for one pixel, in scene units.
fn aperture_sample(rng: &mut ChaCha8Rng, k: usize, spp: usize, ra: f64) -> [f64; 2] {
    let cols = (spp as f64).sqrt().ceil() as usize;
    let rows = spp.div_ceil(cols);
    let (sx, sy) = (k % cols, k / cols);
    let u = (sx as f64 + rng.gen::<f64>()) / cols as f64;
    let v = (sy as f64 + rng.gen::<f64>()) / rows as f64;
    let [x, y] = concentric_disk(u, v);
    [ra * x, ra * y]
}

/// Mean radiance over `spp` aperture samples for pixel `(x, y)`.
pub fn trace_pixel(
    camera: &Camera,
    cfg: &OracleLensConfig,
    scene: &BillboardScene,
    x: usize,
    y: usize,
) -> [f64; 3] {
    let spp = cfg.samples_per_pixel;
    let mut rng = pixel_rng(cfg.rng_seed, y * camera.width + x);
    let sensor = camera.sensor_point(x, y);
    let mut sum = [0.0; 3];
    let mut count = 0usize;
    for k in 0..spp {
        let mut aperture = aperture_sample(&mut rng, k, spp, camera.ra);
        for _ in 0..MAX_RESAMPLES {
            if let Some(rgb) = camera
                .through_lens(sensor, aperture)
                .and_then(|ray| camera.shade(scene, &ray))
            {
                for c in 0..3 {
                    sum[c] += rgb[c];
                }
                count += 1;
                break;
            }
            let [u, v] = [rng.gen::<f64>(), rng.gen::<f64>()];
            let [px, py] = concentric_disk(u, v);
            aperture = [camera.ra * px, camera.ra * py];
        }
    }
    let n = count.max(1) as f64;
    sum.map(|s| s / n)
}

/// Traces every sensor pixel. Linear RGB.
pub fn trace_image(
    cfg: &OracleLensConfig,
    scene: &BillboardScene,
) -> Result<ImageBuffer, OracleError> {
    let camera = Camera::new(cfg)?;
    scene.validate(cfg)?;
    if scene.billboards[0].color.width() != cfg.width()
        || scene.billboards[0].color.height() != cfg.height()
    {
        return Err(OracleError::InvalidScene(
            "billboard textures must match the sensor resolution".into(),
        ));
    }
    let (w, h) = (cfg.width(), cfg.height());
    let mut out = ImageBuffer::new(w, h, 3);
    out.data_mut()
        .par_chunks_mut(w * 3)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..w {
                let rgb = trace_pixel(&camera, cfg, scene, x, y);
                row[x * 3..x * 3 + 3].copy_from_slice(&rgb);
            }
        });
    Ok(out)
}

/// Projection through the principal points with no lens: every pixel sees
/// the billboard texel straight along its chief ray.
pub fn pinhole_image(
    cfg: &OracleLensConfig,
    scene: &BillboardScene,
) -> Result<ImageBuffer, OracleError> {
    let camera = Camera::new(cfg)?;
    scene.validate(cfg)?;
    let (w, h) = (cfg.width(), cfg.height());
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let s = camera.sensor_point(x, y);
            let ray = Ray {
                origin: [0.0, 0.0, camera.principal],
                dir: normalize([-s[0], -s[1], -s[2] - camera.principal]),
            };
            data.extend(camera.shade(scene, &ray).expect("chief ray points forward"));
        }
    }
    Ok(ImageBuffer::from_vec(w, h, 3, data).expect("sized above"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::lens::{coc_radius_physical, focus_distance, pixel_pitch};

    fn config(spp: usize) -> OracleLensConfig {
        OracleLensConfig {
            sphere_radius: 20.0,
            aperture_radius: 0.6,
            refractive_index: 1.5,
            image_plane_distance: 27.0,
            fov: 20.0,
            sensor_resolution: [32, 32],
            samples_per_pixel: spp,
            rng_seed: 11,
        }
    }

    fn checker(w: usize, h: usize, cell: usize) -> ImageBuffer {
        ImageBuffer::from_fn(w, h, 3, |x, y, c| {
            if (x / cell + y / cell).is_multiple_of(2) {
                [0.9, 0.7, 0.2][c]
            } else {
                [0.1, 0.2, 0.6][c]
            }
        })
    }

    fn single(cfg: &OracleLensConfig, color: ImageBuffer, distance: f64) -> BillboardScene {
        let alpha = ImageBuffer::filled(cfg.width(), cfg.height(), 1, 1.0);
        BillboardScene {
            billboards: vec![Billboard {
                color,
                alpha,
                distance,
            }],
        }
    }

    #[test]
    fn in_focus_billboard_is_sharp() {
        let cfg = config(256);
        let db = focus_distance(&cfg).unwrap();
        let scene = single(&cfg, checker(32, 32, 4), db);
        let traced = trace_image(&cfg, &scene).unwrap();
        let pin = pinhole_image(&cfg, &scene).unwrap();
        let worst = traced
            .data()
            .iter()
            .zip(pin.data())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(worst < 2.0 / 255.0, "{worst}");
    }

    #[test]
    fn pinhole_matches_textures() {
        let cfg = config(1);
        let tex = checker(32, 32, 3);
        let pin = pinhole_image(&cfg, &single(&cfg, tex.clone(), 40.0)).unwrap();
        assert_eq!(pin, tex);
    }

    #[test]
    fn constant_billboard_gives_constant_image() {
        let cfg = config(16);
        let scene = single(&cfg, ImageBuffer::filled(32, 32, 3, 0.37), 45.0);
        let img = trace_image(&cfg, &scene).unwrap();
        assert!(img.data().iter().all(|&v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn tiny_aperture_tends_to_pinhole() {
        let mut cfg = config(4);
        cfg.aperture_radius = 1e-6;
        let scene = single(&cfg, checker(32, 32, 2), 36.0);
        let traced = trace_image(&cfg, &scene).unwrap();
        assert_eq!(traced, pinhole_image(&cfg, &scene).unwrap());
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let cfg = config(8);
        let scene = single(&cfg, checker(32, 32, 4), 40.0);
        assert_eq!(
            trace_image(&cfg, &scene).unwrap(),
            trace_image(&cfg, &scene).unwrap()
        );
    }

    #[test]
    fn point_source_spread_matches_paraxial_coc() {
        let cfg = config(1);
        let cam = Camera::new(&cfg).unwrap();
        let sensor = [0.0, 0.0, -cfg.image_plane_distance];
        let pitch = pixel_pitch(&cfg).unwrap();
        for distance in [30.0, 50.0, 200.0] {
            let mut spread = 0.0_f64;
            for k in 0..64 {
                let phi = k as f64 / 64.0 * std::f64::consts::TAU;
                let a = [
                    0.999 * cfg.aperture_radius * phi.cos(),
                    0.999 * cfg.aperture_radius * phi.sin(),
                ];
                let hit = cam
                    .through_lens(sensor, a)
                    .unwrap()
                    .at_plane(distance)
                    .unwrap();
                spread = spread.max((hit[0] * hit[0] + hit[1] * hit[1]).sqrt());
            }
            // footprint on the billboard, back to sensor pixels
            let px =
                spread / ((distance - cam.principal) * cam.tan_half) * 0.5 * cfg.width() as f64;
            let expected = coc_radius_physical(&cfg, distance).unwrap() / pitch;
            assert!(
                (px - expected).abs() <= 0.1 * expected,
                "{distance}: {px} vs {expected}"
            );
        }
    }
}
