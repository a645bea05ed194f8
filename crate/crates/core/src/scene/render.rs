//! Per-pixel ray casting of the phantom and probe.

use image::{GrayImage, Luma, Rgb, RgbImage};
use nalgebra::{Point2, Point3, Vector3};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Sample, Scene, ViewImages};
use crate::error::{Error, Result};
use crate::geometry::{intersect_ray_surface_within, DepthMap, Ray3, Side};
use crate::seed::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    /// Standard deviation of the laser spot (pixels).
    pub spot_sigma_px: f64,
    /// Mean level of the dark captures (8-bit).
    pub dark_level: u8,
    /// Uniform sensor noise amplitude on the dark captures.
    pub dark_noise: u8,
    /// Uniform sensor noise amplitude on the standard capture.
    pub standard_noise: u8,
    /// Ambient term of the Lambertian shading.
    pub ambient: f64,
    pub probe_gray: u8,
    pub tip_gray: u8,
    pub background: u8,
    /// Also produce depth maps.
    pub with_depth: bool,
    /// Fraction of pixels whose depth is withheld.
    pub invalid_depth_fraction: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            spot_sigma_px: 3.0,
            dark_level: 2,
            dark_noise: 6,
            standard_noise: 3,
            ambient: 0.15,
            probe_gray: 200,
            tip_gray: 55,
            background: 6,
            with_depth: false,
            invalid_depth_fraction: 0.0,
        }
    }
}

impl RenderConfig {
    /// Upper bound of every channel of a laser-off capture.
    pub fn ambient_floor(&self) -> u8 {
        self.dark_level.saturating_add(self.dark_noise)
    }
}

/// Which part of the probe a pixel sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeLabel {
    None,
    Body,
    TipCap,
}

#[derive(Debug, Clone, Copy)]
struct ProbeHit {
    t: f64,
    normal: Vector3<f64>,
    label: ProbeLabel,
}

fn intersect_probe(ray: &Ray3, scene: &Scene) -> Option<ProbeHit> {
    let probe = &scene.probe;
    let a = probe.axis_dir;
    let r = probe.radius;
    let w = ray.origin - probe.tip;
    let d = ray.direction;
    let d_perp = d - a * d.dot(&a);
    let w_perp = w - a * w.dot(&a);
    let qa = d_perp.norm_squared();
    let qb = 2.0 * d_perp.dot(&w_perp);
    let qc = w_perp.norm_squared() - r * r;
    let mut best: Option<ProbeHit> = None;
    let mut consider = |hit: ProbeHit| {
        if hit.t > 0.0 && best.is_none_or(|b| hit.t < b.t) {
            best = Some(hit);
        }
    };

    if qa > 1e-300 {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for t in [(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)] {
                let p = ray.at(t);
                let s = (p - probe.tip).dot(&a);
                if s <= 0.0 && s >= -probe.visible_length {
                    let radial = (p - probe.tip) - a * s;
                    let label = if s >= -probe.tip_cap_length {
                        ProbeLabel::TipCap
                    } else {
                        ProbeLabel::Body
                    };
                    consider(ProbeHit {
                        t,
                        normal: radial / r,
                        label,
                    });
                }
            }
        }
    }
    // end disk at the tip
    let denom = d.dot(&a);
    if denom.abs() > 1e-300 {
        let t = -(w.dot(&a)) / denom;
        let p = ray.at(t);
        if (p - probe.tip).norm_squared() <= r * r {
            consider(ProbeHit {
                t,
                normal: a,
                label: ProbeLabel::TipCap,
            });
        }
    }
    best
}

enum Hit {
    Probe(ProbeHit, Point3<f64>),
    Surface(Point3<f64>),
    Background,
}

fn cast(ray: &Ray3, scene: &Scene) -> Hit {
    let probe = intersect_probe(ray, scene);
    let limit = probe.map_or(f64::INFINITY, |p| p.t);
    match intersect_ray_surface_within(ray, scene.surface.as_ref(), limit) {
        Some(t) => Hit::Surface(ray.at(t)),
        None => match probe {
            Some(p) => Hit::Probe(p, ray.at(p.t)),
            None => Hit::Background,
        },
    }
}

fn pixel_rays(scene: &Scene, side: Side) -> impl Iterator<Item = (u32, u32, Ray3)> + '_ {
    let cam = scene.rig.camera(side);
    let (w, h) = (cam.width, cam.height);
    (0..h).flat_map(move |y| {
        (0..w).map(move |x| {
            let ray = scene
                .rig
                .pixel_ray(&Point2::new(f64::from(x), f64::from(y)), side);
            (x, y, ray)
        })
    })
}

/// Per-pixel probe part labels of one view (occlusion by tissue respected).
pub fn render_probe_labels(scene: &Scene, side: Side) -> Vec<ProbeLabel> {
    pixel_rays(scene, side)
        .map(|(_, _, ray)| match cast(&ray, scene) {
            Hit::Probe(p, _) => p.label,
            _ => ProbeLabel::None,
        })
        .collect()
}

fn withhold_depths(depth: &mut DepthMap, fraction: f64, rng: &mut impl Rng) {
    let total = depth.values.len();
    let count = ((fraction.clamp(0.0, 1.0) * total as f64).floor() as usize).min(total);
    for i in index::sample(rng, total, count) {
        depth.values[i] = crate::geometry::INVALID_DEPTH;
    }
}

/// Z-depth of the first surface or probe hit per pixel. Exactly
/// `floor(invalid_fraction * W * H)` pixels are additionally withheld,
/// chosen deterministically from the scene identity.
pub fn render_depth(scene: &Scene, side: Side, invalid_fraction: f64) -> DepthMap {
    let cam = scene.rig.camera(side);
    let mut depth = DepthMap::new_invalid(cam.width, cam.height);
    for (x, y, ray) in pixel_rays(scene, side) {
        let z = match cast(&ray, scene) {
            Hit::Probe(_, p) | Hit::Surface(p) => Some(p.z),
            Hit::Background => None,
        };
        depth.set(x, y, z);
    }
    let mut rng = depth_rng(scene, side);
    withhold_depths(&mut depth, invalid_fraction, &mut rng);
    depth
}

fn depth_rng(scene: &Scene, side: Side) -> rand_chacha::ChaCha8Rng {
    stream_rng(
        scene.seed,
        "depth",
        &[
            u64::from(scene.pose_index),
            u64::from(scene.stage_index),
            side.index() as u64,
        ],
    )
}

fn noisy(value: f64, noise: u8, rng: &mut impl Rng) -> u8 {
    let n = if noise == 0 {
        0.0
    } else {
        f64::from(rng.gen_range(-i32::from(noise)..=i32::from(noise)))
    };
    (value + n).round().clamp(0.0, 255.0) as u8
}

fn dark_pixel(cfg: &RenderConfig, rng: &mut impl Rng) -> [u8; 3] {
    let mut px = [0u8; 3];
    for c in &mut px {
        *c = cfg.dark_level + rng.gen_range(0..=cfg.dark_noise);
    }
    px
}

struct ViewRender {
    images: ViewImages,
    mask: GrayImage,
    depth: Option<DepthMap>,
}

fn render_side(scene: &Scene, side: Side, gt_px: Point2<f64>, cfg: &RenderConfig) -> ViewRender {
    let cam = scene.rig.camera(side);
    let (w, h) = (cam.width, cam.height);
    let mut standard = RgbImage::new(w, h);
    let mut mask = GrayImage::new(w, h);
    let mut depth = cfg.with_depth.then(|| DepthMap::new_invalid(w, h));
    let ids = [
        u64::from(scene.pose_index),
        u64::from(scene.stage_index),
        side.index() as u64,
    ];
    let mut rng = stream_rng(scene.seed, "standard", &ids);
    let shade = |n: Vector3<f64>, d: Vector3<f64>| cfg.ambient + (1.0 - cfg.ambient) * n.dot(&-d).max(0.0);

    for (x, y, ray) in pixel_rays(scene, side) {
        let (rgb, z) = match cast(&ray, scene) {
            Hit::Surface(p) => {
                let g = scene.surface.gradient_at(p.x, p.y).unwrap_or([0.0, 0.0]);
                let n = Vector3::new(g[0], g[1], -1.0).normalize();
                let k = shade(n, ray.direction);
                let albedo = scene.surface.albedo_at(p.x, p.y).unwrap_or([0, 0, 0]);
                (albedo.map(|a| f64::from(a) * k), Some(p.z))
            }
            Hit::Probe(hit, p) => {
                mask.put_pixel(x, y, Luma([255]));
                let base = match hit.label {
                    ProbeLabel::TipCap => cfg.tip_gray,
                    _ => cfg.probe_gray,
                };
                let n = if hit.normal.dot(&ray.direction) > 0.0 {
                    -hit.normal
                } else {
                    hit.normal
                };
                let v = f64::from(base) * shade(n, ray.direction);
                ([v; 3], Some(p.z))
            }
            Hit::Background => ([f64::from(cfg.background); 3], None),
        };
        let px = rgb.map(|c| noisy(c, cfg.standard_noise, &mut rng));
        standard.put_pixel(x, y, Rgb(px));
        if let Some(d) = depth.as_mut() {
            d.set(x, y, z);
        }
    }
    if let Some(d) = depth.as_mut() {
        withhold_depths(d, cfg.invalid_depth_fraction, &mut depth_rng(scene, side));
    }

    let mut rng_on = stream_rng(scene.seed, "laser-on", &ids);
    let mut rng_off = stream_rng(scene.seed, "laser-off", &ids);
    let mut laser_on_dark = RgbImage::new(w, h);
    let mut laser_off_dark = RgbImage::new(w, h);
    let two_sigma2 = 2.0 * cfg.spot_sigma_px * cfg.spot_sigma_px;
    for y in 0..h {
        for x in 0..w {
            let mut on = dark_pixel(cfg, &mut rng_on);
            let dx = f64::from(x) - gt_px.x;
            let dy = f64::from(y) - gt_px.y;
            let spot = 255.0 * (-(dx * dx + dy * dy) / two_sigma2).exp();
            on[0] = (f64::from(on[0]) + spot).round().min(255.0) as u8;
            laser_on_dark.put_pixel(x, y, Rgb(on));
            laser_off_dark.put_pixel(x, y, Rgb(dark_pixel(cfg, &mut rng_off)));
        }
    }

    ViewRender {
        images: ViewImages {
            standard,
            laser_on_dark,
            laser_off_dark,
        },
        mask,
        depth,
    }
}

/// Renders both cameras under the three illumination conditions and fills
/// the analytic ground truth.
pub fn render_views(scene: &Scene, cfg: &RenderConfig) -> Result<Sample> {
    let gt_3d = scene
        .intersection()
        .ok_or(Error::NoIntersection("probe axis misses the surface"))?;
    let gt_px = [
        scene.rig.project(&gt_3d, Side::Left)?,
        scene.rig.project(&gt_3d, Side::Right)?,
    ];
    let left = render_side(scene, Side::Left, gt_px[0], cfg);
    let right = render_side(scene, Side::Right, gt_px[1], cfg);
    let depth = match (left.depth, right.depth) {
        (Some(l), Some(r)) => Some([l, r]),
        _ => None,
    };
    Ok(Sample {
        id: scene.id(),
        views: [left.images, right.images],
        gt_3d,
        gt_px,
        depth,
        probe_masks: [left.mask, right.mask],
    })
}
