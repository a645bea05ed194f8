//! Rectified pinhole stereo rig, ray utilities and ray/heightfield intersection.
//!
//! All 3D quantities are expressed in the left-camera frame, in meters:
//! +x right, +y down, +z along the optical axis. Pixel coordinates put the
//! centre of pixel `(i, j)` at `(i, j)`.

use std::path::Path;

use image::{ImageBuffer, Luma};
use nalgebra::{Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use crate::scene::render::render_depth;

/// Pinhole intrinsics of one camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cx < f64::from(self.width)
            && self.cy >= 0.0
            && self.cy < f64::from(self.height);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid intrinsics {self:?}")))
        }
    }

    /// Whether a pixel coordinate lies inside the image rectangle.
    pub fn contains(&self, pix: &Point2<f64>) -> bool {
        pix.x >= 0.0
            && pix.y >= 0.0
            && pix.x <= f64::from(self.width) - 1.0
            && pix.y <= f64::from(self.height) - 1.0
    }

    fn scaled(&self, factor: f64) -> Self {
        let width = (f64::from(self.width) * factor).round() as u32;
        let height = (f64::from(self.height) * factor).round() as u32;
        Self {
            fx: self.fx * factor,
            fy: self.fy * factor,
            cx: self.cx * factor,
            cy: self.cy * factor,
            width,
            height,
        }
    }
}

/// Which camera of the rig.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }
}

/// A rectified stereo pair: the right camera is the left one translated by
/// `baseline` meters along the left camera's +x axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StereoRig {
    pub left: CameraIntrinsics,
    pub right: CameraIntrinsics,
    pub baseline: f64,
}

impl Default for StereoRig {
    fn default() -> Self {
        Self::canonical()
    }
}

impl StereoRig {
    /// 640x480, fx = fy = 400, principal point (320, 240), 5 mm baseline.
    pub fn canonical() -> Self {
        let cam = CameraIntrinsics {
            fx: 400.0,
            fy: 400.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
        };
        Self {
            left: cam,
            right: cam,
            baseline: 0.005,
        }
    }

    pub fn new(left: CameraIntrinsics, right: CameraIntrinsics, baseline: f64) -> Result<Self> {
        let rig = Self {
            left,
            right,
            baseline,
        };
        rig.validate()?;
        Ok(rig)
    }

    pub fn validate(&self) -> Result<()> {
        self.left.validate()?;
        self.right.validate()?;
        if !(self.baseline > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "baseline must be positive, got {}",
                self.baseline
            )));
        }
        if self.left.width != self.right.width || self.left.height != self.right.height {
            return Err(Error::InvalidArgument(
                "left and right cameras must share image size".into(),
            ));
        }
        Ok(())
    }

    /// Same geometry imaged at a different resolution (focal lengths and
    /// principal point scale with the image).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            left: self.left.scaled(factor),
            right: self.right.scaled(factor),
            baseline: self.baseline,
        }
    }

    pub fn camera(&self, side: Side) -> &CameraIntrinsics {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn width(&self) -> u32 {
        self.left.width
    }

    pub fn height(&self) -> u32 {
        self.left.height
    }

    /// Optical centre of the selected camera in the left-camera frame.
    pub fn center(&self, side: Side) -> Point3<f64> {
        match side {
            Side::Left => Point3::origin(),
            Side::Right => Point3::new(self.baseline, 0.0, 0.0),
        }
    }

    fn x_offset(&self, side: Side) -> f64 {
        match side {
            Side::Left => 0.0,
            Side::Right => self.baseline,
        }
    }

    /// Pinhole projection of a left-frame point into the selected image. No
    /// clamping to image bounds.
    pub fn project(&self, p: &Point3<f64>, side: Side) -> Result<Point2<f64>> {
        if !(p.z > 0.0) {
            return Err(Error::BehindCamera(p.z));
        }
        let cam = self.camera(side);
        let x = p.x - self.x_offset(side);
        Ok(Point2::new(
            cam.fx * x / p.z + cam.cx,
            cam.fy * p.y / p.z + cam.cy,
        ))
    }

    /// Inverse of [`project`](Self::project) at a known depth (z).
    pub fn backproject(&self, pix: &Point2<f64>, depth: f64, side: Side) -> Result<Point3<f64>> {
        if !(depth > 0.0) {
            return Err(Error::InvalidDepth(depth));
        }
        let cam = self.camera(side);
        let x = (pix.x - cam.cx) / cam.fx * depth + self.x_offset(side);
        let y = (pix.y - cam.cy) / cam.fy * depth;
        Ok(Point3::new(x, y, depth))
    }

    /// Viewing ray through a pixel of the selected camera.
    pub fn pixel_ray(&self, pix: &Point2<f64>, side: Side) -> Ray3 {
        let cam = self.camera(side);
        let dir = Vector3::new((pix.x - cam.cx) / cam.fx, (pix.y - cam.cy) / cam.fy, 1.0);
        Ray3::new(self.center(side), dir)
    }

    /// Midpoint of the shortest segment between the two viewing rays.
    pub fn triangulate(&self, pix_left: &Point2<f64>, pix_right: &Point2<f64>) -> Result<Point3<f64>> {
        if !(pix_left.x.is_finite()
            && pix_left.y.is_finite()
            && pix_right.x.is_finite()
            && pix_right.y.is_finite())
        {
            return Err(Error::InvalidArgument("non-finite pixel".into()));
        }
        let a = self.pixel_ray(pix_left, Side::Left);
        let b = self.pixel_ray(pix_right, Side::Right);
        // cross-product form; avoids the cancellation in 1 - (da.db)^2 when
        // the rays are nearly parallel (long range, short baseline)
        let n = a.direction.cross(&b.direction);
        let nn = n.norm_squared();
        if nn < 1e-24 {
            return Err(Error::NoIntersection("viewing rays are parallel"));
        }
        let w = b.origin - a.origin;
        let s = w.cross(&b.direction).dot(&n) / nn;
        let t = w.cross(&a.direction).dot(&n) / nn;
        if s <= 0.0 || t <= 0.0 {
            return Err(Error::NoIntersection("rays meet behind the cameras"));
        }
        let pa = a.at(s);
        let pb = b.at(t);
        Ok(Point3::from((pa.coords + pb.coords) * 0.5))
    }
}

/// Half-line with unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray3 {
    pub origin: Point3<f64>,
    pub direction: Vector3<f64>,
}

impl Ray3 {
    /// Builds a ray, normalizing `direction`.
    pub fn new(origin: Point3<f64>, direction: Vector3<f64>) -> Self {
        Self {
            origin,
            direction: direction.normalize(),
        }
    }

    pub fn at(&self, t: f64) -> Point3<f64> {
        self.origin + self.direction * t
    }
}

/// A surface of the form z = h(x, y) over an axis-aligned rectangle.
pub trait Heightfield {
    /// Height at (x, y), or `None` outside the domain.
    fn height_at(&self, x: f64, y: f64) -> Option<f64>;
    /// `[x_min, x_max, y_min, y_max]`.
    fn domain(&self) -> [f64; 4];
    /// `[z_min, z_max]` over the domain.
    fn height_range(&self) -> [f64; 2];
    /// Smallest grid cell edge, which fixes the marching step.
    fn cell_size(&self) -> f64;
    /// Upper bounds on |dh/dx| and |dh/dy|, if known. They let the marcher
    /// take longer steps where the ray is far from the surface.
    fn max_slope(&self) -> Option<[f64; 2]> {
        None
    }
}

/// Bisection stops once the bracket is narrower than this (meters).
pub const BISECTION_TOLERANCE: f64 = 1e-7;

/// First crossing of `ray` with the front side of the heightfield.
///
/// Marches at a quarter of the cell size through the surface's bounding box
/// and refines the first negative-to-non-negative crossing of
/// `z(t) - h(x(t), y(t))` by bisection. With slope bounds the march skips
/// ahead by `|gap| / rate`, a distance over which the gap cannot change sign.
pub fn intersect_ray_surface<S: Heightfield + ?Sized>(ray: &Ray3, surface: &S) -> Option<Point3<f64>> {
    intersect_ray_surface_within(ray, surface, f64::INFINITY).map(|t| ray.at(t))
}

/// Like [`intersect_ray_surface`] but only accepts hits with `t < t_limit`,
/// returning the ray parameter.
pub fn intersect_ray_surface_within<S: Heightfield + ?Sized>(
    ray: &Ray3,
    surface: &S,
    t_limit: f64,
) -> Option<f64> {
    let (t_enter, t_exit) = clip_to_box(ray, surface)?;
    let t_exit = t_exit.min(t_limit);
    if t_enter >= t_exit {
        return None;
    }
    let step = surface.cell_size() * 0.25;
    let gap = |t: f64| -> Option<f64> {
        let p = ray.at(t);
        surface.height_at(p.x, p.y).map(|h| p.z - h)
    };
    // largest rate of change of the gap along the ray
    let rate = surface.max_slope().map(|[sx, sy]| {
        let d = ray.direction;
        d.z.abs() + sx * d.x.abs() + sy * d.y.abs()
    });

    let mut prev_t = t_enter;
    let mut prev = gap(t_enter);
    let mut t = t_enter;
    while t < t_exit {
        let advance = match (prev, rate) {
            (Some(g), Some(r)) if r > 0.0 => step.max(g.abs() / r),
            _ => step,
        };
        t = (t + advance).min(t_exit);
        let cur = gap(t);
        if let (Some(a), Some(b)) = (prev, cur) {
            if a < 0.0 && b >= 0.0 {
                return Some(refine(&gap, prev_t, t, a, b));
            }
        }
        prev_t = t;
        prev = cur;
    }
    None
}

fn refine(gap: &impl Fn(f64) -> Option<f64>, mut lo: f64, mut hi: f64, mut g_lo: f64, mut g_hi: f64) -> f64 {
    while hi - lo >= BISECTION_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        match gap(mid) {
            Some(g) if g < 0.0 => {
                lo = mid;
                g_lo = g;
            }
            Some(g) => {
                hi = mid;
                g_hi = g;
            }
            None => break,
        }
    }
    // secant inside the final bracket; exact for locally planar patches
    let t = lo - g_lo * (hi - lo) / (g_hi - g_lo);
    if t.is_finite() {
        t.clamp(lo, hi)
    } else {
        0.5 * (lo + hi)
    }
}

/// Slab test against the surface's bounding box, clipped to t >= 0.
pub(crate) fn clip_to_box<S: Heightfield + ?Sized>(ray: &Ray3, surface: &S) -> Option<(f64, f64)> {
    let [x0, x1, y0, y1] = surface.domain();
    let [z0, z1] = surface.height_range();
    let lo = [x0, y0, z0];
    let hi = [x1, y1, z1];
    let mut t_min = 0.0_f64;
    let mut t_max = f64::INFINITY;
    for axis in 0..3 {
        let o = ray.origin[axis];
        let d = ray.direction[axis];
        if d.abs() < 1e-300 {
            if o < lo[axis] || o > hi[axis] {
                return None;
            }
            continue;
        }
        let mut ta = (lo[axis] - o) / d;
        let mut tb = (hi[axis] - o) / d;
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t_min = t_min.max(ta);
        t_max = t_max.min(tb);
    }
    // a flat surface has a zero-thickness box; widen it a hair so the march
    // brackets the plane
    let pad = 1e-9;
    let t_min = (t_min - pad).max(0.0);
    let t_max = t_max + pad;
    (t_min < t_max).then_some((t_min, t_max))
}

/// Value stored for pixels without a depth measurement.
pub const INVALID_DEPTH: f64 = -1.0;

/// Per-pixel z-depth in meters; invalid pixels hold [`INVALID_DEPTH`].
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
}

impl DepthMap {
    pub fn new_invalid(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            values: vec![INVALID_DEPTH; width as usize * height as usize],
        }
    }

    fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn get(&self, x: u32, y: u32) -> Option<f64> {
        if x >= self.width || y >= self.height {
            return None;
        }
        let d = self.values[self.index(x, y)];
        (d > 0.0).then_some(d)
    }

    pub fn set(&mut self, x: u32, y: u32, depth: Option<f64>) {
        let i = self.index(x, y);
        self.values[i] = match depth {
            Some(d) if d > 0.0 => d,
            _ => INVALID_DEPTH,
        };
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|d| **d > 0.0).count()
    }

    /// 16-bit encoding: `round(depth * 10000)`, 0 = invalid. Depths beyond
    /// 6.5535 m saturate.
    pub fn to_png16(&self) -> ImageBuffer<Luma<u16>, Vec<u16>> {
        let data = self
            .values
            .iter()
            .map(|&d| {
                if d > 0.0 {
                    (d * 10_000.0).round().clamp(1.0, f64::from(u16::MAX)) as u16
                } else {
                    0
                }
            })
            .collect();
        ImageBuffer::from_raw(self.width, self.height, data).expect("buffer matches dimensions")
    }

    pub fn from_png16(img: &ImageBuffer<Luma<u16>, Vec<u16>>) -> Self {
        let values = img
            .pixels()
            .map(|p| {
                if p.0[0] == 0 {
                    INVALID_DEPTH
                } else {
                    f64::from(p.0[0]) / 10_000.0
                }
            })
            .collect();
        Self {
            width: img.width(),
            height: img.height(),
            values,
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_png16()
            .save(path)
            .map_err(|e| Error::image(path, e))
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::image(path, e))?;
        Ok(Self::from_png16(&img.into_luma16()))
    }
}
