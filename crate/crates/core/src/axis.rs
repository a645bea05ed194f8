//! Probe principal axis from its silhouette.
//!
//! The axis is the dominant eigenvector of the 2x2 covariance of the
//! silhouette's pixel coordinates. It is oriented from the image border the
//! probe enters through toward the tip, and sampled uniformly over the
//! silhouette's extent to give the points fed to the model.

use image::GrayImage;
use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What to do when the silhouette is nearly isotropic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LowAnisotropy {
    Error,
    Flag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AxisConfig {
    /// Eigenvalue ratio below which a silhouette counts as isotropic.
    pub min_anisotropy: f64,
    pub on_low_anisotropy: LowAnisotropy,
    /// Principal points per view.
    pub n_points: usize,
}

impl Default for AxisConfig {
    fn default() -> Self {
        Self {
            min_anisotropy: 4.0,
            on_low_anisotropy: LowAnisotropy::Error,
            n_points: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeAxis2D {
    pub centroid: Point2<f64>,
    /// Unit direction.
    pub direction: Vector2<f64>,
    /// `[t_min, t_max]` of member projections onto the axis.
    pub extent: [f64; 2],
    /// Covariance eigenvalues, largest first.
    pub eigenvalues: [f64; 2],
    pub low_anisotropy: bool,
}

impl ProbeAxis2D {
    pub fn point_at(&self, t: f64) -> Point2<f64> {
        self.centroid + self.direction * t
    }

    pub fn anisotropy(&self) -> f64 {
        if self.eigenvalues[1] > 0.0 {
            self.eigenvalues[0] / self.eigenvalues[1]
        } else {
            f64::INFINITY
        }
    }

    fn flipped(&self) -> Self {
        Self {
            direction: -self.direction,
            extent: [-self.extent[1], -self.extent[0]],
            ..*self
        }
    }
}

/// Points sampled along an axis, ordered from the entry end to the tip end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipalPoints {
    pub points: Vec<Point2<f64>>,
}

impl PrincipalPoints {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Coordinates divided by image width/height, flattened `[u0, v0, u1, ...]`.
    pub fn normalized(&self, width: u32, height: u32) -> Vec<f64> {
        let (w, h) = (f64::from(width), f64::from(height));
        self.points.iter().flat_map(|p| [p.x / w, p.y / h]).collect()
    }
}

/// Pixel coordinates of every non-zero mask pixel.
pub fn mask_pixels(mask: &GrayImage) -> Vec<Point2<f64>> {
    mask.enumerate_pixels()
        .filter(|(_, _, p)| p.0[0] > 0)
        .map(|(x, y, _)| Point2::new(f64::from(x), f64::from(y)))
        .collect()
}

pub fn pca_axis(mask: &GrayImage, cfg: &AxisConfig) -> Result<ProbeAxis2D> {
    pca_axis_points(&mask_pixels(mask), cfg)
}

/// PCA of a 2D point set.
pub fn pca_axis_points(points: &[Point2<f64>], cfg: &AxisConfig) -> Result<ProbeAxis2D> {
    if points.len() < 2 {
        return Err(Error::DegenerateMask(format!(
            "{} pixel(s); need at least 2",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p.x, b + p.y));
    let centroid = Point2::new(sx / n, sy / n);
    let (mut cxx, mut cxy, mut cyy) = (0.0, 0.0, 0.0);
    for p in points {
        let dx = p.x - centroid.x;
        let dy = p.y - centroid.y;
        cxx += dx * dx;
        cxy += dx * dy;
        cyy += dy * dy;
    }
    cxx /= n;
    cxy /= n;
    cyy /= n;
    if cxx + cyy <= 0.0 {
        return Err(Error::DegenerateMask("zero covariance".into()));
    }

    let half_diff = 0.5 * (cxx - cyy);
    let radius = half_diff.hypot(cxy);
    let mean = 0.5 * (cxx + cyy);
    let eigenvalues = [mean + radius, (mean - radius).max(0.0)];
    let angle = 0.5 * (2.0 * cxy).atan2(cxx - cyy);
    let direction = Vector2::new(angle.cos(), angle.sin());

    let ratio = if eigenvalues[1] > 0.0 {
        eigenvalues[0] / eigenvalues[1]
    } else {
        f64::INFINITY
    };
    let low_anisotropy = ratio < cfg.min_anisotropy;
    if low_anisotropy && cfg.on_low_anisotropy == LowAnisotropy::Error {
        return Err(Error::DegenerateMask(format!(
            "eigenvalue ratio {ratio:.3} below {}",
            cfg.min_anisotropy
        )));
    }

    let (t_min, t_max) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let t = (p - centroid).dot(&direction);
        (lo.min(t), hi.max(t))
    });
    Ok(ProbeAxis2D {
        centroid,
        direction,
        extent: [t_min, t_max],
        eigenvalues,
        low_anisotropy,
    })
}

/// Flips the axis so it runs from the border the mask touches toward the
/// tip. Masks that touch no border are oriented from the endpoint nearer to
/// a border; exact ties point toward increasing u.
pub fn orient_axis(axis: &ProbeAxis2D, mask: &GrayImage) -> ProbeAxis2D {
    let (w, h) = mask.dimensions();
    let on_border = |x: u32, y: u32| x == 0 || y == 0 || x + 1 == w || y + 1 == h;
    let (mut sum, mut count) = (0.0, 0usize);
    for (x, y, p) in mask.enumerate_pixels() {
        if p.0[0] > 0 && on_border(x, y) {
            sum += (Point2::new(f64::from(x), f64::from(y)) - axis.centroid).dot(&axis.direction);
            count += 1;
        }
    }
    let [t_min, t_max] = axis.extent;
    // (distance from the t_min end, distance from the t_max end) to the entry
    let (from_min, from_max) = if count > 0 {
        let t_border = sum / count as f64;
        ((t_border - t_min).abs(), (t_max - t_border).abs())
    } else {
        let border_dist = |p: Point2<f64>| {
            p.x.min(p.y)
                .min(f64::from(w) - 1.0 - p.x)
                .min(f64::from(h) - 1.0 - p.y)
        };
        (border_dist(axis.point_at(t_min)), border_dist(axis.point_at(t_max)))
    };
    let flip = if from_min < from_max {
        false
    } else if from_max < from_min {
        true
    } else {
        axis.direction.x < 0.0 || (axis.direction.x == 0.0 && axis.direction.y < 0.0)
    };
    if flip {
        axis.flipped()
    } else {
        *axis
    }
}

/// `n` points uniformly spaced over the axis extent, entry end first.
pub fn sample_principal_points(axis: &ProbeAxis2D, n: usize) -> Result<PrincipalPoints> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 principal points, got {n}")));
    }
    let [t0, t1] = axis.extent;
    let step = (t1 - t0) / (n - 1) as f64;
    let points = (0..n)
        .map(|i| {
            let t = if i + 1 == n { t1 } else { t0 + i as f64 * step };
            axis.point_at(t)
        })
        .collect();
    Ok(PrincipalPoints { points })
}

/// PCA, orientation and sampling in one call.
pub fn principal_points_from_mask(mask: &GrayImage, cfg: &AxisConfig) -> Result<(ProbeAxis2D, PrincipalPoints)> {
    let axis = orient_axis(&pca_axis(mask, cfg)?, mask);
    let points = sample_principal_points(&axis, cfg.n_points)?;
    Ok((axis, points))
}
