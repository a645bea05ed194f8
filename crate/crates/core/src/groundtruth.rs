//! Laser-spot ground truth: subtract the laser-off capture from the laser-on
//! capture, threshold, keep the dominant blob and take its centroid.
//!
//! The same routine doubles as a segmentation-style detector; frames where
//! it finds no blob are failures and are accounted for separately from the
//! accuracy statistics.

use std::collections::VecDeque;

use image::{GrayImage, Luma, RgbImage};
use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentConfig {
    /// Absolute threshold floor on the red difference (0..=255 scale).
    pub abs_floor: f64,
    /// Relative threshold as a fraction of the maximum difference.
    pub rel_frac: f64,
    /// Minimum blob area (pixels) for a valid segmentation.
    pub min_area: usize,
    /// Weight member pixels by their difference intensity.
    pub weighted_centroid: bool,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            abs_floor: 25.0,
            rel_frac: 0.5,
            min_area: 3,
            weighted_centroid: true,
        }
    }
}

/// A pixel with its centroid weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPixel {
    pub x: u32,
    pub y: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaserSegmentation {
    /// Selected blob (255) on background (0).
    pub mask: GrayImage,
    pub area: usize,
    pub valid: bool,
    pub centroid: Option<Point2<f64>>,
}

/// Clamped red-channel difference `on - off`.
pub fn red_difference(laser_on: &RgbImage, laser_off: &RgbImage) -> Result<Vec<f64>> {
    if laser_on.dimensions() != laser_off.dimensions() {
        return Err(Error::SizeMismatch(format!(
            "laser-on {:?} vs laser-off {:?}",
            laser_on.dimensions(),
            laser_off.dimensions()
        )));
    }
    Ok(laser_on
        .pixels()
        .zip(laser_off.pixels())
        .map(|(a, b)| (f64::from(a.0[0]) - f64::from(b.0[0])).max(0.0))
        .collect())
}

/// Largest 4-connected component of `above`, ties resolved by raster order
/// of the first pixel.
fn largest_component(above: &[bool], width: usize, height: usize) -> Vec<usize> {
    let mut seen = vec![false; above.len()];
    let mut best: Vec<usize> = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..above.len() {
        if !above[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        seen[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            comp.push(i);
            let (x, y) = (i % width, i / width);
            let mut visit = |j: usize| {
                if above[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < width {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - width);
            }
            if y + 1 < height {
                visit(i + width);
            }
        }
        if comp.len() > best.len() {
            best = comp;
        }
    }
    best.sort_unstable();
    best
}

pub fn subtract_and_segment(
    laser_on: &RgbImage,
    laser_off: &RgbImage,
    cfg: &SegmentConfig,
) -> Result<LaserSegmentation> {
    let diff = red_difference(laser_on, laser_off)?;
    let (w, h) = laser_on.dimensions();
    let max = diff.iter().copied().fold(0.0, f64::max);
    let threshold = cfg.abs_floor.max(cfg.rel_frac * max);
    let above: Vec<bool> = diff.iter().map(|&d| d > 0.0 && d >= threshold).collect();
    let blob = largest_component(&above, w as usize, h as usize);

    let mut mask = GrayImage::new(w, h);
    for &i in &blob {
        mask.put_pixel(i as u32 % w, i as u32 / w, Luma([255]));
    }
    let valid = !blob.is_empty() && blob.len() >= cfg.min_area;
    let centroid = if valid {
        let pixels: Vec<WeightedPixel> = blob
            .iter()
            .map(|&i| WeightedPixel {
                x: i as u32 % w,
                y: i as u32 / w,
                weight: if cfg.weighted_centroid { diff[i] } else { 1.0 },
            })
            .collect();
        Some(centroid(&pixels)?)
    } else {
        None
    };
    Ok(LaserSegmentation {
        mask,
        area: blob.len(),
        valid,
        centroid,
    })
}

/// Weighted mean of pixel coordinates.
pub fn centroid(pixels: &[WeightedPixel]) -> Result<Point2<f64>> {
    if pixels.is_empty() {
        return Err(Error::Empty("centroid of an empty mask"));
    }
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for p in pixels {
        sw += p.weight;
        sx += p.weight * f64::from(p.x);
        sy += p.weight * f64::from(p.y);
    }
    if !(sw > 0.0) {
        return Err(Error::DegenerateMask("centroid weights sum to zero".into()));
    }
    Ok(Point2::new(sx / sw, sy / sw))
}

/// Binary centroid of every non-zero pixel of `mask`.
pub fn mask_centroid(mask: &GrayImage) -> Result<Point2<f64>> {
    let pixels: Vec<WeightedPixel> = mask
        .enumerate_pixels()
        .filter(|(_, _, p)| p.0[0] > 0)
        .map(|(x, y, _)| WeightedPixel { x, y, weight: 1.0 })
        .collect();
    centroid(&pixels)
}

/// Valid/failed counts over a set of segmentation-style detections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureSummary {
    pub n_frames: usize,
    pub n_valid: usize,
    pub n_failed: usize,
}

impl FailureSummary {
    pub fn from_validity(valid: impl IntoIterator<Item = bool>) -> Result<Self> {
        let (mut n_valid, mut n_failed) = (0, 0);
        for v in valid {
            if v {
                n_valid += 1;
            } else {
                n_failed += 1;
            }
        }
        if n_valid + n_failed == 0 {
            return Err(Error::Empty("failure rate of zero frames"));
        }
        Ok(Self {
            n_frames: n_valid + n_failed,
            n_valid,
            n_failed,
        })
    }

    pub fn failure_rate(&self) -> f64 {
        self.n_failed as f64 / self.n_frames as f64
    }
}

/// Fraction of segmentations without a valid blob.
pub fn failure_rate(segmentations: &[LaserSegmentation]) -> Result<f64> {
    Ok(FailureSummary::from_validity(segmentations.iter().map(|s| s.valid))?.failure_rate())
}
