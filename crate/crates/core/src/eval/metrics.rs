use nalgebra::{Point2, Point3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Side, StereoRig};

/// Mean, population standard deviation and median of per-frame errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
}

/// Median with the even-count convention (mean of the two middle values).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

pub fn summarize(values: &[f64]) -> Result<ErrorStats> {
    if values.is_empty() {
        return Err(Error::Empty("statistics of no frames"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    Ok(ErrorStats {
        mean,
        std: var.sqrt(),
        median: median(values).expect("non-empty"),
    })
}

fn check_pairs(preds: &[Point2<f64>], gts: &[Point2<f64>]) -> Result<()> {
    if preds.len() != gts.len() {
        return Err(Error::SizeMismatch(format!(
            "{} predictions vs {} ground-truth points",
            preds.len(),
            gts.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Empty("no frames"));
    }
    Ok(())
}

/// Statistics of the per-frame Euclidean pixel distance.
pub fn euclidean_stats(preds: &[Point2<f64>], gts: &[Point2<f64>]) -> Result<ErrorStats> {
    check_pairs(preds, gts)?;
    let errors: Vec<f64> = preds.iter().zip(gts).map(|(p, g)| (p - g).norm()).collect();
    summarize(&errors)
}

/// Coefficient of determination over both coordinates jointly:
/// `1 - SS_res / SS_tot`, with `SS_tot` taken about the per-coordinate
/// target means.
pub fn r2_score(preds: &[Point2<f64>], gts: &[Point2<f64>]) -> Result<f64> {
    check_pairs(preds, gts)?;
    if gts.len() < 2 {
        return Err(Error::InvalidArgument("R2 needs at least 2 frames".into()));
    }
    let n = gts.len() as f64;
    let mu = gts.iter().fold(Point2::origin(), |acc: Point2<f64>, g| acc + g.coords / n);
    let ss_res: f64 = preds.iter().zip(gts).map(|(p, g)| (p - g).norm_squared()).sum();
    let ss_tot: f64 = gts.iter().map(|g| (g - mu).norm_squared()).sum();
    if ss_tot <= 0.0 {
        return Err(Error::UndefinedR2);
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// Outcome of a 3D error lookup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Error3d {
    /// Depth was valid at the predicted pixel.
    Direct(f64),
    /// Depth came from the median of the surrounding window.
    Fallback(f64),
    /// No valid depth anywhere in the window.
    Excluded,
}

impl Error3d {
    pub fn millimeters(&self) -> Option<f64> {
        match *self {
            Error3d::Direct(mm) | Error3d::Fallback(mm) => Some(mm),
            Error3d::Excluded => None,
        }
    }
}

/// Depth at `pixel`, or the median of valid depths in the `window`x`window`
/// square centred on it. The flag is true when the fallback was used.
pub fn depth_with_fallback(depth: &DepthMap, pixel: (u32, u32), window: u32) -> Option<(f64, bool)> {
    let (x, y) = pixel;
    if let Some(d) = depth.get(x, y) {
        return Some((d, false));
    }
    let r = i64::from(window / 2);
    let mut values = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            let (xx, yy) = (i64::from(x) + dx, i64::from(y) + dy);
            if xx < 0 || yy < 0 {
                continue;
            }
            if let Some(d) = depth.get(xx as u32, yy as u32) {
                values.push(d);
            }
        }
    }
    median(&values).map(|d| (d, true))
}

/// Millimeter distance between the back-projected prediction and `gt_3d`.
pub fn error_3d(
    pred_px: &Point2<f64>,
    depth: &DepthMap,
    gt_3d: &Point3<f64>,
    rig: &StereoRig,
    side: Side,
    window: u32,
) -> Result<Error3d> {
    if depth.width == 0 || depth.height == 0 {
        return Ok(Error3d::Excluded);
    }
    let px = pred_px.x.round().clamp(0.0, f64::from(depth.width - 1)) as u32;
    let py = pred_px.y.round().clamp(0.0, f64::from(depth.height - 1)) as u32;
    let Some((d, fallback)) = depth_with_fallback(depth, (px, py), window) else {
        return Ok(Error3d::Excluded);
    };
    let p = rig.backproject(pred_px, d, side)?;
    let mm = (p - gt_3d).norm() * 1000.0;
    Ok(if fallback {
        Error3d::Fallback(mm)
    } else {
        Error3d::Direct(mm)
    })
}
