//! Pixel and millimeter error statistics, predictors and reports.
//!
//! Conventions: pixel errors are Euclidean distances in the left image;
//! standard deviations are population (divide by n); R2 is computed jointly
//! over both coordinates; 3D errors fall back to the median valid depth of a
//! square window when the predicted pixel has no depth.

pub mod metrics;
pub mod report;

use std::path::PathBuf;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

pub use metrics::{error_3d, euclidean_stats, r2_score, Error3d, ErrorStats};
pub use report::{draw_overlay, render_report, report_csv};

use crate::axis::AxisConfig;
use crate::error::{Error, Result};
use crate::geometry::{Side, StereoRig};
use crate::groundtruth::{subtract_and_segment, FailureSummary, SegmentConfig};
use crate::model::{infer, ModelParams};
use crate::scene::{geometric_oracle_side, Sample, SampleId, SceneGenerator};

/// Something that maps a sample to a pixel, or fails to.
pub trait Predictor {
    fn name(&self) -> String;

    /// `Ok(None)` is a detection failure, counted rather than scored.
    fn predict(&mut self, sample: &Sample, side: Side) -> Result<Option<Point2<f64>>>;

    /// Segmentation-style predictors report a failure rate.
    fn reports_failures(&self) -> bool {
        false
    }
}

/// Projected axis/surface intersection from the true probe pose and surface.
pub struct OraclePredictor {
    generator: SceneGenerator,
}

impl OraclePredictor {
    pub fn new(generator: SceneGenerator) -> Self {
        Self { generator }
    }
}

impl Predictor for OraclePredictor {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn predict(&mut self, sample: &Sample, side: Side) -> Result<Option<Point2<f64>>> {
        let scene = self.generator.scene(sample.id.pose_index, sample.id.stage_index)?;
        geometric_oracle_side(&scene, side).map(Some)
    }
}

/// Laser on/off subtraction followed by blob centroiding.
pub struct SubtractPredictor {
    pub config: SegmentConfig,
}

impl Predictor for SubtractPredictor {
    fn name(&self) -> String {
        "subtract".into()
    }

    fn predict(&mut self, sample: &Sample, side: Side) -> Result<Option<Point2<f64>>> {
        let v = sample.view(side);
        Ok(subtract_and_segment(&v.laser_on_dark, &v.laser_off_dark, &self.config)?.centroid)
    }

    fn reports_failures(&self) -> bool {
        true
    }
}

/// The same pixel for every frame.
pub struct ConstantPredictor {
    pub label: String,
    pub point: Point2<f64>,
}

impl ConstantPredictor {
    /// Predicts the principal point of the camera.
    pub fn center(rig: &StereoRig) -> Self {
        let c = rig.camera(Side::Left);
        Self {
            label: "center".into(),
            point: Point2::new(c.cx, c.cy),
        }
    }

    /// Predicts the mean of `points` (typically the training targets).
    pub fn mean(points: &[Point2<f64>]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("mean of no points"));
        }
        let n = points.len() as f64;
        Ok(Self {
            label: "mean".into(),
            point: points.iter().fold(Point2::origin(), |acc, p| acc + p.coords / n),
        })
    }
}

impl Predictor for ConstantPredictor {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn predict(&mut self, _sample: &Sample, _side: Side) -> Result<Option<Point2<f64>>> {
        Ok(Some(self.point))
    }
}

/// The trained regressor. It only predicts the left view.
pub struct ModelPredictor {
    pub label: String,
    pub params: ModelParams<f32>,
    pub axis: AxisConfig,
}

impl Predictor for ModelPredictor {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn predict(&mut self, sample: &Sample, side: Side) -> Result<Option<Point2<f64>>> {
        if side != Side::Left {
            return Err(Error::InvalidArgument("the model predicts the left view only".into()));
        }
        Ok(Some(infer(sample, &self.params, &self.axis)?.pixel))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub side: Side,
    /// Rig the samples were rendered with, for 3D errors.
    pub rig: StereoRig,
    /// Side of the square depth fallback window.
    pub depth_window: u32,
    /// Identifies the configuration that produced the predictions.
    pub fingerprint: String,
    /// Write one overlay PNG per frame here.
    pub overlay_dir: Option<PathBuf>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            side: Side::Left,
            rig: StereoRig::canonical(),
            depth_window: 5,
            fingerprint: String::new(),
            overlay_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub id: SampleId,
    pub gt: Point2<f64>,
    pub pred: Option<Point2<f64>>,
    pub error_px: Option<f64>,
    pub error_3d: Option<Error3d>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub n_frames: usize,
    pub n_valid: usize,
    pub n_failed: usize,
    /// Only for segmentation-style predictors.
    pub failure_rate: Option<f64>,
    /// Over valid frames; absent when none are valid.
    pub px: Option<ErrorStats>,
    /// Absent with fewer than two valid frames or constant targets.
    pub r2: Option<f64>,
    /// Present iff every frame carries depth and at least one was scored.
    pub mm: Option<ErrorStats>,
    /// Valid frames without any usable depth near the prediction.
    pub n_mm_excluded: usize,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub frames: Vec<FrameResult>,
}

/// Runs `predictor` over every sample and assembles the statistics.
pub fn evaluate<P, I>(predictor: &mut P, samples: I, options: &EvalOptions) -> Result<Evaluation>
where
    P: Predictor + ?Sized,
    I: IntoIterator<Item = Result<Sample>>,
{
    let side = options.side;
    let mut frames = Vec::new();
    let mut all_have_depth = true;
    if let Some(dir) = &options.overlay_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    for sample in samples {
        let sample = sample?;
        let gt = sample.gt(side);
        let pred = predictor.predict(&sample, side)?;
        let err3 = match (pred, sample.depth(side)) {
            (Some(p), Some(depth)) => Some(error_3d(&p, depth, &sample.gt_3d, &options.rig, side, options.depth_window)?),
            _ => None,
        };
        all_have_depth &= sample.depth(side).is_some();
        if let Some(dir) = &options.overlay_dir {
            let path = dir.join(format!("{}_{}_overlay.png", sample.id, side.as_str()));
            draw_overlay(&sample.view(side).standard, pred, Some(gt))
                .save(&path)
                .map_err(|e| Error::image(&path, e))?;
        }
        frames.push(FrameResult {
            id: sample.id,
            gt,
            pred,
            error_px: pred.map(|p| (p - gt).norm()),
            error_3d: err3,
        });
    }
    if frames.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }

    let summary = FailureSummary::from_validity(frames.iter().map(|f| f.pred.is_some()))?;
    let (preds, gts): (Vec<_>, Vec<_>) = frames.iter().filter_map(|f| f.pred.map(|p| (p, f.gt))).unzip();
    let px = if preds.is_empty() {
        None
    } else {
        Some(euclidean_stats(&preds, &gts)?)
    };
    let r2 = match r2_score(&preds, &gts) {
        Ok(r) => Some(r),
        Err(Error::UndefinedR2 | Error::InvalidArgument(_) | Error::Empty(_)) => None,
        Err(e) => return Err(e),
    };
    let mm_values: Vec<f64> = frames
        .iter()
        .filter_map(|f| f.error_3d.and_then(|e| e.millimeters()))
        .collect();
    let n_mm_excluded = frames
        .iter()
        .filter(|f| f.error_3d == Some(Error3d::Excluded))
        .count();
    let mm = if all_have_depth && !mm_values.is_empty() {
        Some(metrics::summarize(&mm_values)?)
    } else {
        None
    };
    let report = EvalReport {
        name: predictor.name(),
        n_frames: summary.n_frames,
        n_valid: summary.n_valid,
        n_failed: summary.n_failed,
        failure_rate: predictor.reports_failures().then(|| summary.failure_rate()),
        px,
        r2,
        mm,
        n_mm_excluded,
        fingerprint: options.fingerprint.clone(),
    };
    Ok(Evaluation { report, frames })
}
