//! Sample preparation, the training loop and inference.

use std::time::{Duration, Instant};

use image::imageops::{resize, FilterType};
use image::{GrayImage, RgbImage};
use nalgebra::Point2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::optim::{staged_lr, AdamConfig, AdamState};
use super::{backward, forward, InputMode, ModelConfig, ModelInput, ModelParams, Scalar};
use crate::axis::{principal_points_from_mask, AxisConfig};
use crate::error::{Error, Result};
use crate::geometry::Side;
use crate::scene::{Sample, SampleId};
use crate::seed::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    /// Fractions of `epochs` at which the rate drops.
    pub breakpoints: Vec<f64>,
    /// Multipliers of `base_lr` after each breakpoint.
    pub factors: Vec<f64>,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 70,
            batch_size: 12,
            base_lr: 1e-3,
            breakpoints: vec![3.0 / 7.0, 4.0 / 7.0],
            factors: vec![0.5, 0.25],
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("train config: {m}")));
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch size and epochs must be at least 1");
        }
        if self.breakpoints.len() != self.factors.len() {
            return bad("one factor per breakpoint");
        }
        let ascending = self.breakpoints.windows(2).all(|w| w[0] < w[1]);
        let in_range = self.breakpoints.iter().all(|&b| b > 0.0 && b <= 1.0);
        if !ascending || !in_range {
            return bad("breakpoints must be ascending in (0, 1]");
        }
        if !(self.base_lr > 0.0) {
            return bad("base learning rate must be positive");
        }
        Ok(())
    }

    pub fn lr(&self, epoch: usize) -> Result<f64> {
        staged_lr(epoch, self.epochs, self.base_lr, &self.breakpoints, &self.factors)
    }
}

/// A sample reduced to what the model consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub id: SampleId,
    pub input: ModelInput<f32>,
    /// Left-image ground truth divided by image width/height.
    pub target: [f32; 2],
    pub gt_px: Point2<f64>,
    pub image_width: u32,
    pub image_height: u32,
}

/// The images the model reads for one frame, left then right.
#[derive(Debug, Clone, Copy)]
pub struct ModelViews<'a> {
    pub standard: [&'a RgbImage; 2],
    pub masks: [&'a GrayImage; 2],
}

impl<'a> ModelViews<'a> {
    pub fn of(sample: &'a Sample) -> Self {
        Self {
            standard: Side::BOTH.map(|s| &sample.view(s).standard),
            masks: Side::BOTH.map(|s| sample.mask(s)),
        }
    }
}

fn sides(cfg: &ModelConfig) -> &'static [Side] {
    match cfg.input_mode {
        InputMode::Stereo => &Side::BOTH,
        InputMode::Mono => &[Side::Left],
    }
}

fn image_tensor<T: Scalar>(views: &ModelViews<'_>, cfg: &ModelConfig) -> Vec<T> {
    let s = cfg.image_size as u32;
    let plane = cfg.image_size * cfg.image_size;
    let mut out = vec![T::zero(); cfg.image_len()];
    let scale = T::from_f64(1.0 / 255.0).unwrap();
    for (v, &side) in sides(cfg).iter().enumerate() {
        let img = views.standard[side.index()];
        let small = if img.dimensions() == (s, s) {
            img.clone()
        } else {
            resize(img, s, s, FilterType::Triangle)
        };
        for (i, px) in small.pixels().enumerate() {
            for c in 0..3 {
                out[(3 * v + c) * plane + i] = T::from_u8(px.0[c]).unwrap() * scale;
            }
        }
    }
    out
}

/// Normalized image tensor plus principal points from the probe masks.
/// `id` names the frame in errors.
pub fn prepare_views<T: Scalar>(
    views: &ModelViews<'_>,
    id: &str,
    cfg: &ModelConfig,
    axis_cfg: &AxisConfig,
) -> Result<ModelInput<T>> {
    let axis_cfg = AxisConfig {
        n_points: cfg.n_points,
        ..axis_cfg.clone()
    };
    let mut points = Vec::with_capacity(cfg.points_len());
    for &side in sides(cfg) {
        let mask = views.masks[side.index()];
        let (_, pts) = principal_points_from_mask(mask, &axis_cfg).map_err(|e| Error::Validation {
            id: id.to_string(),
            reason: format!("{} probe axis: {e}", side.as_str()),
        })?;
        points.extend(
            pts.normalized(mask.width(), mask.height())
                .into_iter()
                .map(|v| T::from_f64(v).unwrap()),
        );
    }
    Ok(ModelInput {
        image: image_tensor(views, cfg),
        points,
    })
}

pub fn prepare_input<T: Scalar>(sample: &Sample, cfg: &ModelConfig, axis_cfg: &AxisConfig) -> Result<ModelInput<T>> {
    prepare_views(&ModelViews::of(sample), &sample.id.stem(), cfg, axis_cfg)
}

impl TrainingExample {
    pub fn from_sample(sample: &Sample, cfg: &ModelConfig, axis_cfg: &AxisConfig) -> Result<Self> {
        let (w, h) = sample.view(Side::Left).standard.dimensions();
        let gt = sample.gt(Side::Left);
        Ok(Self {
            id: sample.id,
            input: prepare_input(sample, cfg, axis_cfg)?,
            target: [(gt.x / f64::from(w)) as f32, (gt.y / f64::from(h)) as f32],
            gt_px: gt,
            image_width: w,
            image_height: h,
        })
    }

    pub fn to_pixels(&self, normalized: [f32; 2]) -> Point2<f64> {
        Point2::new(
            f64::from(normalized[0]) * f64::from(self.image_width),
            f64::from(normalized[1]) * f64::from(self.image_height),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_mean_px_error: f64,
}

/// Everything needed to continue training where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ModelParams<f32>,
    pub adam: AdamState<f32>,
    pub best: ModelParams<f32>,
    pub best_val: f64,
    /// Next epoch to run.
    pub epoch: usize,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation error.
    pub best: ModelParams<f32>,
    pub best_val: f64,
    pub state: TrainState,
}

impl TrainOutcome {
    pub fn history(&self) -> &[EpochRecord] {
        &self.state.history
    }
}

/// Mean pixel distance between predictions and left-image ground truth.
pub fn mean_pixel_error(params: &ModelParams<f32>, examples: &[TrainingExample]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Empty("mean pixel error of no examples"));
    }
    let mut total = 0.0;
    for ex in examples {
        let pred = forward(params, std::slice::from_ref(&ex.input))?[0];
        total += (ex.to_pixels(pred) - ex.gt_px).norm();
    }
    Ok(total / examples.len() as f64)
}

pub struct Trainer<'a> {
    pub train_config: TrainConfig,
    train: &'a [TrainingExample],
    val: &'a [TrainingExample],
    pub state: TrainState,
}

impl<'a> Trainer<'a> {
    pub fn new(
        model_config: &ModelConfig,
        train_config: &TrainConfig,
        train: &'a [TrainingExample],
        val: &'a [TrainingExample],
    ) -> Result<Self> {
        let params = ModelParams::<f32>::init(model_config)?;
        let state = TrainState {
            adam: AdamState::new(params.data.len()),
            best: params.clone(),
            best_val: f64::INFINITY,
            params,
            epoch: 0,
            history: Vec::new(),
        };
        Self::resume(train_config, train, val, state)
    }

    pub fn resume(
        train_config: &TrainConfig,
        train: &'a [TrainingExample],
        val: &'a [TrainingExample],
        state: TrainState,
    ) -> Result<Self> {
        train_config.validate()?;
        if train.is_empty() {
            return Err(Error::Empty("training split"));
        }
        if val.is_empty() {
            return Err(Error::Empty("validation split"));
        }
        Ok(Self {
            train_config: train_config.clone(),
            train,
            val,
            state,
        })
    }

    pub fn finished(&self) -> bool {
        self.state.epoch >= self.train_config.epochs
    }

    /// Runs one epoch and records it in the history.
    pub fn run_epoch(&mut self) -> Result<&EpochRecord> {
        let cfg = &self.train_config;
        let epoch = self.state.epoch;
        let lr = cfg.lr(epoch)?;
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut stream_rng(cfg.seed, "shuffle", &[epoch as u64]));

        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let inputs: Vec<ModelInput<f32>> = batch.iter().map(|&i| self.train[i].input.clone()).collect();
            let targets: Vec<[f32; 2]> = batch.iter().map(|&i| self.train[i].target).collect();
            let (loss, grads) = backward(&self.state.params, &inputs, &targets)?;
            loss_sum += f64::from(loss) * batch.len() as f64;
            self.state
                .adam
                .step(&mut self.state.params.data, &grads.data, lr, &cfg.adam)?;
        }
        if !self.state.params.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "parameters diverged at epoch {epoch}"
            )));
        }
        let val = mean_pixel_error(&self.state.params, self.val)?;
        if val < self.state.best_val {
            self.state.best_val = val;
            self.state.best = self.state.params.clone();
        }
        self.state.history.push(EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / self.train.len() as f64,
            val_mean_px_error: val,
        });
        self.state.epoch += 1;
        Ok(self.state.history.last().expect("just pushed"))
    }

    pub fn run(mut self) -> Result<TrainOutcome> {
        while !self.finished() {
            self.run_epoch()?;
        }
        Ok(self.into_outcome())
    }

    pub fn into_outcome(self) -> TrainOutcome {
        TrainOutcome {
            best: self.state.best.clone(),
            best_val: self.state.best_val,
            state: self.state,
        }
    }
}

/// Trains from scratch for `train_config.epochs` epochs.
pub fn train(
    train_set: &[TrainingExample],
    val_set: &[TrainingExample],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<TrainOutcome> {
    Trainer::new(model_config, train_config, train_set, val_set)?.run()
}

/// A pixel prediction with the wall-clock time of the forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inference {
    pub pixel: Point2<f64>,
    pub elapsed: Duration,
}

/// Predicts the left-image intersection pixel for `sample`.
pub fn infer(sample: &Sample, params: &ModelParams<f32>, axis_cfg: &AxisConfig) -> Result<Inference> {
    infer_views(&ModelViews::of(sample), &sample.id.stem(), params, axis_cfg)
}

/// [`infer`] on bare images.
pub fn infer_views(
    views: &ModelViews<'_>,
    id: &str,
    params: &ModelParams<f32>,
    axis_cfg: &AxisConfig,
) -> Result<Inference> {
    let start = Instant::now();
    let input = prepare_views::<f32>(views, id, &params.config, axis_cfg)?;
    let pred = forward(params, std::slice::from_ref(&input))?[0];
    let elapsed = start.elapsed();
    let (w, h) = views.standard[0].dimensions();
    Ok(Inference {
        pixel: Point2::new(
            f64::from(pred[0]) * f64::from(w),
            f64::from(pred[1]) * f64::from(h),
        ),
        elapsed,
    })
}
