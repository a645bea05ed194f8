//! Desk-scale training run: renders a few hundred low-resolution scenes,
//! splits them by probe pose, trains the stereo regressor and compares it
//! against the predict-the-mean baseline on the held-out poses.
//!
//! cargo run --release --example train_desk -- [poses] [stages] [epochs]

use std::time::Instant;

use nalgebra::Point2;
use sensing_area::axis::AxisConfig;
use sensing_area::eval::metrics::{euclidean_stats, r2_score};
use sensing_area::model::train::{mean_pixel_error, Trainer};
use sensing_area::model::{forward, ModelConfig, TrainConfig, TrainingExample};
use sensing_area::scene::{render_views, RenderConfig, SceneConfig, SceneGenerator, STAGES_PER_REVOLUTION};

pub struct DeskResult {
    pub model_mean_px: f64,
    pub baseline_mean_px: f64,
    pub r2: f64,
    pub image_width: u32,
}

pub fn build_examples(poses: u32, stages: u32, seed: u64, scale: f64, model: &ModelConfig) -> sensing_area::Result<Vec<TrainingExample>> {
    let mut config = SceneConfig::default();
    config.rig = config.rig.scaled(scale);
    let generator = SceneGenerator::new(seed, config)?;
    let render = RenderConfig::default();
    let axis = AxisConfig::default();
    let mut out = Vec::new();
    for pose in 0..poses {
        let probe = generator.probe_pose(pose)?;
        for stage in 0..stages {
            let scene = generator.scene_with_probe(probe, pose, stage);
            let sample = render_views(&scene, &render)?;
            out.push(TrainingExample::from_sample(&sample, model, &axis)?);
        }
    }
    Ok(out)
}

pub fn run_example(poses: u32, stages: u32, epochs: usize, verbose: bool) -> sensing_area::Result<DeskResult> {
    let model = ModelConfig::default();
    let start = Instant::now();
    let examples = build_examples(poses, stages, 11, 0.25, &model)?;
    if verbose {
        println!("rendered {} samples in {:.1?}", examples.len(), start.elapsed());
    }
    // poses 0..4/6 train, next 1/6 validation, last 1/6 test
    let n_train = poses * 4 / 6;
    let n_val = poses / 6;
    let by_pose = |lo: u32, hi: u32| -> Vec<TrainingExample> {
        examples
            .iter()
            .filter(|e| (lo..hi).contains(&e.id.pose_index))
            .cloned()
            .collect()
    };
    let train = by_pose(0, n_train);
    let val = by_pose(n_train, n_train + n_val);
    let test = by_pose(n_train + n_val, poses);

    let train_cfg = TrainConfig {
        epochs,
        seed: 3,
        ..Default::default()
    };
    let mut trainer = Trainer::new(&model, &train_cfg, &train, &val)?;
    while !trainer.finished() {
        let t = Instant::now();
        let rec = trainer.run_epoch()?.clone();
        if verbose {
            println!(
                "epoch {:3} lr {:.1e} loss {:.5} val {:.2} px ({:.1?})",
                rec.epoch,
                rec.lr,
                rec.train_loss,
                rec.val_mean_px_error,
                t.elapsed()
            );
        }
    }
    let outcome = trainer.into_outcome();

    let gts: Vec<Point2<f64>> = test.iter().map(|e| e.gt_px).collect();
    let preds: Vec<Point2<f64>> = test
        .iter()
        .map(|e| Ok(e.to_pixels(forward(&outcome.best, std::slice::from_ref(&e.input))?[0])))
        .collect::<sensing_area::Result<_>>()?;
    let n = train.len() as f64;
    let mean = train.iter().fold(Point2::origin(), |acc: Point2<f64>, e| acc + e.gt_px.coords / n);
    let baseline = euclidean_stats(&vec![mean; gts.len()], &gts)?;
    let stats = euclidean_stats(&preds, &gts)?;
    let r2 = r2_score(&preds, &gts)?;
    let result = DeskResult {
        model_mean_px: stats.mean,
        baseline_mean_px: baseline.mean,
        r2,
        image_width: test[0].image_width,
    };
    if verbose {
        println!("best val {:.2} px", mean_pixel_error(&outcome.best, &val)?);
        println!(
            "test: model {:.2} px (median {:.2}), mean baseline {:.2} px, R2 {:.3}, width {} px, total {:.1?}",
            stats.mean, stats.median, baseline.mean, r2, result.image_width,
            start.elapsed()
        );
    }
    Ok(result)
}

#[allow(dead_code)]
fn main() -> sensing_area::Result<()> {
    let mut args = std::env::args().skip(1);
    let poses = args.next().and_then(|s| s.parse().ok()).unwrap_or(42);
    let stages = args.next().and_then(|s| s.parse().ok()).unwrap_or(STAGES_PER_REVOLUTION);
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(30);
    run_example(poses, stages, epochs, true).map(|_| ())
}
