//! Scores the reference predictors (geometric oracle, laser subtraction,
//! image centre and training mean) on freshly rendered frames with depth
//! and prints the comparison table.
//!
//! cargo run --release --example evaluate_predictors -- [frames] [scale]

use nalgebra::Point2;

use sensing_area::eval::{
    evaluate, render_report, ConstantPredictor, EvalOptions, EvalReport, OraclePredictor, Predictor,
    SubtractPredictor,
};
use sensing_area::geometry::Side;
use sensing_area::groundtruth::SegmentConfig;
use sensing_area::scene::{render_views, RenderConfig, Sample, SceneConfig, SceneGenerator};

pub fn run_example(frames: u32, scale: f64, verbose: bool) -> sensing_area::Result<Vec<EvalReport>> {
    let mut config = SceneConfig::default();
    config.rig = config.rig.scaled(scale);
    let generator = SceneGenerator::new(9, config)?;
    let render = RenderConfig {
        with_depth: true,
        invalid_depth_fraction: 0.2,
        ..Default::default()
    };
    let render_range = |poses: std::ops::Range<u32>| -> sensing_area::Result<Vec<Sample>> {
        poses
            .flat_map(|pose| [0, 5].map(|stage| (pose, stage)))
            .map(|(pose, stage)| render_views(&generator.scene(pose, stage)?, &render))
            .collect()
    };
    // the mean predictor is fitted on other poses than the ones scored
    let fit = render_range(1000..1000 + frames.div_ceil(2))?;
    let test = render_range(0..frames.div_ceil(2))?;
    let fit_gts: Vec<Point2<f64>> = fit.iter().map(|s| s.gt(Side::Left)).collect();

    let options = EvalOptions {
        rig: generator.config.rig,
        ..Default::default()
    };
    let mut predictors: Vec<Box<dyn Predictor>> = vec![
        Box::new(OraclePredictor::new(generator.clone())),
        Box::new(SubtractPredictor {
            config: SegmentConfig::default(),
        }),
        Box::new(ConstantPredictor::center(&generator.config.rig)),
        Box::new(ConstantPredictor::mean(&fit_gts)?),
    ];
    let mut reports = Vec::new();
    for p in predictors.iter_mut() {
        let e = evaluate(p.as_mut(), test.iter().cloned().map(Ok), &options)?;
        reports.push(e.report);
    }
    if verbose {
        print!("{}", render_report(&reports));
    }
    Ok(reports)
}

#[allow(dead_code)]
fn main() -> sensing_area::Result<()> {
    let mut args = std::env::args().skip(1);
    let frames = args.next().and_then(|s| s.parse().ok()).unwrap_or(40);
    let scale = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.5);
    run_example(frames, scale, true).map(|_| ())
}
