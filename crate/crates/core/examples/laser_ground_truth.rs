//! Ground truth by laser subtraction: renders dark-field captures with the
//! marker laser on and off, segments the difference and compares the blob
//! centroid with the analytic projection of the axis-surface intersection.
//!
//! cargo run --release --example laser_ground_truth -- [scenes] [scale]

use sensing_area::geometry::Side;
use sensing_area::groundtruth::{subtract_and_segment, FailureSummary, SegmentConfig};
use sensing_area::scene::{render_views, RenderConfig, SceneConfig, SceneGenerator};

pub struct ClosureSummary {
    pub scenes: usize,
    pub within_one_px: usize,
    pub failure_rate: f64,
    pub worst_px: f64,
}

pub fn run_example(scenes: u32, scale: f64, verbose: bool) -> sensing_area::Result<ClosureSummary> {
    let mut config = SceneConfig::default();
    config.rig = config.rig.scaled(scale);
    let generator = SceneGenerator::new(21, config)?;
    let render = RenderConfig::default();
    let seg = SegmentConfig::default();
    let mut valid = Vec::new();
    let (mut within, mut worst) = (0, 0.0f64);
    for k in 0..scenes {
        let scene = generator.scene(k / 2, (k % 2) * 5)?;
        let sample = render_views(&scene, &render)?;
        let view = sample.view(Side::Left);
        let s = subtract_and_segment(&view.laser_on_dark, &view.laser_off_dark, &seg)?;
        valid.push(s.valid);
        let gt = sample.gt(Side::Left);
        if let Some(c) = s.centroid {
            let d = (c - gt).norm();
            worst = worst.max(d);
            if d <= 1.0 {
                within += 1;
            }
            if verbose {
                println!(
                    "{}: centroid ({:7.2}, {:7.2}) analytic ({:7.2}, {:7.2}) area {:3} px -> {d:.3} px",
                    sample.id, c.x, c.y, gt.x, gt.y, s.area
                );
            }
        } else if verbose {
            println!("{}: no laser spot found", sample.id);
        }
    }
    let summary = FailureSummary::from_validity(valid)?;
    if verbose {
        println!(
            "{within}/{scenes} within 1 px, worst {worst:.3} px, failure rate {:.1}%",
            100.0 * summary.failure_rate()
        );
    }
    Ok(ClosureSummary {
        scenes: scenes as usize,
        within_one_px: within,
        failure_rate: summary.failure_rate(),
        worst_px: worst,
    })
}

#[allow(dead_code)]
fn main() -> sensing_area::Result<()> {
    let mut args = std::env::args().skip(1);
    let scenes = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let scale = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.5);
    run_example(scenes, scale, true).map(|_| ())
}
