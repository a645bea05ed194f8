//! Render one stereo view of the simulated phantom and save the six captures,
//! the probe masks and the ground truth.
//!
//! cargo run --example render_scene -- [out_dir] [pose] [stage] [scale]

use std::path::PathBuf;
use std::time::Instant;

use sensing_area::geometry::Side;
use sensing_area::scene::{geometric_oracle, render_views, RenderConfig, SceneConfig, SceneGenerator};

pub fn run_example(out: Option<PathBuf>, pose: u32, stage: u32, scale: f64) -> sensing_area::Result<()> {
    let mut config = SceneConfig::default();
    config.rig = config.rig.scaled(scale);
    let generator = SceneGenerator::new(7, config)?;
    let scene = generator.scene(pose, stage)?;
    let render = RenderConfig {
        with_depth: true,
        ..Default::default()
    };
    let start = Instant::now();
    let sample = render_views(&scene, &render)?;
    println!(
        "rendered {} at {}x{} in {:.2?}",
        sample.id,
        scene.rig.width(),
        scene.rig.height(),
        start.elapsed()
    );
    println!("gt_3d = {:?}", sample.gt_3d);
    println!("gt_px left = {:?}, right = {:?}", sample.gt(Side::Left), sample.gt(Side::Right));
    println!("oracle     = {:?}", geometric_oracle(&scene)?);

    if let Some(dir) = out {
        std::fs::create_dir_all(&dir).map_err(|e| sensing_area::Error::InvalidArgument(e.to_string()))?;
        for side in Side::BOTH {
            let v = sample.view(side);
            let name = |c: &str| dir.join(format!("{}_{}_{c}.png", sample.id, side.as_str()));
            let save = |img: &image::RgbImage, c: &str| {
                img.save(name(c))
                    .map_err(|e| sensing_area::Error::InvalidArgument(e.to_string()))
            };
            save(&v.standard, "standard")?;
            save(&v.laser_on_dark, "laser_on")?;
            save(&v.laser_off_dark, "laser_off")?;
            sample
                .mask(side)
                .save(name("mask"))
                .map_err(|e| sensing_area::Error::InvalidArgument(e.to_string()))?;
        }
        println!("wrote images to {}", dir.display());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> sensing_area::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from);
    let pose = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let stage = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let scale = args.next().and_then(|s| s.parse().ok()).unwrap_or(1.0);
    run_example(out, pose, stage, scale)
}
