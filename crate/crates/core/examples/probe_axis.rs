//! Probe axis extraction: fits the principal axis of a rendered probe
//! silhouette, orients it from the entry side toward the tip and samples
//! the evenly spaced principal points fed to the regressor.
//!
//! cargo run --example probe_axis -- [pose] [stage] [out.png]

use image::{Rgb, RgbImage};
use nalgebra::Point2;

use sensing_area::axis::{principal_points_from_mask, AxisConfig};
use sensing_area::geometry::Side;
use sensing_area::scene::{render_views, RenderConfig, SceneConfig, SceneGenerator};

pub struct AxisSummary {
    pub anisotropy: f64,
    pub first: Point2<f64>,
    pub last: Point2<f64>,
    pub gt: Point2<f64>,
    pub overlay: RgbImage,
}

pub fn run_example(pose: u32, stage: u32, scale: f64, verbose: bool) -> sensing_area::Result<AxisSummary> {
    let mut config = SceneConfig::default();
    config.rig = config.rig.scaled(scale);
    let generator = SceneGenerator::new(5, config)?;
    let sample = render_views(&generator.scene(pose, stage)?, &RenderConfig::default())?;
    let mask = sample.mask(Side::Left);
    let cfg = AxisConfig::default();
    let (axis, points) = principal_points_from_mask(mask, &cfg)?;

    let mut overlay = sample.view(Side::Left).standard.clone();
    for p in &points.points {
        let (x, y) = (p.x.round() as u32, p.y.round() as u32);
        if x < overlay.width() && y < overlay.height() {
            overlay.put_pixel(x, y, Rgb([255, 255, 0]));
        }
    }
    let first = points.points[0];
    let last = points.points[points.len() - 1];
    let gt = sample.gt(Side::Left);
    if verbose {
        println!("silhouette of {} pixels", mask.pixels().filter(|p| p.0[0] > 0).count());
        println!(
            "centroid ({:.2}, {:.2}), direction ({:.4}, {:.4}), anisotropy {:.1}",
            axis.centroid.x,
            axis.centroid.y,
            axis.direction.x,
            axis.direction.y,
            axis.anisotropy()
        );
        println!("{} principal points from ({:.1}, {:.1}) to ({:.1}, {:.1})", points.len(), first.x, first.y, last.x, last.y);
        println!("tip end is {:.1} px from the intersection ground truth", (last - gt).norm());
    }
    Ok(AxisSummary {
        anisotropy: axis.anisotropy(),
        first,
        last,
        gt,
        overlay,
    })
}

#[allow(dead_code)]
fn main() -> sensing_area::Result<()> {
    let mut args = std::env::args().skip(1);
    let pose = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let stage = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let out = args.next();
    let summary = run_example(pose, stage, 1.0, true)?;
    if let Some(path) = out {
        summary
            .overlay
            .save(&path)
            .map_err(|e| sensing_area::Error::InvalidArgument(e.to_string()))?;
        println!("wrote {path}");
    }
    Ok(())
}
