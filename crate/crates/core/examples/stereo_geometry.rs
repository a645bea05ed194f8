//! Pinhole stereo basics: project a point into both cameras, recover it by
//! triangulation with and without pixel noise, and cast a pixel ray onto a
//! simulated tissue surface.
//!
//! cargo run --example stereo_geometry -- [noise_px]

use nalgebra::{Point2, Point3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use sensing_area::geometry::{intersect_ray_surface, Side, StereoRig};
use sensing_area::scene::{make_surface, SurfaceConfig};

pub struct GeometrySummary {
    pub round_trip_m: f64,
    pub noisy_triangulation_mm: f64,
    pub surface_hit: Option<Point3<f64>>,
}

pub fn run_example(noise_px: f64, verbose: bool) -> sensing_area::Result<GeometrySummary> {
    let rig = StereoRig::canonical();
    let p = Point3::new(0.02, -0.01, 0.2);
    let left = rig.project(&p, Side::Left)?;
    let right = rig.project(&p, Side::Right)?;
    let back = rig.backproject(&left, p.z, Side::Left)?;
    let tri = rig.triangulate(&left, &right)?;
    let round_trip_m = (back - p).norm().max((tri - p).norm());
    if verbose {
        println!("point {p:?}");
        println!("left pixel {left:?}, right pixel {right:?}, disparity {:.3} px", left.x - right.x);
        println!("backprojected {back:?}");
        println!("triangulated  {tri:?}");
    }

    // average over many noisy pixel pairs
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let noise = Normal::new(0.0, noise_px.max(1e-12)).map_err(|e| sensing_area::Error::InvalidArgument(e.to_string()))?;
    let mut sum = 0.0;
    let trials = 1000;
    for _ in 0..trials {
        let jitter = |q: Point2<f64>, rng: &mut ChaCha8Rng| Point2::new(q.x + noise.sample(rng), q.y + noise.sample(rng));
        let l = jitter(left, &mut rng);
        let r = jitter(right, &mut rng);
        sum += (rig.triangulate(&l, &r)? - p).norm();
    }
    let noisy_triangulation_mm = 1000.0 * sum / f64::from(trials);
    if verbose {
        println!("mean triangulation error at {noise_px} px noise: {noisy_triangulation_mm:.2} mm");
    }

    let surface = make_surface(3, &SurfaceConfig::default())?;
    let centre = Point2::new(rig.left.cx, rig.left.cy);
    let surface_hit = intersect_ray_surface(&rig.pixel_ray(&centre, Side::Left), &surface);
    if verbose {
        match surface_hit {
            Some(hit) => println!("principal ray meets the surface at {hit:?}"),
            None => println!("principal ray misses the surface"),
        }
    }
    Ok(GeometrySummary {
        round_trip_m,
        noisy_triangulation_mm,
        surface_hit,
    })
}

#[allow(dead_code)]
fn main() -> sensing_area::Result<()> {
    let noise = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    run_example(noise, true).map(|_| ())
}
