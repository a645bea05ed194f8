mod common;

use std::sync::Arc;

use approx::assert_abs_diff_eq;
use nalgebra::{Point2, Point3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sensing_area::geometry::{
    intersect_ray_surface, Heightfield, Ray3, Side, StereoRig, BISECTION_TOLERANCE,
};
use sensing_area::scene::render::render_depth;
use sensing_area::scene::{
    make_surface, ProbePose, Scene, SceneConfig, SceneGenerator, SurfaceConfig,
    TissueSurface,
};

proptest! {
    #[test]
    fn project_backproject_round_trip(
        z in 0.05f64..5.0,
        fx in -1.0f64..1.0,
        fy in -1.0f64..1.0,
        right in any::<bool>(),
    ) {
        let rig = StereoRig::canonical();
        let side = if right { Side::Right } else { Side::Left };
        let p = Point3::new(fx * z, fy * z, z);
        let q = rig.backproject(&rig.project(&p, side).unwrap(), z, side).unwrap();
        prop_assert!((p - q).norm() < 1e-9, "{p} -> {q}");
    }

    #[test]
    fn noiseless_triangulation_recovers_point(
        z in 0.05f64..5.0,
        fx in -0.7f64..0.7,
        fy in -0.5f64..0.5,
    ) {
        let rig = StereoRig::canonical();
        let p = Point3::new(fx * z, fy * z, z);
        let l = rig.project(&p, Side::Left).unwrap();
        let r = rig.project(&p, Side::Right).unwrap();
        let q = rig.triangulate(&l, &r).unwrap();
        prop_assert!((p - q).norm() < 1e-9, "{p} -> {q}");
    }

    #[test]
    fn flat_plane_matches_closed_form(
        z in 0.1f64..0.5,
        tx in -0.1f64..0.1,
        ty in -0.1f64..0.1,
        oz in 0.0f64..0.05,
    ) {
        let plane = TissueSurface::flat(z, [-0.2, 0.2], [-0.2, 0.2], [64, 64]);
        let origin = Point3::new(0.01, -0.01, oz);
        let ray = Ray3::new(origin, Point3::new(tx, ty, z) - origin);
        let hit = intersect_ray_surface(&ray, &plane).unwrap();
        let t = (z - origin.z) / ray.direction.z;
        prop_assert!((hit - ray.at(t)).norm() < 1e-7);
    }
}

#[test]
fn projection_examples() {
    let rig = StereoRig::canonical();
    let c = rig.project(&Point3::new(0.0, 0.0, 0.5), Side::Left).unwrap();
    assert_abs_diff_eq!(c.x, 320.0);
    assert_abs_diff_eq!(c.y, 240.0);
    let u = rig.project(&Point3::new(0.05, 0.0, 0.5), Side::Left).unwrap();
    assert_abs_diff_eq!(u.x, 360.0, epsilon = 1e-12);
    assert!(rig.project(&Point3::new(0.0, 0.0, 0.0), Side::Left).is_err());
    assert!(rig.backproject(&Point2::new(320.0, 240.0), 0.0, Side::Left).is_err());
    let same = Point2::new(300.0, 200.0);
    assert!(rig.triangulate(&same, &same).is_err());
}

#[test]
fn plane_intersection_examples() {
    let plane = TissueSurface::flat(0.3, [-0.3, 0.3], [-0.3, 0.3], [64, 64]);
    let hit = intersect_ray_surface(&Ray3::new(Point3::origin(), Vector3::z()), &plane).unwrap();
    assert!((hit - Point3::new(0.0, 0.0, 0.3)).norm() < 1e-9);
    let ray = Ray3::new(Point3::origin(), Vector3::new(1.0, 0.0, 2.0));
    let hit = intersect_ray_surface(&ray, &plane).unwrap();
    assert!((hit - Point3::new(0.15, 0.0, 0.3)).norm() < 1e-9);
    // pointing away from the plane
    let up = Ray3::new(Point3::origin(), -Vector3::z());
    assert!(intersect_ray_surface(&up, &plane).is_none());
}

/// Worst-case error of rectified stereo triangulation when each pixel
/// coordinate may move by up to `noise`, from the closed-form disparity
/// relations z = f·b/d, x = (uL − cx)·z/f, y = (v − cy)·z/f. Evaluated at
/// the corners of the noise box, where the extremes of these monotone
/// expressions lie.
fn triangulation_error_bound(rig: &StereoRig, p: &Point3<f64>, noise: f64) -> f64 {
    let f = rig.left.fx;
    let b = rig.baseline;
    let ul = f * p.x / p.z + rig.left.cx;
    let ur = f * (p.x - b) / p.z + rig.right.cx;
    let v = f * p.y / p.z + rig.left.cy;
    let mut worst: f64 = 0.0;
    for sl in [-1.0, 1.0] {
        for sr in [-1.0, 1.0] {
            for sv in [-1.0, 1.0] {
                let (ul2, ur2) = (ul + sl * noise, ur + sr * noise);
                let z = f * b / (ul2 - ur2);
                let q = Point3::new(
                    (ul2 - rig.left.cx) * z / f,
                    (v + sv * noise - rig.left.cy) * z / f,
                    z,
                );
                worst = worst.max((q - p).norm());
            }
        }
    }
    worst
}

#[test]
fn noisy_triangulation_within_monte_carlo_bound() {
    let rig = StereoRig::canonical();
    let p = Point3::new(0.01, -0.02, 0.4);
    let bound = triangulation_error_bound(&rig, &p, 0.5) * 1.05;
    let l = rig.project(&p, Side::Left).unwrap();
    let r = rig.project(&p, Side::Right).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut max_err: f64 = 0.0;
    for _ in 0..10_000 {
        let mut jitter = || rng.gen_range(-0.5..=0.5);
        let nl = Point2::new(l.x + jitter(), l.y + jitter());
        let nr = Point2::new(r.x + jitter(), r.y + jitter());
        let q = rig.triangulate(&nl, &nr).unwrap();
        max_err = max_err.max((q - p).norm());
    }
    // at 5 mm baseline and 0.4 m the disparity is only 5 px, so the bound is
    // of order 0.1 m; the sampled errors must stay under it
    assert!(bound > 0.05 && bound < 0.15, "bound {bound}");
    assert!(max_err <= bound, "max error {max_err} > bound {bound}");
    assert!(max_err > 0.5 * bound / 1.05, "bound is loose: {max_err} vs {bound}");
}

#[test]
fn random_rays_match_fine_marching_oracle() {
    let config = SurfaceConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut hits = 0;
    for i in 0..100 {
        let surface = make_surface(1000 + i / 10, &config).unwrap();
        let ray = common::random_ray(&mut rng, surface.domain());
        let step = surface.cell_size() / 40.0;
        let fast = intersect_ray_surface(&ray, &surface);
        let slow = common::march_oracle(&ray, &surface, step);
        match (fast, slow) {
            (Some(a), Some(b)) => {
                hits += 1;
                assert!((a - b).norm() < 1e-5, "ray {i}: {a} vs {b}");
            }
            (None, None) => {}
            other => panic!("ray {i}: disagreement {other:?}"),
        }
    }
    assert!(hits > 60, "only {hits} rays hit");
}

fn far_probe() -> ProbePose {
    ProbePose {
        tip: Point3::new(5.0, 5.0, 1.0),
        axis_dir: Vector3::z(),
        radius: 0.004,
        visible_length: 0.01,
        tip_cap_length: 0.005,
    }
}

fn flat_scene(rig: StereoRig) -> Scene {
    Scene {
        surface: Arc::new(TissueSurface::flat(0.3, [-0.5, 0.5], [-0.4, 0.4], [100, 80])),
        probe: far_probe(),
        rig,
        stage_index: 0,
        pose_index: 0,
        seed: 5,
    }
}

#[test]
fn flat_plane_depth_render() {
    let rig = StereoRig::canonical().scaled(0.1);
    let scene = flat_scene(rig);
    let depth = render_depth(&scene, Side::Left, 0.0);
    assert_eq!(depth.valid_count(), (depth.width * depth.height) as usize);
    let (cx, cy) = (rig.left.cx as u32, rig.left.cy as u32);
    assert_abs_diff_eq!(depth.get(cx, cy).unwrap(), 0.3, epsilon = 1e-9);
    for y in 0..depth.height {
        for x in 0..depth.width {
            let d = depth.get(x, y).unwrap();
            assert_abs_diff_eq!(d, 0.3, epsilon = 1e-9);
            // distance along the viewing ray is 0.3 / cos(theta)
            let pix = Point2::new(f64::from(x), f64::from(y));
            let ray = rig.pixel_ray(&pix, Side::Left);
            let p = rig.backproject(&pix, d, Side::Left).unwrap();
            assert_abs_diff_eq!(p.coords.norm(), 0.3 / ray.direction.z, epsilon = 1e-9);
        }
    }
}

#[test]
fn invalid_fraction_is_exact_and_deterministic() {
    let rig = StereoRig::canonical().scaled(0.1);
    let scene = flat_scene(rig);
    let total = (rig.width() * rig.height()) as usize;
    let a = render_depth(&scene, Side::Left, 0.2);
    let b = render_depth(&scene, Side::Left, 0.2);
    assert_eq!(total - a.valid_count(), (0.2 * total as f64).floor() as usize);
    assert_eq!(a, b);
    let right = render_depth(&scene, Side::Right, 0.2);
    assert_ne!(a.values, right.values);
}

fn small_generator(seed: u64) -> SceneGenerator {
    let mut config = SceneConfig::default();
    config.rig = config.rig.scaled(0.1);
    SceneGenerator::new(seed, config).unwrap()
}

/// Distance from `p` to the probe's surface (side wall or tip disk).
fn distance_to_probe(probe: &ProbePose, p: &Point3<f64>) -> f64 {
    let rel = p - probe.tip;
    let s = rel.dot(&probe.axis_dir);
    let radial = (rel - probe.axis_dir * s).norm();
    let wall = if s <= 0.0 && s >= -probe.visible_length {
        (radial - probe.radius).abs()
    } else {
        f64::INFINITY
    };
    let disk = if radial <= probe.radius { s.abs() } else { f64::INFINITY };
    wall.min(disk)
}

#[test]
fn depth_points_lie_on_surface_or_probe() {
    let generator = small_generator(31);
    let mut on_probe = 0;
    for pose in 0..3 {
        let scene = generator.scene(pose, pose * 3).unwrap();
        for side in Side::BOTH {
            let depth = render_depth(&scene, side, 0.0);
            for y in 0..depth.height {
                for x in 0..depth.width {
                    let Some(d) = depth.get(x, y) else { continue };
                    let pix = Point2::new(f64::from(x), f64::from(y));
                    let p = scene.rig.backproject(&pix, d, side).unwrap();
                    let surface_gap = scene
                        .surface
                        .height_at(p.x, p.y)
                        .map_or(f64::INFINITY, |h| (p.z - h).abs());
                    if surface_gap < 2.0 * BISECTION_TOLERANCE {
                        continue;
                    }
                    let probe_gap = distance_to_probe(&scene.probe, &p);
                    assert!(probe_gap < 1e-9, "pixel ({x},{y}) off both: {surface_gap} {probe_gap}");
                    on_probe += 1;
                }
            }
        }
    }
    assert!(on_probe > 0);
}

#[test]
fn depth_at_gt_pixel_backprojects_to_intersection() {
    let generator = small_generator(32);
    let mut checked = 0;
    for pose in 0..6 {
        let scene = generator.scene(pose, 0).unwrap();
        let gt = scene.intersection().unwrap();
        // shift the principal points so the ground truth lands on a pixel centre
        let mut rig = scene.rig;
        let l = rig.project(&gt, Side::Left).unwrap();
        let r = rig.project(&gt, Side::Right).unwrap();
        rig.left.cx += l.x.round() - l.x;
        rig.left.cy += l.y.round() - l.y;
        rig.right.cx += r.x.round() - r.x;
        rig.right.cy += r.y.round() - r.y;
        let shifted = Scene { rig, ..scene };
        for side in Side::BOTH {
            let pix = rig.project(&gt, side).unwrap();
            let (x, y) = (pix.x.round() as u32, pix.y.round() as u32);
            let depth = render_depth(&shifted, side, 0.0);
            let d = depth.get(x, y).unwrap();
            let p = rig.backproject(&Point2::new(f64::from(x), f64::from(y)), d, side).unwrap();
            if distance_to_probe(&shifted.probe, &p) < 1e-9 {
                // the probe body hides the intersection in this view
                continue;
            }
            assert!(
                (p - gt).norm() < 2.0 * BISECTION_TOLERANCE,
                "pose {pose} {side:?}: {}",
                (p - gt).norm()
            );
            checked += 1;
        }
    }
    assert!(checked >= 6, "only {checked} views checked");
}

/// The same surface without slope bounds, so the marcher takes fixed steps.
struct FixedStep<'a>(&'a TissueSurface);

impl Heightfield for FixedStep<'_> {
    fn height_at(&self, x: f64, y: f64) -> Option<f64> {
        self.0.height_at(x, y)
    }
    fn domain(&self) -> [f64; 4] {
        self.0.domain()
    }
    fn height_range(&self) -> [f64; 2] {
        self.0.height_range()
    }
    fn cell_size(&self) -> f64 {
        self.0.cell_size()
    }
}

#[test]
fn slope_bounded_steps_find_the_same_hits() {
    let config = SurfaceConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for i in 0..400 {
        let surface = make_surface(i / 20, &config).unwrap();
        let [sx, sy] = surface.max_slope().unwrap();
        // the bound holds between random nearby points
        for _ in 0..20 {
            let [x0, x1, y0, y1] = surface.domain();
            let (x, y) = (rng.gen_range(x0..x1), rng.gen_range(y0..y1));
            let (u, v) = (rng.gen_range(-0.002..0.002), rng.gen_range(-0.002..0.002));
            if let (Some(a), Some(b)) = (surface.height_at(x, y), surface.height_at(x + u, y + v)) {
                assert!((a - b).abs() <= sx * u.abs() + sy * v.abs() + 1e-12);
            }
        }
        let ray = common::random_ray(&mut rng, surface.domain());
        let fast = intersect_ray_surface(&ray, &surface);
        let plain = intersect_ray_surface(&ray, &FixedStep(&surface));
        match (fast, plain) {
            (Some(a), Some(b)) => assert!((a - b).norm() < 2.0 * BISECTION_TOLERANCE, "ray {i}: {a} vs {b}"),
            (None, None) => {}
            other => panic!("ray {i}: {other:?}"),
        }
    }
}
