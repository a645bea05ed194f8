mod common;

use image::{GrayImage, Luma};
use nalgebra::{Point2, Rotation2, Vector2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use sensing_area::axis::{
    orient_axis, pca_axis, pca_axis_points, principal_points_from_mask, sample_principal_points,
    AxisConfig, LowAnisotropy, ProbeAxis2D,
};
use sensing_area::geometry::Side;
use sensing_area::scene::{render_probe_labels, ProbeLabel, SceneConfig, SceneGenerator};

fn mask_from(points: &[(u32, u32)], w: u32, h: u32) -> GrayImage {
    let mut m = GrayImage::new(w, h);
    for &(x, y) in points {
        m.put_pixel(x, y, Luma([255]));
    }
    m
}

/// Elongated Gaussian cloud with random orientation and anisotropy >= 9.
fn anisotropic_cloud(rng: &mut impl Rng) -> Vec<Point2<f64>> {
    let n = rng.gen_range(50..400);
    let major = rng.gen_range(5.0..40.0);
    let minor = major / rng.gen_range(3.0..10.0);
    let rot = Rotation2::new(rng.gen_range(0.0..std::f64::consts::PI));
    let centre = Vector2::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
    let a = Normal::new(0.0, major).unwrap();
    let b = Normal::new(0.0, minor).unwrap();
    (0..n)
        .map(|_| Point2::from(rot * Vector2::new(a.sample(rng), b.sample(rng)) + centre))
        .collect()
}

fn flag_config() -> AxisConfig {
    AxisConfig {
        on_low_anisotropy: LowAnisotropy::Flag,
        ..Default::default()
    }
}

fn projected_variance(points: &[Point2<f64>], d: &Vector2<f64>) -> f64 {
    let n = points.len() as f64;
    let mean = points.iter().fold(Vector2::zeros(), |acc, p| acc + p.coords / n);
    points.iter().map(|p| (p.coords - mean).dot(d).powi(2)).sum::<f64>() / n
}

#[test]
fn collinear_points() {
    let axis = pca_axis(&mask_from(&[(0, 0), (1, 1), (2, 2)], 4, 4), &AxisConfig::default()).unwrap();
    assert!((axis.centroid - Point2::new(1.0, 1.0)).norm() < 1e-12);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    assert!((axis.direction.x.abs() - s).abs() < 1e-12);
    assert!((axis.direction.y.abs() - s).abs() < 1e-12);
    assert!(axis.direction.x * axis.direction.y > 0.0);
}

#[test]
fn rectangle_axis() {
    let pts: Vec<(u32, u32)> = (10..110).flat_map(|x| (20..24).map(move |y| (x, y))).collect();
    let axis = pca_axis(&mask_from(&pts, 128, 64), &AxisConfig::default()).unwrap();
    assert!((axis.centroid - Point2::new(59.5, 21.5)).norm() < 1e-9);
    assert!((axis.direction.x.abs() - 1.0).abs() < 1e-12);
}

#[test]
fn isotropic_square_is_never_silent() {
    let pts: Vec<(u32, u32)> = (0..10).flat_map(|x| (0..10).map(move |y| (x + 5, y + 5))).collect();
    let mask = mask_from(&pts, 32, 32);
    assert!(pca_axis(&mask, &AxisConfig::default()).is_err());
    assert!(pca_axis(&mask, &flag_config()).unwrap().low_anisotropy);
}

#[test]
fn degenerate_masks_are_errors() {
    assert!(pca_axis(&GrayImage::new(8, 8), &AxisConfig::default()).is_err());
    assert!(pca_axis(&mask_from(&[(3, 3)], 8, 8), &AxisConfig::default()).is_err());
    let same = [Point2::new(1.0, 2.0), Point2::new(1.0, 2.0)];
    assert!(pca_axis_points(&same, &flag_config()).is_err());
}

#[test]
fn sampling_examples() {
    let axis = ProbeAxis2D {
        centroid: Point2::origin(),
        direction: Vector2::x(),
        extent: [-1.0, 1.0],
        eigenvalues: [1.0, 0.0],
        low_anisotropy: false,
    };
    let pp = sample_principal_points(&axis, 3).unwrap();
    assert_eq!(pp.points, vec![Point2::new(-1.0, 0.0), Point2::origin(), Point2::new(1.0, 0.0)]);
    let pp = sample_principal_points(&axis, 50).unwrap();
    assert_eq!(pp.len(), 50);
    assert_eq!(pp.points[0], axis.point_at(-1.0));
    assert_eq!(pp.points[49], axis.point_at(1.0));
    assert!(sample_principal_points(&axis, 1).is_err());
}

#[test]
fn matches_exhaustive_angle_oracle_on_random_clouds() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..100 {
        let cloud = anisotropic_cloud(&mut rng);
        let axis = pca_axis_points(&cloud, &AxisConfig::default()).unwrap();
        let oracle = common::max_variance_direction(&cloud);
        let cos = axis.direction.x * oracle.x + axis.direction.y * oracle.y;
        assert!(cos.abs() > 1.0 - 1e-8, "cloud {i}: |cos| = {}", cos.abs());

        let v = projected_variance(&cloud, &axis.direction);
        for k in 0..360 {
            let e = Rotation2::new(f64::from(k).to_radians()) * Vector2::x();
            assert!(v >= projected_variance(&cloud, &e) - 1e-9);
        }
    }
}

proptest! {
    #[test]
    fn rotation_equivariance(seed in any::<u64>(), theta in -3.1f64..3.1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cloud = anisotropic_cloud(&mut rng);
        let rot = Rotation2::new(theta);
        let turned: Vec<Point2<f64>> = cloud.iter().map(|p| rot * p).collect();
        let a = pca_axis_points(&cloud, &AxisConfig::default()).unwrap();
        let b = pca_axis_points(&turned, &AxisConfig::default()).unwrap();
        let expected = rot * a.direction;
        // angle between lines, ignoring sign
        let cross = expected.perp(&b.direction);
        let angle = cross.abs().asin();
        prop_assert!(angle < 1e-6, "{angle}");
    }

    #[test]
    fn principal_points_are_collinear_and_even(seed in any::<u64>(), n in 2usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cloud = anisotropic_cloud(&mut rng);
        let axis = pca_axis_points(&cloud, &AxisConfig::default()).unwrap();
        let pp = sample_principal_points(&axis, n).unwrap();
        prop_assert_eq!(pp.len(), n);
        let gap = (axis.extent[1] - axis.extent[0]) / (n - 1) as f64;
        for (i, p) in pp.points.iter().enumerate() {
            let off = p - axis.centroid;
            prop_assert!(off.perp(&axis.direction).abs() < 1e-9);
            if i > 0 {
                prop_assert!(((p - pp.points[i - 1]).norm() - gap).abs() < 1e-9);
            }
        }

        // re-fitting the sampled points gives back the same line
        let again = pca_axis_points(&pp.points, &AxisConfig::default()).unwrap();
        prop_assert!(again.direction.dot(&axis.direction).abs() > 1.0 - 1e-12);
    }
}

/// A 6 px wide bar from the left border to x = 60, slightly inclined.
fn left_entry_mask() -> GrayImage {
    let mut m = GrayImage::new(100, 80);
    for x in 0..60u32 {
        let yc = 30.0 + 0.2 * f64::from(x);
        for dy in -3..3 {
            m.put_pixel(x, (yc as i32 + dy) as u32, Luma([255]));
        }
    }
    m
}

#[test]
fn orientation_follows_entry_border() {
    let m = left_entry_mask();
    let axis = orient_axis(&pca_axis(&m, &AxisConfig::default()).unwrap(), &m);
    assert!(axis.direction.x > 0.0);
    let mirrored = image::imageops::flip_horizontal(&m);
    let axis = orient_axis(&pca_axis(&mirrored, &AxisConfig::default()).unwrap(), &mirrored);
    assert!(axis.direction.x < 0.0);
    // re-orienting is a no-op
    assert_eq!(orient_axis(&axis, &mirrored), axis);
}

/// Last principal point against the rendered tip cap over `poses` x 10
/// scenes at `scale`; returns the largest distance in full-resolution pixels.
fn worst_tip_distance(poses: u32, scale: f64) -> f64 {
    let mut config = SceneConfig::default();
    config.rig = config.rig.scaled(scale);
    let generator = SceneGenerator::new(0, config).unwrap();
    let cfg = AxisConfig::default();
    let mut worst: f64 = 0.0;
    for pose in 0..poses {
        let probe = generator.probe_pose(pose).unwrap();
        for stage in 0..10 {
            let scene = generator.scene_with_probe(probe, pose, stage);
            let labels = render_probe_labels(&scene, Side::Left);
            let w = scene.rig.width() as usize;
            let mut mask = GrayImage::new(scene.rig.width(), scene.rig.height());
            let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
            for (i, l) in labels.iter().enumerate() {
                let (x, y) = ((i % w) as u32, (i / w) as u32);
                if *l != ProbeLabel::None {
                    mask.put_pixel(x, y, Luma([255]));
                }
                if *l == ProbeLabel::TipCap {
                    sx += f64::from(x);
                    sy += f64::from(y);
                    n += 1.0;
                }
            }
            assert!(n > 0.0, "pose {pose} stage {stage}: tip cap hidden");
            let (_, pp) = principal_points_from_mask(&mask, &cfg).unwrap();
            let tip = Point2::new(sx / n, sy / n);
            let d = (pp.points[pp.len() - 1] - tip).norm() / scale;
            worst = worst.max(d);
        }
    }
    worst
}

#[test]
fn last_principal_point_reaches_tip_cap() {
    let worst = worst_tip_distance(120, 0.25);
    assert!(worst < 10.0, "worst {worst} px");
}
