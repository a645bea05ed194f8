//! Simulated acquisition rig: phantom on a rotation stage, probe poses and the
//! three illumination conditions captured per view.

pub mod render;
pub mod surface;

use std::sync::Arc;

use image::{GrayImage, RgbImage};
use nalgebra::{Point2, Point3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{intersect_ray_surface, Ray3, Side, StereoRig, DepthMap};
use crate::seed::stream_rng;

pub use render::{render_probe_labels, render_views, ProbeLabel, RenderConfig};
pub use surface::{make_surface, PhantomSpec, SurfaceConfig, TissueSurface};

/// Number of stage positions per revolution (36 degrees apart).
pub const STAGES_PER_REVOLUTION: u32 = 10;

/// Angle of the rotation stage at `stage_index`, in radians.
pub fn stage_angle(stage_index: u32) -> f64 {
    f64::from(stage_index) * std::f64::consts::TAU / f64::from(STAGES_PER_REVOLUTION)
}

/// The probe as a finite cylinder ending at `tip`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbePose {
    pub tip: Point3<f64>,
    /// Unit vector from the tip toward the tissue.
    pub axis_dir: Vector3<f64>,
    pub radius: f64,
    /// Length of body behind the tip (meters).
    pub visible_length: f64,
    /// Length of the darkened section at the tip (meters).
    pub tip_cap_length: f64,
}

impl ProbePose {
    pub fn axis(&self) -> Ray3 {
        Ray3 {
            origin: self.tip,
            direction: self.axis_dir,
        }
    }

    /// Far end of the visible body.
    pub fn back_end(&self) -> Point3<f64> {
        self.tip - self.axis_dir * self.visible_length
    }
}

/// Ranges the probe pose sampler draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    /// Tip height above the phantom base plane (meters).
    pub tip_height: [f64; 2],
    /// Angle between probe axis and optical axis (degrees).
    pub tilt_deg: [f64; 2],
    /// Half-width of the azimuth jitter around the outward direction (degrees).
    pub azimuth_jitter_deg: f64,
    /// Fraction of the image (centred) the tip must project into.
    pub tip_region: f64,
    /// Intersection must land at least this fraction of the width from any border.
    pub gt_margin: f64,
    pub radius: f64,
    pub max_length: f64,
    pub tip_cap_length: f64,
    /// The body is cut where it reaches this depth (meters).
    pub near_plane: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            tip_height: [0.01, 0.03],
            tilt_deg: [20.0, 45.0],
            azimuth_jitter_deg: 60.0,
            tip_region: 0.6,
            gt_margin: 0.05,
            radius: 0.004,
            max_length: 0.15,
            tip_cap_length: 0.005,
            near_plane: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub rig: StereoRig,
    pub surface: SurfaceConfig,
    pub probe: ProbeConfig,
    /// Rejection-sampling budget per pose.
    pub max_attempts: u32,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            rig: StereoRig::canonical(),
            surface: SurfaceConfig::default(),
            probe: ProbeConfig::default(),
            max_attempts: 100,
        }
    }
}

/// Identity of a simulated view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleId {
    pub pose_index: u32,
    pub stage_index: u32,
    pub seed: u64,
}

impl SampleId {
    /// File-name stem, e.g. `p0007_s03`.
    pub fn stem(&self) -> String {
        format!("p{:04}_s{:02}", self.pose_index, self.stage_index)
    }
}

impl std::fmt::Display for SampleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.stem())
    }
}

/// Everything needed to image one view.
#[derive(Debug, Clone)]
pub struct Scene {
    pub surface: Arc<TissueSurface>,
    pub probe: ProbePose,
    pub rig: StereoRig,
    pub stage_index: u32,
    pub pose_index: u32,
    pub seed: u64,
}

impl Scene {
    pub fn id(&self) -> SampleId {
        SampleId {
            pose_index: self.pose_index,
            stage_index: self.stage_index,
            seed: self.seed,
        }
    }

    /// 3D point where the probe axis first meets the tissue.
    pub fn intersection(&self) -> Option<Point3<f64>> {
        intersect_ray_surface(&self.probe.axis(), self.surface.as_ref())
    }
}

/// The three captures of one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewImages {
    pub standard: RgbImage,
    pub laser_on_dark: RgbImage,
    pub laser_off_dark: RgbImage,
}

/// One rendered stereo view with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: SampleId,
    /// Indexed by [`Side::index`].
    pub views: [ViewImages; 2],
    pub gt_3d: Point3<f64>,
    pub gt_px: [Point2<f64>; 2],
    pub depth: Option<[DepthMap; 2]>,
    /// Exact probe silhouettes (0 or 255).
    pub probe_masks: [GrayImage; 2],
}

impl Sample {
    pub fn view(&self, side: Side) -> &ViewImages {
        &self.views[side.index()]
    }

    pub fn gt(&self, side: Side) -> Point2<f64> {
        self.gt_px[side.index()]
    }

    pub fn mask(&self, side: Side) -> &GrayImage {
        &self.probe_masks[side.index()]
    }

    pub fn depth(&self, side: Side) -> Option<&DepthMap> {
        self.depth.as_ref().map(|d| &d[side.index()])
    }
}

/// Scene factory for one phantom: caches the rasterized surface at every
/// stage angle.
#[derive(Debug, Clone)]
pub struct SceneGenerator {
    pub config: SceneConfig,
    pub seed: u64,
    surfaces: Vec<Arc<TissueSurface>>,
}

impl SceneGenerator {
    pub fn new(seed: u64, config: SceneConfig) -> Result<Self> {
        config.rig.validate()?;
        let phantom = PhantomSpec::generate(seed, &config.surface)?;
        let surfaces = (0..STAGES_PER_REVOLUTION)
            .map(|i| Arc::new(phantom.rasterize(stage_angle(i))))
            .collect();
        Ok(Self {
            config,
            seed,
            surfaces,
        })
    }

    pub fn surface(&self, stage_index: u32) -> &Arc<TissueSurface> {
        &self.surfaces[stage_index as usize]
    }

    /// Draws (or re-draws) the probe pose for `pose_index`. The pose is
    /// shared by all stage positions, so it must be valid at every one.
    pub fn probe_pose(&self, pose_index: u32) -> Result<ProbePose> {
        let mut rng = stream_rng(self.seed, "probe", &[u64::from(pose_index)]);
        for _ in 0..self.config.max_attempts {
            let pose = self.draw_pose(&mut rng);
            if let Some(pose) = pose {
                if self.accepts(&pose) {
                    return Ok(pose);
                }
            }
        }
        Err(Error::ResampleBudget {
            pose_index,
            attempts: self.config.max_attempts,
        })
    }

    fn draw_pose(&self, rng: &mut impl Rng) -> Option<ProbePose> {
        let rig = &self.config.rig;
        let pc = &self.config.probe;
        let cam = &rig.left;
        let (w, h) = (f64::from(cam.width), f64::from(cam.height));
        let margin = 0.5 * (1.0 - pc.tip_region);
        let u = rng.gen_range(margin * w..=(1.0 - margin) * w);
        let v = rng.gen_range(margin * h..=(1.0 - margin) * h);
        let tip_depth = self.config.surface.base_depth - rng.gen_range(pc.tip_height[0]..=pc.tip_height[1]);
        if tip_depth <= pc.near_plane {
            return None;
        }
        let tip = rig.backproject(&Point2::new(u, v), tip_depth, Side::Left).ok()?;

        // body leaves the frame away from the image centre
        let jitter = pc.azimuth_jitter_deg.to_radians();
        let outward = (tip.y).atan2(tip.x - 0.5 * rig.baseline) + rng.gen_range(-jitter..=jitter);
        let tilt = rng.gen_range(pc.tilt_deg[0]..=pc.tilt_deg[1]).to_radians();
        let axis_dir = Vector3::new(
            -tilt.sin() * outward.cos(),
            -tilt.sin() * outward.sin(),
            tilt.cos(),
        );
        let to_near = (tip.z - pc.near_plane) / axis_dir.z;
        Some(ProbePose {
            tip,
            axis_dir,
            radius: pc.radius,
            visible_length: pc.max_length.min(to_near),
            tip_cap_length: pc.tip_cap_length,
        })
    }

    fn accepts(&self, pose: &ProbePose) -> bool {
        let rig = &self.config.rig;
        let pc = &self.config.probe;
        let (w, h) = (f64::from(rig.width()), f64::from(rig.height()));
        let margin = 0.5 * (1.0 - pc.tip_region);
        let gt_margin = pc.gt_margin * w;
        for side in Side::BOTH {
            let Ok(tip) = rig.project(&pose.tip, side) else {
                return false;
            };
            let central = tip.x >= margin * w
                && tip.x <= (1.0 - margin) * w
                && tip.y >= margin * h
                && tip.y <= (1.0 - margin) * h;
            if !central {
                return false;
            }
            let Ok(back) = rig.project(&pose.back_end(), side) else {
                return false;
            };
            if rig.camera(side).contains(&back) {
                return false;
            }
        }
        self.surfaces.iter().all(|surface| {
            let Some(hit) = intersect_ray_surface(&pose.axis(), surface.as_ref()) else {
                return false;
            };
            Side::BOTH.iter().all(|&side| match rig.project(&hit, side) {
                Ok(px) => {
                    px.x >= gt_margin
                        && px.y >= gt_margin
                        && px.x <= w - 1.0 - gt_margin
                        && px.y <= h - 1.0 - gt_margin
                }
                Err(_) => false,
            })
        })
    }

    pub fn scene(&self, pose_index: u32, stage_index: u32) -> Result<Scene> {
        if stage_index >= STAGES_PER_REVOLUTION {
            return Err(Error::InvalidArgument(format!(
                "stage index {stage_index} outside [0, {STAGES_PER_REVOLUTION})"
            )));
        }
        let probe = self.probe_pose(pose_index)?;
        Ok(self.scene_with_probe(probe, pose_index, stage_index))
    }

    /// Builds the scene for an already drawn pose (avoids resampling when
    /// iterating over stages).
    pub fn scene_with_probe(&self, probe: ProbePose, pose_index: u32, stage_index: u32) -> Scene {
        Scene {
            surface: Arc::clone(&self.surfaces[stage_index as usize]),
            probe,
            rig: self.config.rig,
            stage_index,
            pose_index,
            seed: self.seed,
        }
    }
}

/// Scene for (`pose_index`, `stage_index`) of the phantom seeded by `seed`.
pub fn sample_scene(pose_index: u32, stage_index: u32, seed: u64, config: &SceneConfig) -> Result<Scene> {
    SceneGenerator::new(seed, config.clone())?.scene(pose_index, stage_index)
}

/// Intersection pixel in the left image computed from perfect knowledge of
/// probe pose and surface.
pub fn geometric_oracle(scene: &Scene) -> Result<Point2<f64>> {
    geometric_oracle_side(scene, Side::Left)
}

pub fn geometric_oracle_side(scene: &Scene, side: Side) -> Result<Point2<f64>> {
    let hit = scene
        .intersection()
        .ok_or(Error::NoIntersection("probe axis misses the surface"))?;
    scene.rig.project(&hit, side)
}
