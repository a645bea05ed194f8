//! On-disk datasets: PNG files plus a JSON manifest, split by probe pose.
//!
//! ```text
//! <root>/images/<id>_<side>_<condition>.png   standard, laser_on, laser_off
//! <root>/masks/<id>_<side>.png
//! <root>/depth/<id>_<side>.png                16-bit, optional
//! <root>/manifest.json
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::{GrayImage, RgbImage};
use nalgebra::{Point2, Point3};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::axis::{principal_points_from_mask, AxisConfig};
use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Side, StereoRig};
use crate::scene::{render_views, RenderConfig, Sample, SampleId, SceneConfig, SceneGenerator, ViewImages};
use crate::seed::stream_rng;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Default train/validation/test proportions (800/200/200 of 1200).
pub const DEFAULT_FRACTIONS: [f64; 3] = [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0];

const CONDITIONS: [&str; 3] = ["standard", "laser_on", "laser_off"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown split {s:?} (expected train, val or test)")))
    }
}

/// Files of one camera, relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewFiles {
    pub standard: String,
    pub laser_on: String,
    pub laser_off: String,
    pub mask: String,
    pub depth: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: SampleId,
    /// Left then right.
    pub files: [ViewFiles; 2],
    pub gt_px: [Point2<f64>; 2],
    pub gt_3d: Point3<f64>,
    /// Oriented principal points per view; absent if the silhouette was too
    /// isotropic for an axis.
    pub principal_points: Option<[Vec<Point2<f64>>; 2]>,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub rig: StereoRig,
    /// Hash of the configuration that produced the dataset.
    pub fingerprint: String,
    /// Scene generator settings, so the scenes can be rebuilt exactly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SceneSource>,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSource {
    pub seed: u64,
    pub config: SceneConfig,
}

impl SceneSource {
    pub fn generator(&self) -> Result<SceneGenerator> {
        SceneGenerator::new(self.seed, self.config.clone())
    }
}

/// Hex SHA-256 of the JSON encoding of `value`.
pub fn fingerprint<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_vec(value).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect())
}

fn file_name(id: &SampleId, side: Side, suffix: Option<&str>) -> String {
    match suffix {
        Some(s) => format!("{}_{}_{s}.png", id.stem(), side.as_str()),
        None => format!("{}_{}.png", id.stem(), side.as_str()),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn save_rgb(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|e| Error::image(path, e))
}

/// Writes every image of `sample` under `root` and returns its manifest
/// entry (without a split tag). Rewriting the same sample produces
/// identical files.
pub fn write_sample(sample: &Sample, root: &Path, axis: &AxisConfig) -> Result<ManifestEntry> {
    for sub in ["images", "masks"] {
        ensure_dir(&root.join(sub))?;
    }
    if sample.depth.is_some() {
        ensure_dir(&root.join("depth"))?;
    }
    let id = sample.id;
    let mut files = Vec::with_capacity(2);
    for side in Side::BOTH {
        let v = sample.view(side);
        let names: Vec<String> = CONDITIONS
            .iter()
            .map(|c| format!("images/{}", file_name(&id, side, Some(c))))
            .collect();
        for (img, name) in [&v.standard, &v.laser_on_dark, &v.laser_off_dark].into_iter().zip(&names) {
            save_rgb(img, &root.join(name))?;
        }
        let mask = format!("masks/{}", file_name(&id, side, None));
        let path = root.join(&mask);
        sample.mask(side).save(&path).map_err(|e| Error::image(&path, e))?;
        let depth = match sample.depth(side) {
            Some(d) => {
                let name = format!("depth/{}", file_name(&id, side, None));
                d.save_png(&root.join(&name))?;
                Some(name)
            }
            None => None,
        };
        let [standard, laser_on, laser_off]: [String; 3] = names.try_into().expect("three conditions");
        files.push(ViewFiles {
            standard,
            laser_on,
            laser_off,
            mask,
            depth,
        });
    }
    let points = Side::BOTH.map(|side| {
        principal_points_from_mask(sample.mask(side), axis)
            .ok()
            .map(|(_, p)| p.points)
    });
    let principal_points = match points {
        [Some(l), Some(r)] => Some([l, r]),
        _ => None,
    };
    Ok(ManifestEntry {
        id,
        files: files.try_into().expect("two sides"),
        gt_px: sample.gt_px,
        gt_3d: sample.gt_3d,
        principal_points,
        split: None,
    })
}

/// Assigns split tags by pose: distinct pose indices are shuffled with
/// `seed` and cut by largest-remainder rounding of `fractions`
/// (train, val, test). All stages of a pose share a split.
pub fn split(manifest: &Manifest, fractions: [f64; 3], seed: u64) -> Result<Manifest> {
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || fractions.iter().any(|&f| !(f >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "split fractions must be non-negative and sum to 1, got {fractions:?}"
        )));
    }
    let poses: BTreeSet<u32> = manifest.entries.iter().map(|e| e.id.pose_index).collect();
    let n = poses.len();
    let wanted = fractions.iter().filter(|&&f| f > 0.0).count();
    if n < wanted {
        return Err(Error::InvalidArgument(format!(
            "{n} distinct poses cannot fill {wanted} splits"
        )));
    }
    let mut counts = largest_remainder(n, &fractions);
    // small datasets: every requested split gets at least one pose
    for i in 0..3 {
        if fractions[i] > 0.0 && counts[i] == 0 {
            let donor = (0..3).max_by_key(|&j| (counts[j], std::cmp::Reverse(j))).expect("three splits");
            counts[donor] -= 1;
            counts[i] += 1;
        }
    }
    let mut order: Vec<u32> = poses.into_iter().collect();
    order.shuffle(&mut stream_rng(seed, "split", &[]));
    let mut tag = std::collections::HashMap::new();
    let mut it = order.into_iter();
    for (s, &c) in Split::ALL.iter().zip(&counts) {
        for pose in it.by_ref().take(c) {
            tag.insert(pose, *s);
        }
    }
    let mut out = manifest.clone();
    for e in &mut out.entries {
        e.split = Some(tag[&e.id.pose_index]);
    }
    Ok(out)
}

fn largest_remainder(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let exact = fractions.map(|f| f * n as f64);
    let mut counts = exact.map(|x| x.floor() as usize);
    let mut rest = n - counts.iter().sum::<usize>();
    let mut order = [0, 1, 2];
    // ties (up to rounding noise) go to the earlier split
    let remainder = exact.map(|x| ((x - x.floor()) * 1e9).round() as i64);
    order.sort_by_key(|&i| std::cmp::Reverse(remainder[i]));
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts
}

impl Manifest {
    pub fn new(rig: StereoRig, fingerprint: String) -> Self {
        Self {
            version: MANIFEST_VERSION,
            rig,
            fingerprint,
            source: None,
            entries: Vec::new(),
        }
    }

    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Format {
                path,
                reason: format!("unsupported manifest version {}", manifest.version),
            });
        }
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        ensure_dir(root)?;
        let path = root.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Checks entry invariants that do not need the image files.
    pub fn validate(&self) -> Result<()> {
        self.rig.validate()?;
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            let bad = |reason: String| Error::Validation {
                id: e.id.stem(),
                reason,
            };
            if !seen.insert((e.id.pose_index, e.id.stage_index)) {
                return Err(bad("duplicate sample id".into()));
            }
            for side in Side::BOTH {
                let gt = e.gt_px[side.index()];
                if !self.rig.camera(side).contains(&gt) {
                    return Err(bad(format!(
                        "{} ground truth ({:.3}, {:.3}) lies outside the image",
                        side.as_str(),
                        gt.x,
                        gt.y
                    )));
                }
            }
            if !(e.gt_3d.z > 0.0) {
                return Err(bad("3D ground truth must be in front of the cameras".into()));
            }
        }
        Ok(())
    }

    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == Some(split)).count()
    }

    pub fn has_depth(&self) -> bool {
        !self.entries.is_empty() && self.entries.iter().all(|e| e.files.iter().all(|f| f.depth.is_some()))
    }
}

fn load_rgb(path: &Path, size: (u32, u32), id: &str) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| Error::image(path, e))?.into_rgb8();
    check_size(img.dimensions(), size, path, id)?;
    Ok(img)
}

fn check_size(got: (u32, u32), want: (u32, u32), path: &Path, id: &str) -> Result<()> {
    if got != want {
        return Err(Error::Validation {
            id: id.to_string(),
            reason: format!("{} is {}x{}, expected {}x{}", path.display(), got.0, got.1, want.0, want.1),
        });
    }
    Ok(())
}

/// Loads the sample behind `entry`, validating sizes and the mask.
pub fn read_sample(root: &Path, rig: &StereoRig, entry: &ManifestEntry) -> Result<Sample> {
    let id = entry.id.stem();
    let size = (rig.width(), rig.height());
    let mut views = Vec::with_capacity(2);
    let mut masks = Vec::with_capacity(2);
    let mut depths = Vec::with_capacity(2);
    for f in &entry.files {
        views.push(ViewImages {
            standard: load_rgb(&root.join(&f.standard), size, &id)?,
            laser_on_dark: load_rgb(&root.join(&f.laser_on), size, &id)?,
            laser_off_dark: load_rgb(&root.join(&f.laser_off), size, &id)?,
        });
        let path = root.join(&f.mask);
        let mask: GrayImage = image::open(&path).map_err(|e| Error::image(&path, e))?.into_luma8();
        check_size(mask.dimensions(), size, &path, &id)?;
        if !mask.pixels().any(|p| p.0[0] > 0) {
            return Err(Error::Validation {
                id,
                reason: format!("{} is empty", path.display()),
            });
        }
        masks.push(mask);
        if let Some(d) = &f.depth {
            let path = root.join(d);
            let depth = DepthMap::load_png(&path)?;
            check_size((depth.width, depth.height), size, &path, &id)?;
            depths.push(depth);
        }
    }
    let depth = match depths.len() {
        0 => None,
        2 => Some(depths.try_into().expect("two depth maps")),
        _ => {
            return Err(Error::Validation {
                id,
                reason: "depth present for only one camera".into(),
            })
        }
    };
    Ok(Sample {
        id: entry.id,
        views: views.try_into().expect("two views"),
        gt_3d: entry.gt_3d,
        gt_px: entry.gt_px,
        depth,
        probe_masks: masks.try_into().expect("two masks"),
    })
}

/// A manifest together with the directory it describes.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let manifest = Manifest::load(&root)?;
        Ok(Self { root, manifest })
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> + '_ {
        self.manifest.entries.iter().filter(move |e| e.split == Some(split))
    }

    /// Lazily loads the samples of `split` in manifest order.
    pub fn read_split(&self, split: Split) -> impl Iterator<Item = Result<Sample>> + '_ {
        self.entries(split)
            .map(move |e| read_sample(&self.root, &self.manifest.rig, e))
    }

    pub fn read_all(&self) -> impl Iterator<Item = Result<Sample>> + '_ {
        self.manifest
            .entries
            .iter()
            .map(move |e| read_sample(&self.root, &self.manifest.rig, e))
    }
}

/// What [`generate`] renders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSpec {
    pub poses: u32,
    pub stages: u32,
    pub render: RenderConfig,
    pub axis: AxisConfig,
    pub fractions: [f64; 3],
    pub split_seed: u64,
}

impl Default for GenerateSpec {
    fn default() -> Self {
        Self {
            poses: 120,
            stages: crate::scene::STAGES_PER_REVOLUTION,
            render: RenderConfig::default(),
            axis: AxisConfig::default(),
            fractions: DEFAULT_FRACTIONS,
            split_seed: 0,
        }
    }
}

/// Renders `poses x stages` samples into `root`, splits them by pose and
/// writes the manifest. With fewer poses than requested splits the entries
/// stay untagged. `progress` is called after every sample.
pub fn generate(
    root: &Path,
    generator: &SceneGenerator,
    spec: &GenerateSpec,
    fingerprint: String,
    mut progress: impl FnMut(&SampleId),
) -> Result<Manifest> {
    if spec.stages == 0 || spec.stages > crate::scene::STAGES_PER_REVOLUTION {
        return Err(Error::InvalidArgument(format!(
            "stages must be in 1..={}",
            crate::scene::STAGES_PER_REVOLUTION
        )));
    }
    let mut manifest = Manifest::new(generator.config.rig, fingerprint);
    manifest.source = Some(SceneSource {
        seed: generator.seed,
        config: generator.config.clone(),
    });
    for pose in 0..spec.poses {
        let probe = generator.probe_pose(pose)?;
        for stage in 0..spec.stages {
            let scene = generator.scene_with_probe(probe, pose, stage);
            let sample = render_views(&scene, &spec.render).map_err(|e| Error::Validation {
                id: scene.id().stem(),
                reason: e.to_string(),
            })?;
            manifest.entries.push(write_sample(&sample, root, &spec.axis)?);
            progress(&sample.id);
        }
    }
    let wanted = spec.fractions.iter().filter(|&&f| f > 0.0).count();
    let manifest = if (spec.poses as usize) < wanted {
        eprintln!(
            "warning: {} poses cannot fill {wanted} pose-level splits; samples left untagged",
            spec.poses
        );
        manifest
    } else {
        split(&manifest, spec.fractions, spec.split_seed)?
    };
    manifest.save(root)?;
    Ok(manifest)
}
