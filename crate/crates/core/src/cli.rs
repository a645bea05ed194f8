//! Batch entry points: `generate`, `train`, `eval` and `infer`.
//!
//! Every subcommand reads an optional TOML file (`--config`), applies
//! command-line overrides, writes the resolved settings to
//! `resolved_config.toml` in its output directory and exits with 0 on
//! success, 1 on validation failures and 2 on I/O failures.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use image::{GrayImage, RgbImage};
use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use crate::axis::AxisConfig;
use crate::dataset::{self, Dataset, GenerateSpec, Split, DEFAULT_FRACTIONS};
use crate::error::{Error, Result};
use crate::eval::{
    draw_overlay, evaluate, render_report, report_csv, ConstantPredictor, EvalOptions, ModelPredictor,
    OraclePredictor, Predictor, SubtractPredictor,
};
use crate::groundtruth::SegmentConfig;
use crate::model::checkpoint::{history_csv, Checkpoint};
use crate::model::train::Trainer;
use crate::model::{infer_views, ModelConfig, ModelViews, TrainConfig, TrainingExample};
use crate::scene::{RenderConfig, SceneConfig, SceneGenerator};

/// Output root used when neither `--out` nor the config file names one.
pub const OUT_ROOT_ENV: &str = "SENSING_AREA_OUT";
pub const RESOLVED_CONFIG: &str = "resolved_config.toml";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
/// Inference rate reported for the original GPU implementation; printed for
/// comparison only.
pub const REFERENCE_FPS: f64 = 50.0;

#[derive(Debug, Parser)]
#[command(name = "sensing-area", version, about = "Simulate, train and evaluate probe axis-surface intersection regression")]
pub struct Cli {
    /// TOML file with [generate], [train], [eval] and [infer] tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render poses x stages samples and write images plus a manifest.
    Generate(GenerateArgs),
    /// Train the regressor on a generated dataset.
    Train(TrainArgs),
    /// Score a predictor on one split and write a table, CSV and overlays.
    Eval(EvalArgs),
    /// Predict intersection pixels for one sample or a directory of samples.
    Infer(InferArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output dataset directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of probe poses.
    #[arg(long)]
    pub poses: Option<u32>,
    /// Rotation-stage positions per pose (1 to 10).
    #[arg(long)]
    pub stages: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write depth maps.
    #[arg(long)]
    pub with_depth: bool,
    /// Fraction of depth pixels to withhold.
    #[arg(long)]
    pub invalid_depth: Option<f64>,
    /// Image resolution relative to 640x480.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Seed of the pose-level split shuffle.
    #[arg(long)]
    pub split_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory written by `generate`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for the checkpoint and history.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model input side in pixels.
    #[arg(long)]
    pub image_size: Option<usize>,
    /// Feed only the left view.
    #[arg(long)]
    pub mono: bool,
    /// Disable the image branch (axis points only).
    #[arg(long)]
    pub points_only: bool,
    #[arg(long)]
    pub train_split: Option<String>,
    #[arg(long)]
    pub val_split: Option<String>,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Stop after this many epochs in this invocation.
    #[arg(long)]
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    /// Projection of the true axis/surface intersection.
    Oracle,
    /// Laser on/off subtraction and blob centroid.
    Subtract,
    /// A trained checkpoint.
    Model,
    /// The image centre.
    Center,
    /// The mean training-split ground truth.
    Mean,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub predictor: Option<PredictorKind>,
    /// Required for `--predictor model`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
    /// Skip the per-frame overlay images.
    #[arg(long)]
    pub no_overlays: bool,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// A `<id>_left_standard.png` file, or a dataset (or `images`) directory.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// The optional configuration file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    /// Default seed for every subcommand.
    pub seed: Option<u64>,
    /// Parent of default output directories.
    pub out_root: Option<PathBuf>,
    pub generate: GenerateConfig,
    pub train: TrainRunConfig,
    pub eval: EvalRunConfig,
    pub infer: InferRunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub poses: u32,
    pub stages: u32,
    pub scale: f64,
    pub split_seed: u64,
    pub fractions: [f64; 3],
    pub scene: SceneConfig,
    pub render: RenderConfig,
    pub axis: AxisConfig,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        let spec = GenerateSpec::default();
        Self {
            out: None,
            seed: None,
            poses: spec.poses,
            stages: spec.stages,
            scale: 1.0,
            split_seed: 0,
            fractions: DEFAULT_FRACTIONS,
            scene: SceneConfig::default(),
            render: spec.render,
            axis: spec.axis,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub train_split: String,
    pub val_split: String,
    pub resume: Option<PathBuf>,
    pub stop_after: Option<usize>,
    pub model: ModelConfig,
    pub optim: TrainConfig,
    pub axis: AxisConfig,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            data: None,
            out: None,
            seed: None,
            train_split: "train".into(),
            val_split: "val".into(),
            resume: None,
            stop_after: None,
            model: ModelConfig::default(),
            optim: TrainConfig::default(),
            axis: AxisConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalRunConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub predictor: PredictorKind,
    pub checkpoint: Option<PathBuf>,
    pub split: String,
    pub overlays: bool,
    pub depth_window: u32,
    pub segment: SegmentConfig,
    pub axis: AxisConfig,
}

impl Default for EvalRunConfig {
    fn default() -> Self {
        Self {
            data: None,
            out: None,
            predictor: PredictorKind::Oracle,
            checkpoint: None,
            split: "test".into(),
            overlays: true,
            depth_window: 5,
            segment: SegmentConfig::default(),
            axis: AxisConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferRunConfig {
    pub checkpoint: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub axis: AxisConfig,
}

/// Parses arguments, runs the subcommand and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_io() {
        2
    } else {
        1
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => load_file_config(path)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Generate(a) => cmd_generate(&resolve_generate(&file, a)?),
        Command::Train(a) => cmd_train(&resolve_train(&file, a)?),
        Command::Eval(a) => cmd_eval(&resolve_eval(&file, a)?),
        Command::Infer(a) => cmd_infer(&resolve_infer(&file, a)?),
    }
}

pub fn load_file_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn default_out(file: &FileConfig, name: &str) -> PathBuf {
    let root = file
        .out_root
        .clone()
        .or_else(|| std::env::var_os(OUT_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    root.join(name)
}

fn require(path: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    path.ok_or_else(|| Error::InvalidArgument(format!("{what} is required")))
}

pub fn resolve_generate(file: &FileConfig, a: GenerateArgs) -> Result<GenerateConfig> {
    let mut c = file.generate.clone();
    c.out = Some(a.out.or(c.out).unwrap_or_else(|| default_out(file, "dataset")));
    c.seed = Some(a.seed.or(c.seed).or(file.seed).unwrap_or(0));
    if let Some(v) = a.poses {
        c.poses = v;
    }
    if let Some(v) = a.stages {
        c.stages = v;
    }
    if let Some(v) = a.scale {
        c.scale = v;
    }
    if let Some(v) = a.split_seed {
        c.split_seed = v;
    }
    if a.with_depth {
        c.render.with_depth = true;
    }
    if let Some(v) = a.invalid_depth {
        c.render.invalid_depth_fraction = v;
    }
    if !(c.scale > 0.0) || c.poses == 0 {
        return Err(Error::InvalidArgument("scale and poses must be positive".into()));
    }
    if !(0.0..1.0).contains(&c.render.invalid_depth_fraction) {
        return Err(Error::InvalidArgument("invalid depth fraction must be in [0, 1)".into()));
    }
    Ok(c)
}

pub fn resolve_train(file: &FileConfig, a: TrainArgs) -> Result<TrainRunConfig> {
    let mut c = file.train.clone();
    c.data = Some(require(a.data.or(c.data), "--data")?);
    c.out = Some(a.out.or(c.out).unwrap_or_else(|| default_out(file, "train")));
    let seed = a.seed.or(c.seed).or(file.seed).unwrap_or(0);
    c.seed = Some(seed);
    c.optim.seed = seed;
    c.model.seed = seed;
    if let Some(v) = a.epochs {
        c.optim.epochs = v;
    }
    if let Some(v) = a.batch_size {
        c.optim.batch_size = v;
    }
    if let Some(v) = a.lr {
        c.optim.base_lr = v;
    }
    if let Some(v) = a.image_size {
        c.model.image_size = v;
    }
    if a.mono {
        c.model.input_mode = crate::model::InputMode::Mono;
    }
    if a.points_only {
        c.model.use_image_branch = false;
    }
    if let Some(v) = a.train_split {
        c.train_split = v;
    }
    if let Some(v) = a.val_split {
        c.val_split = v;
    }
    if a.resume.is_some() {
        c.resume = a.resume;
    }
    if a.stop_after.is_some() {
        c.stop_after = a.stop_after;
    }
    c.train_split.parse::<Split>()?;
    c.val_split.parse::<Split>()?;
    c.model.validate()?;
    c.optim.validate()?;
    Ok(c)
}

pub fn resolve_eval(file: &FileConfig, a: EvalArgs) -> Result<EvalRunConfig> {
    let mut c = file.eval.clone();
    c.data = Some(require(a.data.or(c.data), "--data")?);
    c.out = Some(a.out.or(c.out).unwrap_or_else(|| default_out(file, "eval")));
    if let Some(v) = a.predictor {
        c.predictor = v;
    }
    if a.checkpoint.is_some() {
        c.checkpoint = a.checkpoint;
    }
    if let Some(v) = a.split {
        c.split = v;
    }
    if a.no_overlays {
        c.overlays = false;
    }
    c.split.parse::<Split>()?;
    if c.predictor == PredictorKind::Model && c.checkpoint.is_none() {
        return Err(Error::InvalidArgument("--predictor model needs --checkpoint".into()));
    }
    Ok(c)
}

pub fn resolve_infer(file: &FileConfig, a: InferArgs) -> Result<InferRunConfig> {
    let mut c = file.infer.clone();
    c.checkpoint = Some(require(a.checkpoint.or(c.checkpoint), "--checkpoint")?);
    c.input = Some(require(a.input.or(c.input), "--input")?);
    c.out = Some(a.out.or(c.out).unwrap_or_else(|| default_out(file, "infer")));
    Ok(c)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `config` as `resolved_config.toml` into `dir`.
pub fn write_snapshot<T: Serialize>(dir: &Path, config: &T) -> Result<()> {
    create_dir(dir)?;
    let text = toml::to_string_pretty(config).map_err(|e| Error::InvalidArgument(format!("config snapshot: {e}")))?;
    write_text(&dir.join(RESOLVED_CONFIG), &text)
}

/// Hash of a resolved configuration with its paths removed, so identical
/// settings fingerprint identically wherever they run.
fn config_fingerprint<T: Serialize + Clone>(config: &T, strip: impl FnOnce(&mut T)) -> Result<String> {
    let mut c = config.clone();
    strip(&mut c);
    dataset::fingerprint(&c)
}

pub fn cmd_generate(c: &GenerateConfig) -> Result<()> {
    let out = c.out.clone().expect("resolved");
    write_snapshot(&out, c)?;
    let mut scene = c.scene.clone();
    scene.rig = scene.rig.scaled(c.scale);
    let generator = SceneGenerator::new(c.seed.expect("resolved"), scene)?;
    let spec = GenerateSpec {
        poses: c.poses,
        stages: c.stages,
        render: c.render.clone(),
        axis: c.axis.clone(),
        fractions: c.fractions,
        split_seed: c.split_seed,
    };
    let fp = config_fingerprint(c, |c| c.out = None)?;
    let total = c.poses * c.stages;
    let mut done = 0;
    let manifest = dataset::generate(&out, &generator, &spec, fp, |id| {
        done += 1;
        if done % 50 == 0 || done == total {
            eprintln!("generated {done}/{total} (last {id})");
        }
    })?;
    println!(
        "wrote {} samples to {} (train {}, val {}, test {})",
        manifest.entries.len(),
        out.display(),
        manifest.count(Split::Train),
        manifest.count(Split::Val),
        manifest.count(Split::Test)
    );
    Ok(())
}

fn load_examples(data: &Dataset, split: Split, model: &ModelConfig, axis: &AxisConfig) -> Result<Vec<TrainingExample>> {
    data.read_split(split)
        .map(|s| TrainingExample::from_sample(&s?, model, axis))
        .collect()
}

pub fn cmd_train(c: &TrainRunConfig) -> Result<()> {
    let out = c.out.clone().expect("resolved");
    write_snapshot(&out, c)?;
    let data = Dataset::open(c.data.clone().expect("resolved"))?;
    let train_split: Split = c.train_split.parse()?;
    let val_split: Split = c.val_split.parse()?;

    let resumed = c.resume.as_deref().map(Checkpoint::load).transpose()?;
    let (model_cfg, train_cfg) = match &resumed {
        Some(ck) => (ck.model_config.clone(), ck.train_config.clone()),
        None => (c.model.clone(), c.optim.clone()),
    };
    let train = load_examples(&data, train_split, &model_cfg, &c.axis)?;
    let val = load_examples(&data, val_split, &model_cfg, &c.axis)?;
    eprintln!("training on {} samples, validating on {}", train.len(), val.len());
    let mut trainer = match resumed {
        Some(ck) => Trainer::resume(&train_cfg, &train, &val, ck.state)?,
        None => Trainer::new(&model_cfg, &train_cfg, &train, &val)?,
    };
    let ckpt_path = out.join(CHECKPOINT_FILE);
    let mut budget = c.stop_after.unwrap_or(usize::MAX);
    while !trainer.finished() && budget > 0 {
        let rec = trainer.run_epoch()?.clone();
        eprintln!(
            "epoch {:4}  lr {:.2e}  loss {:.6}  val {:.3} px",
            rec.epoch, rec.lr, rec.train_loss, rec.val_mean_px_error
        );
        budget -= 1;
        let ck = Checkpoint {
            model_config: model_cfg.clone(),
            train_config: train_cfg.clone(),
            state: trainer.state.clone(),
        };
        ck.save(&ckpt_path)?;
        write_text(&out.join("history.csv"), &history_csv(&trainer.state.history))?;
    }
    println!(
        "epoch {}/{}; best validation error {:.3} px; checkpoint {}",
        trainer.state.epoch,
        train_cfg.epochs,
        trainer.state.best_val,
        ckpt_path.display()
    );
    Ok(())
}

#[derive(Serialize, Clone)]
struct EvalFingerprint<'a> {
    dataset: &'a str,
    predictor: PredictorKind,
    split: &'a str,
    depth_window: u32,
    segment: &'a SegmentConfig,
    axis: &'a AxisConfig,
    checkpoint: Option<String>,
}

pub fn cmd_eval(c: &EvalRunConfig) -> Result<()> {
    let out = c.out.clone().expect("resolved");
    write_snapshot(&out, c)?;
    let data = Dataset::open(c.data.clone().expect("resolved"))?;
    let split: Split = c.split.parse()?;
    if data.entries(split).next().is_none() {
        return Err(Error::InvalidArgument(format!("split {split} is empty")));
    }
    let checkpoint_hash = match &c.checkpoint {
        Some(p) if c.predictor == PredictorKind::Model => {
            let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
            Some(dataset::fingerprint(&bytes)?)
        }
        _ => None,
    };
    let mut predictor: Box<dyn Predictor> = match c.predictor {
        PredictorKind::Oracle => {
            let source = data.manifest.source.as_ref().ok_or_else(|| {
                Error::InvalidArgument("dataset manifest lacks scene settings for the oracle".into())
            })?;
            Box::new(OraclePredictor::new(source.generator()?))
        }
        PredictorKind::Subtract => Box::new(SubtractPredictor {
            config: c.segment.clone(),
        }),
        PredictorKind::Center => Box::new(ConstantPredictor::center(&data.manifest.rig)),
        PredictorKind::Mean => {
            let gts: Vec<Point2<f64>> = data.entries(Split::Train).map(|e| e.gt_px[0]).collect();
            Box::new(ConstantPredictor::mean(&gts)?)
        }
        PredictorKind::Model => {
            let path = c.checkpoint.as_deref().expect("resolved");
            Box::new(ModelPredictor {
                label: "model".into(),
                params: Checkpoint::load(path)?.state.best,
                axis: c.axis.clone(),
            })
        }
    };
    let options = EvalOptions {
        rig: data.manifest.rig,
        depth_window: c.depth_window,
        fingerprint: dataset::fingerprint(&EvalFingerprint {
            dataset: &data.manifest.fingerprint,
            predictor: c.predictor,
            split: &c.split,
            depth_window: c.depth_window,
            segment: &c.segment,
            axis: &c.axis,
            checkpoint: checkpoint_hash,
        })?,
        overlay_dir: c.overlays.then(|| out.join("overlays")),
        ..Default::default()
    };
    let evaluation = evaluate(predictor.as_mut(), data.read_split(split), &options)?;
    let reports = [evaluation.report];
    let table = render_report(&reports);
    write_text(&out.join("report.txt"), &table)?;
    write_text(&out.join("report.csv"), &report_csv(&reports))?;
    let mut frames = String::from("id,gt_u,gt_v,pred_u,pred_v,error_px,error_mm\n");
    for f in &evaluation.frames {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.6}"));
        frames.push_str(&format!(
            "{},{:.6},{:.6},{},{},{},{}\n",
            f.id,
            f.gt.x,
            f.gt.y,
            opt(f.pred.map(|p| p.x)),
            opt(f.pred.map(|p| p.y)),
            opt(f.error_px),
            opt(f.error_3d.and_then(|e| e.millimeters()))
        ));
    }
    write_text(&out.join("frames.csv"), &frames)?;
    print!("{table}");
    Ok(())
}

/// One `infer` result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferRecord {
    pub id: String,
    pub u: f64,
    pub v: f64,
    pub ms: f64,
}

const LEFT_SUFFIX: &str = "_left_standard.png";

/// Finds `<id>_left_standard.png` inputs: the file itself, or every match in
/// the directory or its `images` subdirectory, sorted by name.
pub fn infer_inputs(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let dir = if input.join("images").is_dir() {
        input.join("images")
    } else {
        input.to_path_buf()
    };
    let mut found = Vec::new();
    for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
        let path = entry.map_err(|e| Error::io(&dir, e))?.path();
        if path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(LEFT_SUFFIX)) {
            found.push(path);
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(Error::InvalidArgument(format!("no *{LEFT_SUFFIX} files under {}", dir.display())));
    }
    Ok(found)
}

fn open_rgb(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path).map_err(|e| Error::image(path, e))?.into_rgb8())
}

fn open_gray(path: &Path) -> Result<GrayImage> {
    Ok(image::open(path).map_err(|e| Error::image(path, e))?.into_luma8())
}

/// Runs the model on one left standard image, picking up the right image
/// and both masks by the dataset naming convention.
pub fn infer_file(left: &Path, params: &crate::model::ModelParams<f32>, axis: &AxisConfig) -> Result<(InferRecord, RgbImage, Point2<f64>)> {
    let name = left.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let id = name
        .strip_suffix(LEFT_SUFFIX)
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a *{LEFT_SUFFIX} file", left.display())))?;
    let images_dir = left.parent().unwrap_or(Path::new("."));
    let masks_dir = images_dir.parent().unwrap_or(Path::new(".")).join("masks");
    let standard = [open_rgb(left)?, open_rgb(&images_dir.join(format!("{id}_right_standard.png")))?];
    let masks = [
        open_gray(&masks_dir.join(format!("{id}_left.png")))?,
        open_gray(&masks_dir.join(format!("{id}_right.png")))?,
    ];
    let views = ModelViews {
        standard: [&standard[0], &standard[1]],
        masks: [&masks[0], &masks[1]],
    };
    let inference = infer_views(&views, id, params, axis)?;
    let record = InferRecord {
        id: id.to_string(),
        u: inference.pixel.x,
        v: inference.pixel.y,
        ms: inference.elapsed.as_secs_f64() * 1000.0,
    };
    let [left_img, _] = standard;
    Ok((record, left_img, inference.pixel))
}

pub fn cmd_infer(c: &InferRunConfig) -> Result<()> {
    let out = c.out.clone().expect("resolved");
    write_snapshot(&out, c)?;
    let params = Checkpoint::load(c.checkpoint.as_deref().expect("resolved"))?.state.best;
    let inputs = infer_inputs(c.input.as_deref().expect("resolved"))?;
    let mut lines = String::new();
    let mut total = Duration::ZERO;
    for path in &inputs {
        let (record, left, pixel) = infer_file(path, &params, &c.axis)?;
        total += Duration::from_secs_f64(record.ms / 1000.0);
        let overlay = out.join(format!("{}_overlay.png", record.id));
        draw_overlay(&left, Some(pixel), None)
            .save(&overlay)
            .map_err(|e| Error::image(&overlay, e))?;
        let line = serde_json::to_string(&record).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        println!("{line}");
        lines.push_str(&line);
        lines.push('\n');
    }
    write_text(&out.join("predictions.jsonl"), &lines)?;
    let fps = inputs.len() as f64 / total.as_secs_f64().max(f64::MIN_POSITIVE);
    println!(
        "throughput: {fps:.1} frames/s over {} frames (reference: {REFERENCE_FPS:.0} frames/s on a GPU)",
        inputs.len()
    );
    Ok(())
}
