//! Two-branch intersection regressor.
//!
//! An image branch (strided 3x3 convolutions, global average pool) and a
//! points branch (MLP over the flattened principal points) each produce a
//! feature vector; the concatenation goes through a small head that ends in
//! a sigmoid, so predictions are normalized image coordinates in (0, 1)².
//!
//! Everything is generic over [`Scalar`] so the same code trains in `f32`
//! and is gradient-checked in `f64`.

pub mod checkpoint;
pub mod layers;
pub mod optim;
pub mod train;

use std::fmt::Debug;
use std::sync::Arc;

use num_traits::{Float, FromPrimitive, NumAssign};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_seed;
use layers::{conv_backward, conv_forward, conv_out_size, dense_backward, dense_forward, ConvShape};

pub use optim::{lr_schedule, AdamConfig, AdamState};
pub use train::{infer, infer_views, train, Inference, ModelViews, TrainConfig, TrainOutcome, TrainingExample};

pub trait Scalar: Float + FromPrimitive + NumAssign + Debug + Default + Send + Sync + 'static {}
impl<T: Float + FromPrimitive + NumAssign + Debug + Default + Send + Sync + 'static> Scalar for T {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputMode {
    /// Left and right images stacked (6 channels) and both point sets.
    Stereo,
    /// Left image and left points only.
    Mono,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_mode: InputMode,
    /// Square input side in pixels.
    pub image_size: usize,
    /// Principal points per view.
    pub n_points: usize,
    pub conv_channels: Vec<usize>,
    pub points_hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
    /// When false the image branch contributes an all-zero feature vector.
    pub use_image_branch: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_mode: InputMode::Stereo,
            image_size: 128,
            n_points: 50,
            conv_channels: vec![8, 16, 32, 64, 64],
            points_hidden: vec![64, 64],
            head_hidden: vec![64],
            use_image_branch: true,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn views(&self) -> usize {
        match self.input_mode {
            InputMode::Stereo => 2,
            InputMode::Mono => 1,
        }
    }

    pub fn image_channels(&self) -> usize {
        3 * self.views()
    }

    pub fn total_points(&self) -> usize {
        self.n_points * self.views()
    }

    pub fn image_len(&self) -> usize {
        self.image_channels() * self.image_size * self.image_size
    }

    pub fn points_len(&self) -> usize {
        2 * self.total_points()
    }

    pub fn image_features(&self) -> usize {
        *self.conv_channels.last().unwrap_or(&0)
    }

    pub fn point_features(&self) -> usize {
        *self.points_hidden.last().unwrap_or(&0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("model config: {m}")));
        if self.image_size == 0 || self.n_points < 2 {
            return bad("image size must be positive and n_points >= 2");
        }
        if self.conv_channels.is_empty() || self.points_hidden.is_empty() {
            return bad("both branches need at least one layer");
        }
        if self.conv_channels.iter().chain(&self.points_hidden).chain(&self.head_hidden).any(|&c| c == 0) {
            return bad("layer widths must be positive");
        }
        Ok(())
    }
}

/// Name, shape and position of one parameter tensor in the flat vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LayerKind {
    Conv { c_in: usize, c_out: usize },
    Dense { n_in: usize, n_out: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerSpec {
    kind: LayerKind,
    weight: usize,
    bias: usize,
}

/// Parameter layout derived from a [`ModelConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub tensors: Vec<TensorSpec>,
    conv: Vec<LayerSpec>,
    points: Vec<LayerSpec>,
    head: Vec<LayerSpec>,
    total: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let mut tensors = Vec::new();
        let mut total = 0;
        let mut push = |name: String, shape: Vec<usize>| {
            let len = shape.iter().product();
            tensors.push(TensorSpec {
                name,
                shape,
                offset: total,
                len,
            });
            total += len;
            tensors.len() - 1
        };
        let mut conv = Vec::new();
        let mut c_in = cfg.image_channels();
        for (k, &c_out) in cfg.conv_channels.iter().enumerate() {
            let weight = push(format!("image.conv{k}.weight"), vec![c_out, c_in, 3, 3]);
            let bias = push(format!("image.conv{k}.bias"), vec![c_out]);
            conv.push(LayerSpec {
                kind: LayerKind::Conv { c_in, c_out },
                weight,
                bias,
            });
            c_in = c_out;
        }
        let dense = |prefix: &str, n_in: usize, widths: &[usize], push: &mut dyn FnMut(String, Vec<usize>) -> usize| {
            let mut n_in = n_in;
            let mut specs = Vec::new();
            for (k, &n_out) in widths.iter().enumerate() {
                let weight = push(format!("{prefix}.fc{k}.weight"), vec![n_out, n_in]);
                let bias = push(format!("{prefix}.fc{k}.bias"), vec![n_out]);
                specs.push(LayerSpec {
                    kind: LayerKind::Dense { n_in, n_out },
                    weight,
                    bias,
                });
                n_in = n_out;
            }
            specs
        };
        let points = dense("points", cfg.points_len(), &cfg.points_hidden, &mut push);
        let mut head_widths = cfg.head_hidden.clone();
        head_widths.push(2);
        let head = dense(
            "head",
            cfg.image_features() + cfg.point_features(),
            &head_widths,
            &mut push,
        );
        Self {
            tensors,
            conv,
            points,
            head,
            total,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

/// Which branch of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Image,
    Points,
}

/// All trainable weights as one flat vector plus its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub layout: Arc<Layout>,
    pub data: Vec<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// He-normal weights (the output layer scaled down), zero biases.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = Arc::new(Layout::new(config));
        let mut data = vec![T::zero(); layout.total()];
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "init", &[]));
        let last = layout.head.last().map(|l| l.weight);
        for (idx, spec) in layout.tensors.iter().enumerate() {
            if !spec.name.ends_with(".weight") {
                continue;
            }
            let fan_in: usize = spec.shape[1..].iter().product();
            let mut std = (2.0 / fan_in as f64).sqrt();
            if Some(idx) == last {
                std *= 0.1;
            }
            let normal = Normal::new(0.0, std).expect("finite std");
            for v in &mut data[spec.offset..spec.offset + spec.len] {
                *v = T::from_f64(normal.sample(&mut rng)).unwrap();
            }
        }
        Ok(Self {
            config: config.clone(),
            layout,
            data,
        })
    }

    pub fn from_flat(config: &ModelConfig, data: Vec<T>) -> Result<Self> {
        config.validate()?;
        let layout = Arc::new(Layout::new(config));
        if data.len() != layout.total() {
            return Err(Error::SizeMismatch(format!(
                "{} parameters for a layout of {}",
                data.len(),
                layout.total()
            )));
        }
        Ok(Self {
            config: config.clone(),
            layout,
            data,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            layout: Arc::clone(&self.layout),
            data: vec![T::zero(); self.data.len()],
        }
    }

    pub fn tensor(&self, index: usize) -> &[T] {
        let s = &self.layout.tensors[index];
        &self.data[s.offset..s.offset + s.len]
    }

    pub fn tensor_mut(&mut self, index: usize) -> &mut [T] {
        let s = &self.layout.tensors[index];
        &mut self.data[s.offset..s.offset + s.len]
    }

    pub fn named(&self, name: &str) -> Option<&[T]> {
        let s = self.layout.tensor(name)?;
        Some(&self.data[s.offset..s.offset + s.len])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Zeroes the first head layer's weights that read `branch`'s features.
    pub fn zero_fusion_weights(&mut self, branch: Branch) {
        let spec = self.layout.head[0];
        let LayerKind::Dense { n_in, n_out } = spec.kind else {
            unreachable!("head layers are dense")
        };
        let split = self.config.image_features();
        let cols = match branch {
            Branch::Image => 0..split,
            Branch::Points => split..n_in,
        };
        let w = self.tensor_mut(spec.weight);
        for o in 0..n_out {
            for c in cols.clone() {
                w[o * n_in + c] = T::zero();
            }
        }
    }

    /// Zeroes the output layer (prediction becomes (0.5, 0.5)).
    pub fn zero_output_layer(&mut self) {
        let spec = *self.layout.head.last().expect("head has an output layer");
        self.tensor_mut(spec.weight).fill(T::zero());
        self.tensor_mut(spec.bias).fill(T::zero());
    }
}

/// One model input: CHW image in [0, 1] and flattened normalized points.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput<T> {
    pub image: Vec<T>,
    pub points: Vec<T>,
}

/// Activations kept from the forward pass.
struct Trace<T> {
    /// conv outputs after ReLU, one per block
    conv: Vec<Vec<T>>,
    /// dense outputs after ReLU (points branch)
    points: Vec<Vec<T>>,
    features: Vec<T>,
    /// head outputs; hidden ones after ReLU, last one pre-sigmoid
    head: Vec<Vec<T>>,
    output: [T; 2],
}

fn check_input<T>(cfg: &ModelConfig, input: &ModelInput<T>) -> Result<()> {
    if input.image.len() != cfg.image_len() {
        return Err(Error::SizeMismatch(format!(
            "image tensor has {} values, model expects {}",
            input.image.len(),
            cfg.image_len()
        )));
    }
    if input.points.len() != cfg.points_len() {
        return Err(Error::SizeMismatch(format!(
            "points tensor has {} values, model expects {}",
            input.points.len(),
            cfg.points_len()
        )));
    }
    Ok(())
}

fn run_forward<T: Scalar>(params: &ModelParams<T>, input: &ModelInput<T>) -> Trace<T> {
    let cfg = &params.config;
    let layout = &params.layout;
    let mut conv_acts: Vec<Vec<T>> = Vec::with_capacity(layout.conv.len());
    let mut image_features = vec![T::zero(); cfg.image_features()];
    if cfg.use_image_branch {
        let mut size = cfg.image_size;
        for (k, spec) in layout.conv.iter().enumerate() {
            let LayerKind::Conv { c_in, c_out } = spec.kind else {
                unreachable!()
            };
            let shape = ConvShape {
                c_in,
                c_out,
                h: size,
                w: size,
            };
            let next = conv_out_size(size);
            let mut out = vec![T::zero(); c_out * next * next];
            let x: &[T] = if k == 0 { &input.image } else { &conv_acts[k - 1] };
            conv_forward(&shape, x, params.tensor(spec.weight), params.tensor(spec.bias), &mut out);
            layers::relu_in_place(&mut out);
            conv_acts.push(out);
            size = next;
        }
        let last = conv_acts.last().expect("at least one conv block");
        let plane = size * size;
        let inv = T::one() / T::from_usize(plane).unwrap();
        for (c, f) in image_features.iter_mut().enumerate() {
            *f = last[c * plane..(c + 1) * plane].iter().fold(T::zero(), |a, &b| a + b) * inv;
        }
    }

    let mut point_acts: Vec<Vec<T>> = Vec::with_capacity(layout.points.len());
    for (k, spec) in layout.points.iter().enumerate() {
        let LayerKind::Dense { n_in, n_out } = spec.kind else {
            unreachable!()
        };
        let mut out = vec![T::zero(); n_out];
        let x: &[T] = if k == 0 { &input.points } else { &point_acts[k - 1] };
        dense_forward(n_in, x, params.tensor(spec.weight), params.tensor(spec.bias), &mut out);
        layers::relu_in_place(&mut out);
        point_acts.push(out);
    }

    let mut features = image_features;
    features.extend_from_slice(point_acts.last().expect("points branch has layers"));

    let mut head_acts: Vec<Vec<T>> = Vec::with_capacity(layout.head.len());
    let n_head = layout.head.len();
    for (k, spec) in layout.head.iter().enumerate() {
        let LayerKind::Dense { n_in, n_out } = spec.kind else {
            unreachable!()
        };
        let mut out = vec![T::zero(); n_out];
        let x: &[T] = if k == 0 { &features } else { &head_acts[k - 1] };
        dense_forward(n_in, x, params.tensor(spec.weight), params.tensor(spec.bias), &mut out);
        if k + 1 < n_head {
            layers::relu_in_place(&mut out);
        }
        head_acts.push(out);
    }
    let logits = head_acts.last().expect("head has an output layer");
    let output = [layers::sigmoid(logits[0]), layers::sigmoid(logits[1])];
    Trace {
        conv: conv_acts,
        points: point_acts,
        features,
        head: head_acts,
        output,
    }
}

/// Reverse pass for one sample given dL/d(output); accumulates into `grads`.
fn run_backward<T: Scalar>(
    params: &ModelParams<T>,
    input: &ModelInput<T>,
    trace: &Trace<T>,
    grad_output: [T; 2],
    grads: &mut ModelParams<T>,
) {
    let cfg = &params.config;
    let layout = &params.layout;

    // through the sigmoid
    let mut g: Vec<T> = (0..2)
        .map(|i| grad_output[i] * trace.output[i] * (T::one() - trace.output[i]))
        .collect();

    for k in (0..layout.head.len()).rev() {
        let spec = layout.head[k];
        let LayerKind::Dense { n_in, .. } = spec.kind else {
            unreachable!()
        };
        let x: &[T] = if k == 0 { &trace.features } else { &trace.head[k - 1] };
        let mut gx = vec![T::zero(); n_in];
        let (gw, gb) = split_two(grads, spec.weight, spec.bias);
        dense_backward(n_in, x, params.tensor(spec.weight), &g, gw, gb, Some(&mut gx));
        if k > 0 {
            layers::relu_backward_in_place(&trace.head[k - 1], &mut gx);
        }
        g = gx;
    }
    let split = cfg.image_features();
    let g_image = &g[..split];
    let mut gp = g[split..].to_vec();

    for k in (0..layout.points.len()).rev() {
        let spec = layout.points[k];
        let LayerKind::Dense { n_in, .. } = spec.kind else {
            unreachable!()
        };
        layers::relu_backward_in_place(&trace.points[k], &mut gp);
        let x: &[T] = if k == 0 { &input.points } else { &trace.points[k - 1] };
        let (gw, gb) = split_two(grads, spec.weight, spec.bias);
        if k == 0 {
            dense_backward(n_in, x, params.tensor(spec.weight), &gp, gw, gb, None);
        } else {
            let mut gx = vec![T::zero(); n_in];
            dense_backward(n_in, x, params.tensor(spec.weight), &gp, gw, gb, Some(&mut gx));
            gp = gx;
        }
    }

    if !cfg.use_image_branch {
        return;
    }
    // global average pool
    let n_conv = layout.conv.len();
    let mut sizes = vec![cfg.image_size];
    for _ in 0..n_conv {
        sizes.push(conv_out_size(*sizes.last().unwrap()));
    }
    let last_size = sizes[n_conv];
    let plane = last_size * last_size;
    let inv = T::one() / T::from_usize(plane).unwrap();
    let mut gc: Vec<T> = g_image
        .iter()
        .flat_map(|&gf| std::iter::repeat_n(gf * inv, plane))
        .collect();

    for k in (0..n_conv).rev() {
        let spec = layout.conv[k];
        let LayerKind::Conv { c_in, c_out } = spec.kind else {
            unreachable!()
        };
        layers::relu_backward_in_place(&trace.conv[k], &mut gc);
        let shape = ConvShape {
            c_in,
            c_out,
            h: sizes[k],
            w: sizes[k],
        };
        let x: &[T] = if k == 0 { &input.image } else { &trace.conv[k - 1] };
        let (gw, gb) = split_two(grads, spec.weight, spec.bias);
        if k == 0 {
            conv_backward(&shape, x, params.tensor(spec.weight), &gc, gw, gb, None);
        } else {
            let mut gx = vec![T::zero(); x.len()];
            conv_backward(&shape, x, params.tensor(spec.weight), &gc, gw, gb, Some(&mut gx));
            gc = gx;
        }
    }
}

/// Disjoint mutable views of two tensors (weight precedes bias in the layout).
fn split_two<T: Scalar>(grads: &mut ModelParams<T>, weight: usize, bias: usize) -> (&mut [T], &mut [T]) {
    let w = grads.layout.tensors[weight].clone();
    let b = grads.layout.tensors[bias].clone();
    debug_assert!(w.offset + w.len <= b.offset);
    let (head, tail) = grads.data.split_at_mut(b.offset);
    (&mut head[w.offset..w.offset + w.len], &mut tail[..b.len])
}

/// Predicted normalized intersection for each input.
pub fn forward<T: Scalar>(params: &ModelParams<T>, inputs: &[ModelInput<T>]) -> Result<Vec<[T; 2]>> {
    inputs
        .iter()
        .map(|input| {
            check_input(&params.config, input)?;
            Ok(run_forward(params, input).output)
        })
        .collect()
}

/// Mean over the batch of the per-component squared error,
/// `mean_b ((du² + dv²) / 2)`.
pub fn loss_mse<T: Scalar>(preds: &[[T; 2]], targets: &[[T; 2]]) -> Result<T> {
    if preds.len() != targets.len() {
        return Err(Error::SizeMismatch(format!(
            "{} predictions vs {} targets",
            preds.len(),
            targets.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Empty("loss over an empty batch"));
    }
    let two = T::from_f64(2.0).unwrap();
    let sum = preds.iter().zip(targets).fold(T::zero(), |acc, (p, t)| {
        let du = p[0] - t[0];
        let dv = p[1] - t[1];
        acc + (du * du + dv * dv) / two
    });
    Ok(sum / T::from_usize(preds.len()).unwrap())
}

/// Loss of the batch and its exact gradient with respect to every parameter.
pub fn backward<T: Scalar>(
    params: &ModelParams<T>,
    inputs: &[ModelInput<T>],
    targets: &[[T; 2]],
) -> Result<(T, ModelParams<T>)> {
    if inputs.len() != targets.len() {
        return Err(Error::SizeMismatch(format!(
            "{} inputs vs {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    if inputs.is_empty() {
        return Err(Error::Empty("gradient of an empty batch"));
    }
    let mut grads = params.zeros_like();
    let n = T::from_usize(inputs.len()).unwrap();
    let mut preds = Vec::with_capacity(inputs.len());
    for (input, target) in inputs.iter().zip(targets) {
        check_input(&params.config, input)?;
        let trace = run_forward(params, input);
        // d/dp of (du² + dv²) / (2n)
        let g = [
            (trace.output[0] - target[0]) / n,
            (trace.output[1] - target[1]) / n,
        ];
        run_backward(params, input, &trace, g, &mut grads);
        preds.push(trace.output);
    }
    Ok((loss_mse(&preds, targets)?, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            image_size: 16,
            n_points: 4,
            conv_channels: vec![3, 4],
            points_hidden: vec![5],
            head_hidden: vec![6],
            ..Default::default()
        }
    }

    fn random_input(cfg: &ModelConfig, rng: &mut impl Rng) -> ModelInput<f64> {
        ModelInput {
            image: (0..cfg.image_len()).map(|_| rng.gen()).collect(),
            points: (0..cfg.points_len()).map(|_| rng.gen()).collect(),
        }
    }

    #[test]
    fn layout_counts() {
        let cfg = ModelConfig::default();
        let layout = Layout::new(&cfg);
        let conv: usize = [(6, 8), (8, 16), (16, 32), (32, 64), (64, 64)]
            .iter()
            .map(|(i, o)| i * o * 9 + o)
            .sum();
        let dense = (200 * 64 + 64) + (64 * 64 + 64) + (128 * 64 + 64) + (64 * 2 + 2);
        assert_eq!(layout.total(), conv + dense);
        assert_eq!(layout.tensor("head.fc0.weight").unwrap().shape, vec![64, 128]);
        let mono = ModelConfig {
            input_mode: InputMode::Mono,
            ..Default::default()
        };
        assert_eq!(mono.image_channels(), 3);
        assert_eq!(mono.points_len(), 100);
        assert_eq!(cfg.image_channels(), 6);
        assert_eq!(cfg.total_points(), 100);
    }

    #[test]
    fn zero_output_layer_predicts_center() {
        let cfg = tiny_config();
        let mut params = ModelParams::<f64>::init(&cfg).unwrap();
        params.zero_output_layer();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inputs: Vec<_> = (0..3).map(|_| random_input(&cfg, &mut rng)).collect();
        for p in forward(&params, &inputs).unwrap() {
            assert_eq!(p, [0.5, 0.5]);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let cfg = tiny_config();
        let params = ModelParams::<f64>::init(&cfg).unwrap();
        let bad = ModelInput {
            image: vec![0.0; 3],
            points: vec![0.0; cfg.points_len()],
        };
        assert!(matches!(forward(&params, &[bad]), Err(Error::SizeMismatch(_))));
    }

    #[test]
    fn loss_conventions() {
        assert_eq!(loss_mse(&[[0.3, 0.4]], &[[0.3, 0.4]]).unwrap(), 0.0);
        assert_eq!(loss_mse(&[[0.0, 0.0]], &[[1.0, 1.0]]).unwrap(), 1.0);
        assert!(loss_mse::<f64>(&[], &[]).is_err());
    }

    #[test]
    fn zeroed_points_fusion_kills_points_gradient() {
        let cfg = tiny_config();
        let mut params = ModelParams::<f64>::init(&cfg).unwrap();
        params.zero_fusion_weights(Branch::Points);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inputs: Vec<_> = (0..2).map(|_| random_input(&cfg, &mut rng)).collect();
        let (_, grads) = backward(&params, &inputs, &[[0.1, 0.9], [0.7, 0.2]]).unwrap();
        for spec in grads.layout.tensors.iter().filter(|t| t.name.starts_with("points.")) {
            assert!(grads.data[spec.offset..spec.offset + spec.len].iter().all(|&g| g == 0.0));
        }
        let conv0 = grads.named("image.conv0.weight").unwrap();
        assert!(conv0.iter().any(|&g| g != 0.0));
    }
}
