//! Independent oracles shared by the integration tests. Nothing here calls
//! the library routine it is checking.
#![allow(dead_code)]

use nalgebra::{Point2, Point3, Vector3};
use rand::Rng;
use sensing_area::geometry::{Heightfield, Ray3};

/// Brute-force first crossing of `ray` with `surface`: marches from t = 0 at
/// `step` until the ray is below the deepest point of the surface, then
/// bisects to machine precision.
pub fn march_oracle<S: Heightfield>(ray: &Ray3, surface: &S, step: f64) -> Option<Point3<f64>> {
    let [_, z_max] = surface.height_range();
    let gap = |t: f64| {
        let p = ray.at(t);
        surface.height_at(p.x, p.y).map(|h| p.z - h)
    };
    if ray.direction.z <= 0.0 {
        return None;
    }
    let t_end = (z_max + 1e-6 - ray.origin.z) / ray.direction.z;
    let mut t0 = 0.0;
    let mut g0 = gap(0.0);
    let mut k = 1u64;
    loop {
        let t1 = (k as f64 * step).min(t_end);
        let g1 = gap(t1);
        if let (Some(a), Some(b)) = (g0, g1) {
            if a < 0.0 && b >= 0.0 {
                let (mut lo, mut hi) = (t0, t1);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    match gap(mid) {
                        Some(g) if g < 0.0 => lo = mid,
                        _ => hi = mid,
                    }
                }
                return Some(ray.at(0.5 * (lo + hi)));
            }
        }
        if t1 >= t_end {
            return None;
        }
        t0 = t1;
        g0 = g1;
        k += 1;
    }
}

/// Ray from near the camera toward a random point of the surface footprint.
pub fn random_ray(rng: &mut impl Rng, domain: [f64; 4]) -> Ray3 {
    let origin = Point3::new(
        rng.gen_range(-0.03..0.03),
        rng.gen_range(-0.03..0.03),
        rng.gen_range(0.0..0.1),
    );
    let [x0, x1, y0, y1] = domain;
    // overshoot the footprint a little so some rays leave it
    let target = Point3::new(
        rng.gen_range(1.1 * x0..1.1 * x1),
        rng.gen_range(1.1 * y0..1.1 * y1),
        0.3,
    );
    Ray3::new(origin, target - origin)
}

/// Direction maximizing the projected variance of `points`, found by a
/// 3600-step angle scan followed by golden-section refinement.
pub fn max_variance_direction(points: &[Point2<f64>]) -> Vector3<f64> {
    let n = points.len() as f64;
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + p.x / n, b + p.y / n));
    let var = |theta: f64| {
        let (s, c) = theta.sin_cos();
        points
            .iter()
            .map(|p| {
                let d = (p.x - mx) * c + (p.y - my) * s;
                d * d
            })
            .sum::<f64>()
    };
    let steps = 3600;
    let h = std::f64::consts::PI / steps as f64;
    let best = (0..steps)
        .map(|i| i as f64 * h)
        .max_by(|a, b| var(*a).total_cmp(&var(*b)))
        .unwrap();
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (best - h, best + h);
    for _ in 0..100 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if var(a) > var(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let theta = 0.5 * (lo + hi);
    Vector3::new(theta.cos(), theta.sin(), 0.0)
}

/// Straightforward loop versions of the evaluation statistics.
pub fn loop_mean(values: &[f64]) -> f64 {
    let mut s = 0.0;
    for v in values {
        s += v;
    }
    s / values.len() as f64
}

pub fn loop_std(values: &[f64]) -> f64 {
    let m = loop_mean(values);
    let mut s = 0.0;
    for v in values {
        s += (v - m) * (v - m);
    }
    (s / values.len() as f64).sqrt()
}

pub fn loop_median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    // insertion sort
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && v[j - 1] > v[j] {
            v.swap(j - 1, j);
            j -= 1;
        }
    }
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn loop_r2(preds: &[Point2<f64>], gts: &[Point2<f64>]) -> f64 {
    let n = gts.len() as f64;
    let mut mx = 0.0;
    let mut my = 0.0;
    for g in gts {
        mx += g.x / n;
        my += g.y / n;
    }
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (p, g) in preds.iter().zip(gts) {
        ss_res += (p.x - g.x).powi(2) + (p.y - g.y).powi(2);
        ss_tot += (g.x - mx).powi(2) + (g.y - my).powi(2);
    }
    1.0 - ss_res / ss_tot
}

/// Largest element-wise relative error between the analytic gradient and
/// central differences with step `h`, per parameter tensor. At most
/// `per_tensor` evenly spread elements of each tensor are probed.
pub fn gradient_check(
    params: &sensing_area::model::ModelParams<f64>,
    inputs: &[sensing_area::model::ModelInput<f64>],
    targets: &[[f64; 2]],
    h: f64,
    per_tensor: usize,
) -> Vec<(String, f64)> {
    use sensing_area::model::{backward, forward, loss_mse};
    let (_, grads) = backward(params, inputs, targets).unwrap();
    let loss_at = |p: &sensing_area::model::ModelParams<f64>| {
        loss_mse(&forward(p, inputs).unwrap(), targets).unwrap()
    };
    let mut probe = params.clone();
    params
        .layout
        .tensors
        .iter()
        .map(|spec| {
            let mut worst: f64 = 0.0;
            let stride = spec.len.div_ceil(per_tensor).max(1);
            for i in (spec.offset..spec.offset + spec.len).step_by(stride) {
                let orig = probe.data[i];
                probe.data[i] = orig + h;
                let up = loss_at(&probe);
                probe.data[i] = orig - h;
                let down = loss_at(&probe);
                probe.data[i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads.data[i];
                let scale = analytic.abs().max(numeric.abs()).max(1e-8);
                let err = (analytic - numeric).abs() / scale;
                if err > 1e-4 && std::env::var_os("GRADCHECK_DEBUG").is_some() {
                    eprintln!("{} [{}]: analytic {analytic:e} numeric {numeric:e}", spec.name, i - spec.offset);
                }
                worst = worst.max(err);
            }
            (spec.name.clone(), worst)
        })
        .collect()
}

/// Runs the command-line binary and returns (exit code, stdout, stderr).
pub fn run_cli(args: &[&str]) -> (i32, String, String) {
    run_cli_in(std::path::Path::new("."), args)
}

/// [`run_cli`] with `cwd` as the working directory.
pub fn run_cli_in(cwd: &std::path::Path, args: &[&str]) -> (i32, String, String) {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_sensing-area"))
        .current_dir(cwd)
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// Like [`run_cli`] but panics with the captured output on a nonzero exit.
pub fn cli_ok(args: &[&str]) -> String {
    let (code, stdout, stderr) = run_cli(args);
    assert_eq!(code, 0, "{args:?}\nstdout:\n{stdout}\nstderr:\n{stderr}");
    stdout
}

/// Relative path to file contents for every file under `root`.
pub fn tree_bytes(root: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Small generate, train and eval run under `dir` with fixed seeds.
pub fn small_pipeline(dir: &std::path::Path) {
    let s = |p: &str| dir.join(p).to_string_lossy().into_owned();
    cli_ok(&[
        "generate", "--out", &s("data"), "--poses", "6", "--stages", "2", "--seed", "3",
        "--scale", "0.1", "--with-depth",
    ]);
    cli_ok(&[
        "train", "--data", &s("data"), "--out", &s("train"), "--epochs", "2", "--batch-size", "4",
        "--image-size", "16", "--seed", "5",
    ]);
    cli_ok(&[
        "eval", "--data", &s("data"), "--out", &s("eval"), "--predictor", "model",
        "--checkpoint", &s("train/checkpoint.bin"), "--split", "test",
    ]);
}
