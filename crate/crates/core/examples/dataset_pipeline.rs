//! The batch workflow through the command-line entry point: generate a small
//! dataset, train briefly, evaluate the checkpoint and run inference. Every
//! step writes its resolved configuration next to its outputs.
//!
//! cargo run --release --example dataset_pipeline -- [work_dir]

use std::path::Path;

use sensing_area::cli;
use sensing_area::dataset::{Dataset, Split};

fn step(args: &[&str]) -> sensing_area::Result<()> {
    println!("$ sensing-area {}", args.join(" "));
    let code = cli::run(std::iter::once("sensing-area").chain(args.iter().copied()));
    if code == 0 {
        Ok(())
    } else {
        Err(sensing_area::Error::InvalidArgument(format!("{} exited with {code}", args[0])))
    }
}

pub fn run_example(work: &Path, poses: u32, epochs: usize) -> sensing_area::Result<Dataset> {
    let p = |rel: &str| work.join(rel).to_string_lossy().into_owned();
    let (data, train, eval, infer) = (p("data"), p("train"), p("eval"), p("infer"));
    let ckpt = p("train/checkpoint.bin");
    step(&[
        "generate", "--out", &data, "--poses", &poses.to_string(), "--stages", "2", "--seed", "1",
        "--scale", "0.25", "--with-depth",
    ])?;
    let dataset = Dataset::open(&data)?;
    println!(
        "{} samples: train {}, val {}, test {}",
        dataset.manifest.entries.len(),
        dataset.manifest.count(Split::Train),
        dataset.manifest.count(Split::Val),
        dataset.manifest.count(Split::Test)
    );
    step(&[
        "train", "--data", &data, "--out", &train, "--epochs", &epochs.to_string(), "--image-size", "32",
    ])?;
    step(&["eval", "--data", &data, "--out", &eval, "--predictor", "model", "--checkpoint", &ckpt])?;
    step(&["eval", "--data", &data, "--out", &p("eval_oracle"), "--predictor", "oracle", "--no-overlays"])?;
    step(&["infer", "--checkpoint", &ckpt, "--input", &data, "--out", &infer])?;
    Ok(dataset)
}

#[allow(dead_code)]
fn main() -> sensing_area::Result<()> {
    let work = std::env::args().nth(1).unwrap_or_else(|| "runs/pipeline".into());
    run_example(Path::new(&work), 12, 5).map(|_| ())
}
