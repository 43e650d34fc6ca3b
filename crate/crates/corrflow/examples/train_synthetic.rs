//! Trains a tiny correspondence encoder on procedurally translated texture
//! crops and prints the loss trajectory. Artifacts (checkpoints, metrics
//! log) land in the output directory, default
//! `target/example-out/train_synthetic`.

use std::path::PathBuf;

use corrflow::config::Config;
use corrflow::datapipe::synthetic::value_noise_texture;
use corrflow::error::Result;
use corrflow::training::{fit, SyntheticPairSource};

fn main() -> Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "target/example-out/train_synthetic".into())
        .into();

    let mut cfg = Config::default();
    cfg.encoder.channels = 8;
    cfg.encoder.blocks = 1;
    cfg.semantic.channels = 16;
    // 16px tiles over a 32px crop: 4 segments of 2x2 feature cells, so the
    // distance term has within-region pairs to work with
    cfg.segmenter.backend = "grid".into();
    cfg.segmenter.grid_tile = 16;
    cfg.matching.candidate_fraction = 1.0;
    cfg.train.steps = 60;
    cfg.train.batch_size = 2;
    cfg.train.crop_size = 32;
    cfg.train.warmup_steps = 10;
    cfg.train.checkpoint_every = 30;
    cfg.train.lr = 3e-3;

    let source = SyntheticPairSource {
        textures: (0..4).map(|s| value_noise_texture(64, 64, 4, s)).collect(),
        crop: cfg.train.crop_size,
        max_shift: 4,
    };

    println!("training {} steps into {}", cfg.train.steps, out.display());
    let ckpt = fit(&cfg, &source, &out, None)?;
    println!("finished at step {}", ckpt.step);

    let log = std::fs::read_to_string(out.join("metrics.jsonl"))?;
    let records: Vec<serde_json::Value> = log
        .lines()
        .map(|l| serde_json::from_str(l).expect("metrics line"))
        .collect();
    let f = |rec: &serde_json::Value, key: &str| rec[key].as_f64().unwrap();
    for rec in [&records[0], &records[records.len() / 2], &records[records.len() - 1]] {
        println!(
            "step {:>3}  L={:.4}  photo={:.4}  feat={:.4}  dist={:.4}",
            rec["step"],
            f(rec, "L"),
            f(rec, "L_p"),
            f(rec, "L_f"),
            f(rec, "L_d")
        );
    }
    let mean = |recs: &[serde_json::Value]| {
        recs.iter().map(|r| f(r, "L")).sum::<f64>() / recs.len() as f64
    };
    println!(
        "mean total loss, first 10 steps {:.4} -> last 10 steps {:.4}",
        mean(&records[..10]),
        mean(&records[records.len() - 10..])
    );
    Ok(())
}
