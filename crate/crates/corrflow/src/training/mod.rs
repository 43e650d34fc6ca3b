//! The optimization loop: deterministic batch assembly, per-pair gradient
//! accumulation, encoder-only updates, metric logging, and resumable
//! checkpointing.

mod checkpoint;
mod optimizer;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use optimizer::AdamW;

use std::io::Write;
use std::path::Path;

use ndarray::ArrayD;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::config::Config;
use crate::core::ImageTensor;
use crate::datapipe::synthetic::random_translated_pair;
use crate::datapipe::{index_videos, sample_training_pair, VideoIndex};
use crate::error::{Error, Result};
use crate::losses::LossBreakdown;
use crate::model::Pipeline;

/// A deterministic supplier of training pairs: the same (seed, step, item)
/// triple always yields the same pair, so runs replay exactly.
pub trait PairSource: Send + Sync {
    fn pair(&self, seed: u64, step: u64, item: u64) -> Result<(ImageTensor, ImageTensor)>;

    /// Identifier used in failure diagnostics.
    fn describe(&self, seed: u64, step: u64, item: u64) -> String {
        format!("pair(seed={seed}, step={step}, item={item})")
    }
}

fn mix3(seed: u64, step: u64, item: u64) -> u64 {
    let mut z = seed
        ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ item.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Crops of procedural textures with known translations; hermetic stand-in
/// for a video corpus.
pub struct SyntheticPairSource {
    pub textures: Vec<ImageTensor>,
    pub crop: usize,
    pub max_shift: usize,
}

impl PairSource for SyntheticPairSource {
    fn pair(&self, seed: u64, step: u64, item: u64) -> Result<(ImageTensor, ImageTensor)> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix3(seed, step, item));
        let tex = &self.textures[rng.random_range(0..self.textures.len())];
        let p = random_translated_pair(tex, self.crop, self.max_shift, &mut rng)?;
        Ok((p.i1, p.i2))
    }

    fn describe(&self, seed: u64, step: u64, item: u64) -> String {
        format!("synthetic(seed={seed}, step={step}, item={item})")
    }
}

/// Temporal pairs from an indexed frame directory tree.
pub struct VideoPairSource {
    pub index: VideoIndex,
    pub interval_s: (f64, f64),
    pub resize_short: usize,
    pub crop: usize,
    pub shared_offsets: bool,
}

impl VideoPairSource {
    pub fn from_config(config: &Config) -> Result<Self> {
        let index = index_videos(Path::new(&config.data.root))?;
        Ok(Self {
            index,
            interval_s: (config.data.interval_min_s, config.data.interval_max_s),
            resize_short: config.data.resize_short,
            crop: config.train.crop_size,
            shared_offsets: config.data.shared_crop_offsets,
        })
    }
}

impl PairSource for VideoPairSource {
    fn pair(&self, seed: u64, step: u64, item: u64) -> Result<(ImageTensor, ImageTensor)> {
        sample_training_pair(
            &self.index,
            self.interval_s,
            self.resize_short,
            self.crop,
            self.shared_offsets,
            seed,
            step.wrapping_mul(1_000_003).wrapping_add(item),
        )
    }

    fn describe(&self, seed: u64, step: u64, item: u64) -> String {
        format!("video(seed={seed}, step={step}, item={item})")
    }
}

/// One structured metric log line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: u64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "L_p")]
    pub l_p: f64,
    #[serde(rename = "L_f")]
    pub l_f: f64,
    #[serde(rename = "L_d")]
    pub l_d: f64,
    pub lr: f64,
}

/// One gradient update from a batch of pairs: builds a graph per pair,
/// averages gradients, and applies them to the encoder only. Frozen
/// components are checksum-audited. Returns the mean per-term losses and
/// the learning rate that was applied.
pub fn train_step(
    pipe: &mut Pipeline,
    opt: &mut AdamW,
    batch: &[(ImageTensor, ImageTensor)],
    ids: &[String],
) -> Result<(LossBreakdown, f64)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let frozen = pipe.frozen_checksum();
    let names: Vec<String> = pipe
        .encoder()
        .params()
        .iter()
        .map(|(n, _)| n.to_string())
        .collect();
    let mut acc: Vec<ArrayD<f64>> = pipe
        .encoder()
        .params()
        .iter()
        .map(|(_, p)| ArrayD::zeros(p.raw_dim()))
        .collect();
    let inv = 1.0 / batch.len() as f64;
    let mut mean = LossBreakdown {
        l_photo: 0.0,
        l_feat: 0.0,
        l_dist: 0.0,
        total: 0.0,
        photo_pixels: 0,
        feat_cells: 0,
        dist_pairs: 0,
    };
    let with_ids = |e: Error| match e {
        Error::Training(msg) => Error::Training(format!("{msg}; batch: [{}]", ids.join(", "))),
        other => other,
    };
    for (i1, i2) in batch {
        let mut tape = Tape::new();
        let vars = pipe.encoder().params().register_leaves(&mut tape);
        let (total, bd) = pipe
            .loss_on_tape(&mut tape, &vars, i1, i2)
            .map_err(with_ids)?;
        let grads = tape.backward(total);
        for (k, name) in names.iter().enumerate() {
            if let Some(g) = grads.wrt(vars.var(name)) {
                acc[k].zip_mut_with(g, |a, &g| *a += g * inv);
            }
        }
        mean.l_photo += bd.l_photo * inv;
        mean.l_feat += bd.l_feat * inv;
        mean.l_dist += bd.l_dist * inv;
        mean.total += bd.total * inv;
        mean.photo_pixels += bd.photo_pixels;
        mean.feat_cells += bd.feat_cells;
        mean.dist_pairs += bd.dist_pairs;
    }
    if acc.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
        return Err(with_ids(Error::Training("non-finite gradient".into())));
    }
    let lr = opt.apply(pipe.encoder_mut().params_mut(), &acc);
    if pipe.frozen_checksum() != frozen {
        return Err(Error::InvariantViolation(
            "frozen component changed during a training step".into(),
        ));
    }
    Ok((mean, lr))
}

fn snapshot(pipe: &Pipeline, opt: &AdamW, config: &Config, step: u64) -> Checkpoint {
    let (t, m, v) = opt.state();
    Checkpoint {
        step,
        config: config.clone(),
        config_hash: config.hash(),
        params: pipe.encoder().params().clone(),
        opt_t: t,
        opt_m: m.to_vec(),
        opt_v: v.to_vec(),
    }
}

/// Runs the training loop to `config.train.steps`, appending one metric
/// record per step to `metrics.jsonl` and checkpointing every
/// `checkpoint_every` steps plus at the end. With `resume`, continues from
/// the checkpoint bit-exactly; the configs must hash identically.
pub fn fit(
    config: &Config,
    source: &dyn PairSource,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<Checkpoint> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut pipe = Pipeline::from_config(config)?;
    let mut opt = AdamW::new(&config.train, pipe.encoder().params());
    let mut start: u64 = 0;
    if let Some(path) = resume {
        let ck = load_checkpoint(path)?;
        if ck.config_hash != config.hash() {
            return Err(Error::Training(format!(
                "cannot resume from {}: it was trained under config hash {}, \
                 the current config hashes to {}; rerun with the original config",
                path.display(),
                ck.config_hash,
                config.hash()
            )));
        }
        *pipe.encoder_mut().params_mut() = ck.params;
        opt.restore(ck.opt_t, ck.opt_m, ck.opt_v);
        start = ck.step;
    }

    let metrics_path = out_dir.join("metrics.jsonl");
    let mut metrics = std::fs::OpenOptions::new()
        .create(true)
        .append(resume.is_some())
        .truncate(resume.is_none())
        .write(true)
        .open(&metrics_path)?;

    let steps = config.train.steps as u64;
    let every = (config.train.checkpoint_every.max(1)) as u64;
    let batch_size = config.train.batch_size as u64;
    let seed = config.train.seed;
    for step in start..steps {
        let mut batch = Vec::with_capacity(batch_size as usize);
        let mut ids = Vec::with_capacity(batch_size as usize);
        for item in 0..batch_size {
            batch.push(source.pair(seed, step, item)?);
            ids.push(source.describe(seed, step, item));
        }
        let (bd, lr) = train_step(&mut pipe, &mut opt, &batch, &ids)?;
        let completed = step + 1;
        let record = MetricRecord {
            step: completed,
            l: bd.total,
            l_p: bd.l_photo,
            l_f: bd.l_feat,
            l_d: bd.l_dist,
            lr,
        };
        writeln!(
            metrics,
            "{}",
            serde_json::to_string(&record).expect("plain record")
        )?;
        if completed % every == 0 || completed == steps {
            let ck = snapshot(&pipe, &opt, config, completed);
            save_checkpoint(&out_dir.join(format!("ckpt_{completed:06}.bin")), &ck)?;
        }
    }
    metrics.flush()?;
    Ok(snapshot(&pipe, &opt, config, steps))
}

/// Restores a pipeline from a checkpoint for inference or evaluation.
pub fn pipeline_from_checkpoint(ck: &Checkpoint) -> Result<Pipeline> {
    let mut pipe = Pipeline::from_config(&ck.config)?;
    *pipe.encoder_mut().params_mut() = ck.params.clone();
    Ok(pipe)
}
