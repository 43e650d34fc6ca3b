//! Run configuration: TOML file with one section per subsystem, a
//! validating loader, and a stable content hash stored in checkpoints and
//! run manifests.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Fnv1a;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub encoder: EncoderConfig,
    pub semantic: SemanticConfig,
    pub segmenter: SegmenterConfig,
    pub matching: MatchingConfig,
    pub visibility: VisibilityConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub channels: usize,
    pub blocks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemanticConfig {
    pub backend: String,
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmenterConfig {
    pub backend: String,
    pub max_regions: usize,
    /// Color-quantization levels per channel (color_regions backend).
    pub levels: usize,
    /// Tile side in pixels (grid backend).
    pub grid_tile: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchingConfig {
    pub candidate_fraction: f64,
    /// Fixed policy, recorded in the config for auditability.
    pub tie_break: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisibilityConfig {
    pub top_k: usize,
    /// Fixed policy when segmentation is degenerate.
    pub fallback: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub charbonnier_eps: f64,
    pub charbonnier_alpha: f64,
    /// Replace the distance-consistency term with a first-order flow
    /// smoothness penalty (ablation).
    pub smoothness_ablation: bool,
    /// Pair selection for the distance term: endpoints inside the same
    /// segment (true, default) or spanning two segments (false, for study).
    pub distance_within_region: bool,
    pub weights: LossWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub photo: f64,
    pub feat: f64,
    pub dist: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub warmup_steps: usize,
    pub grad_clip: f64,
    pub seed: u64,
    pub crop_size: usize,
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub root: String,
    pub interval_min_s: f64,
    pub interval_max_s: f64,
    /// Frames are resized so the shorter side equals this before cropping.
    pub resize_short: usize,
    /// Use one crop offset for both frames instead of independent offsets.
    pub shared_crop_offsets: bool,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            semantic: SemanticConfig::default(),
            segmenter: SegmenterConfig::default(),
            matching: MatchingConfig::default(),
            visibility: VisibilityConfig::default(),
            loss: LossConfig::default(),
            train: TrainConfig::default(),
            data: DataConfig::default(),
        }
    }
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            channels: 128,
            blocks: 4,
        }
    }
}

impl Default for SemanticConfig {
    fn default() -> Self {
        Self {
            backend: "handcrafted".into(),
            channels: 64,
        }
    }
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            backend: "color_regions".into(),
            max_regions: 64,
            levels: 4,
            grid_tile: 16,
        }
    }
}

impl Default for MatchingConfig {
    fn default() -> Self {
        Self {
            candidate_fraction: 0.01,
            tie_break: "row-major".into(),
        }
    }
}

impl Default for VisibilityConfig {
    fn default() -> Self {
        Self {
            top_k: 3,
            fallback: "full-image".into(),
        }
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            charbonnier_eps: 1e-3,
            charbonnier_alpha: 0.5,
            smoothness_ablation: false,
            distance_within_region: true,
            weights: LossWeights::default(),
        }
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            photo: 1.0,
            feat: 1.0,
            dist: 1.0,
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 4,
            lr: 1e-4,
            weight_decay: 1e-4,
            warmup_steps: 500,
            grad_clip: 1.0,
            seed: 0,
            crop_size: 256,
            checkpoint_every: 100,
        }
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            root: String::new(),
            interval_min_s: 1.0,
            interval_max_s: 3.0,
            resize_short: 288,
            shared_crop_offsets: false,
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.encoder.channels == 0 || self.encoder.blocks == 0 {
            return bad("encoder.channels and encoder.blocks must be positive".into());
        }
        if self.semantic.channels == 0 {
            return bad("semantic.channels must be positive".into());
        }
        if self.segmenter.max_regions == 0 {
            return bad("segmenter.max_regions must be positive".into());
        }
        if !(self.matching.candidate_fraction > 0.0 && self.matching.candidate_fraction <= 1.0) {
            return bad(format!(
                "matching.candidate_fraction must be in (0, 1], got {}",
                self.matching.candidate_fraction
            ));
        }
        if self.matching.tie_break != "row-major" {
            return bad(format!(
                "matching.tie_break is fixed to \"row-major\", got {:?}",
                self.matching.tie_break
            ));
        }
        if self.visibility.top_k == 0 {
            return bad("visibility.top_k must be at least 1".into());
        }
        if self.visibility.fallback != "full-image" {
            return bad(format!(
                "visibility.fallback is fixed to \"full-image\", got {:?}",
                self.visibility.fallback
            ));
        }
        if self.loss.charbonnier_eps <= 0.0 {
            return bad("loss.charbonnier_eps must be positive".into());
        }
        if self.loss.charbonnier_alpha <= 0.0 {
            return bad("loss.charbonnier_alpha must be positive".into());
        }
        let w = &self.loss.weights;
        if !(w.photo.is_finite() && w.feat.is_finite() && w.dist.is_finite())
            || w.photo < 0.0
            || w.feat < 0.0
            || w.dist < 0.0
        {
            return bad("loss.weights must be finite and nonnegative".into());
        }
        let t = &self.train;
        if t.steps == 0 || t.batch_size == 0 || t.checkpoint_every == 0 {
            return bad("train.steps, train.batch_size, train.checkpoint_every must be positive".into());
        }
        if !(t.lr > 0.0) || t.weight_decay < 0.0 || !(t.grad_clip > 0.0) {
            return bad("train.lr and train.grad_clip must be positive, train.weight_decay nonnegative".into());
        }
        if t.crop_size == 0 || t.crop_size % 8 != 0 {
            return bad(format!(
                "train.crop_size must be a positive multiple of 8, got {}",
                t.crop_size
            ));
        }
        let d = &self.data;
        if !(d.interval_min_s > 0.0) || d.interval_max_s < d.interval_min_s {
            return bad("data interval bounds must satisfy 0 < min <= max".into());
        }
        if d.resize_short == 0 {
            return bad("data.resize_short must be positive".into());
        }
        Ok(())
    }

    /// Stable content hash over the canonical TOML rendering.
    pub fn hash(&self) -> String {
        let mut h = Fnv1a::new();
        h.update(self.to_toml_string().as_bytes());
        format!("{:016x}", h.finish())
    }
}
