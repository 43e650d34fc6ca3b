//! Encoders: the trainable correspondence encoder plus frozen semantic
//! and segmentation backends selected by config.

mod correspondence;
mod segmenter;
mod semantic;

pub use correspondence::CorrespondenceEncoder;
pub use segmenter::{
    downsample_majority, ColorRegionSegmenter, GridSegmenter, SegmentStack, Segmenter,
};
pub use semantic::{resample_feature_map, HandcraftedSemantic, SemanticEncoder};

use crate::config::Config;
use crate::error::{Error, Result};

/// Instantiates the configured frozen semantic backend.
pub fn semantic_from_config(cfg: &Config) -> Result<Box<dyn SemanticEncoder>> {
    match cfg.semantic.backend.as_str() {
        "handcrafted" => Ok(Box::new(HandcraftedSemantic::new(cfg.semantic.channels)?)),
        other => Err(Error::Config(format!(
            "semantic.backend {other:?} unavailable (supported: \"handcrafted\")"
        ))),
    }
}

/// Instantiates the configured frozen segmenter backend.
pub fn segmenter_from_config(cfg: &Config) -> Result<Box<dyn Segmenter>> {
    let s = &cfg.segmenter;
    match s.backend.as_str() {
        "color_regions" => Ok(Box::new(ColorRegionSegmenter::new(s.levels, s.max_regions)?)),
        "grid" => Ok(Box::new(GridSegmenter::new(s.grid_tile, s.max_regions)?)),
        other => Err(Error::Config(format!(
            "segmenter.backend {other:?} unavailable (supported: \"color_regions\", \"grid\")"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_backends_are_config_errors() {
        let mut cfg = Config::default();
        cfg.semantic.backend = "dino".into();
        assert!(matches!(semantic_from_config(&cfg), Err(Error::Config(_))));
        let mut cfg = Config::default();
        cfg.segmenter.backend = "panoptic".into();
        assert!(matches!(segmenter_from_config(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn default_backends_instantiate() {
        let cfg = Config::default();
        assert_eq!(semantic_from_config(&cfg).unwrap().channels(), 64);
        segmenter_from_config(&cfg).unwrap();
    }
}
