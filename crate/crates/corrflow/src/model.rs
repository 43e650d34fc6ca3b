//! The assembled correspondence pipeline: trainable pair encoder, frozen
//! semantic prior, frozen segmenter, candidate-masked matcher, visibility
//! bootstrap, and the loss stack.

use ndarray::Ix2;

use crate::autodiff::{ParamVars, Tape, Var};
use crate::config::Config;
use crate::core::{
    make_pixel_grid, upsample_flow, FlowField, ImageTensor, FEATURE_STRIDE,
};
use crate::encoders::{
    downsample_majority, segmenter_from_config, semantic_from_config, CorrespondenceEncoder,
    SegmentStack, Segmenter, SemanticEncoder,
};
use crate::error::Result;
use crate::losses::{
    combine_on_tape, distance_consistency_on_tape, feature_metric_on_tape, photometric_on_tape,
    smoothness_on_tape, LossBreakdown,
};
use crate::matching::{
    candidate_mask, cost_volume, cost_volume_on_tape, flow_from_distribution, flow_on_tape,
    masked_softmax, upsample_flow_on_tape, CostVolume,
};
use crate::visibility::{
    max_similarity_map, segment_scores, select_visible_regions, VisibleRegionMask,
};

/// Output of one frozen-parameter matching pass.
pub struct FlowPrediction {
    /// Per-pixel displacement at image resolution.
    pub full: FlowField,
    /// Per-cell displacement at the stride-8 grid.
    pub feature: FlowField,
    /// Raw pair similarities, reusable for the visibility bootstrap.
    pub cost: CostVolume,
}

pub struct Pipeline {
    encoder: CorrespondenceEncoder,
    semantic: Box<dyn SemanticEncoder>,
    segmenter: Box<dyn Segmenter>,
    config: Config,
}

impl Pipeline {
    pub fn from_config(config: &Config) -> Result<Self> {
        config.validate()?;
        let encoder = CorrespondenceEncoder::new(
            config.encoder.channels,
            config.encoder.blocks,
            config.train.seed,
        )?;
        let semantic = semantic_from_config(config)?;
        let segmenter = segmenter_from_config(config)?;
        Ok(Self {
            encoder,
            semantic,
            segmenter,
            config: config.clone(),
        })
    }

    pub fn encoder(&self) -> &CorrespondenceEncoder {
        &self.encoder
    }

    pub fn encoder_mut(&mut self) -> &mut CorrespondenceEncoder {
        &mut self.encoder
    }

    pub fn semantic(&self) -> &dyn SemanticEncoder {
        self.semantic.as_ref()
    }

    pub fn segmenter(&self) -> &dyn Segmenter {
        self.segmenter.as_ref()
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    /// Combined digest of every frozen component; training asserts this is
    /// untouched by parameter updates.
    pub fn frozen_checksum(&self) -> u64 {
        self.semantic.checksum() ^ self.segmenter.checksum().rotate_left(17)
    }

    /// Frozen-parameter flow prediction for one image pair.
    pub fn predict_flow(&self, i1: &ImageTensor, i2: &ImageTensor) -> Result<FlowPrediction> {
        let (f1, f2) = self.encoder.encode_pair(i1, i2)?;
        let cost = cost_volume(&f1, &f2)?;
        let fs1 = self.semantic.features(i1)?;
        let fs2 = self.semantic.features(i2)?;
        let cmask = candidate_mask(&fs1, &fs2, self.config.matching.candidate_fraction)?;
        let dist = masked_softmax(&cost, &cmask)?;
        let grid = make_pixel_grid(f1.height(), f1.width())?;
        let feature = flow_from_distribution(&dist, &grid)?;
        let full = upsample_flow(&feature, FEATURE_STRIDE)?;
        Ok(FlowPrediction {
            full,
            feature,
            cost,
        })
    }

    /// Visibility estimate for the source image of a pair: segments scored
    /// by their best match similarity in the cost volume, top-k selected.
    /// Also returns the full segmentation for reuse by the losses.
    pub fn visible_mask(
        &self,
        i1: &ImageTensor,
        cost: &CostVolume,
    ) -> Result<(VisibleRegionMask, SegmentStack)> {
        let segments = self.segmenter.segment(i1)?;
        let sim = max_similarity_map(cost);
        let scores = segment_scores(&sim, &segments)?;
        let vis = select_visible_regions(&segments, &scores, self.config.visibility.top_k)?;
        Ok((vis, segments))
    }

    /// Builds the whole training graph for one pair. Parameters must already
    /// be registered on the tape: leaves to train, constants to evaluate.
    /// The visibility mask is recomputed from the current similarities but
    /// detached, so no gradient flows through region selection.
    pub fn loss_on_tape(
        &self,
        tape: &mut Tape,
        vars: &ParamVars,
        i1: &ImageTensor,
        i2: &ImageTensor,
    ) -> Result<(Var, LossBreakdown)> {
        let (t1, t2) = self.encoder.forward_on_tape(tape, vars, i1, i2)?;
        let cost = cost_volume_on_tape(tape, t1, t2);
        let (hf, wf) = (
            i1.height() / FEATURE_STRIDE,
            i1.width() / FEATURE_STRIDE,
        );

        let fs1 = self.semantic.features(i1)?;
        let fs2 = self.semantic.features(i2)?;
        let cmask = candidate_mask(&fs1, &fs2, self.config.matching.candidate_fraction)?;
        let grid = make_pixel_grid(hf, wf)?;
        let flow_feat = flow_on_tape(tape, cost, cmask.shared(), &grid);

        let cost_plain = CostVolume::from_matrix(
            tape.value(cost)
                .to_owned()
                .into_dimensionality::<Ix2>()
                .expect("2D cost volume"),
            hf,
            wf,
        )?;
        let segments = self.segmenter.segment(i1)?;
        let sim = max_similarity_map(&cost_plain);
        let scores = segment_scores(&sim, &segments)?;
        let vis = select_visible_regions(&segments, &scores, self.config.visibility.top_k)?;

        let (eps, alpha) = (
            self.config.loss.charbonnier_eps,
            self.config.loss.charbonnier_alpha,
        );

        let flow_full = upsample_flow_on_tape(tape, flow_feat, hf, wf, FEATURE_STRIDE);
        let (lp, photo_pixels) =
            photometric_on_tape(tape, i1, i2, flow_full, vis.data(), eps, alpha)?;

        let mut mask_low = downsample_majority(vis.data(), FEATURE_STRIDE)?;
        if !mask_low.iter().any(|&m| m) {
            log::warn!("visibility mask vanished at feature resolution; using the full grid");
            mask_low.fill(true);
        }
        let (lf, feat_cells) =
            feature_metric_on_tape(tape, &fs1, &fs2, flow_feat, &mask_low, eps, alpha)?;

        let (ld, dist_pairs) = if self.config.loss.smoothness_ablation {
            smoothness_on_tape(tape, flow_feat, hf, wf, eps, alpha)?
        } else {
            let regions_low = segments.downsample(FEATURE_STRIDE)?;
            distance_consistency_on_tape(
                tape,
                flow_feat,
                &regions_low,
                self.config.loss.distance_within_region,
                eps,
                alpha,
            )?
        };

        let total = combine_on_tape(tape, lp, lf, ld, &self.config.loss.weights);
        let breakdown = LossBreakdown {
            l_photo: tape.scalar(lp),
            l_feat: tape.scalar(lf),
            l_dist: tape.scalar(ld),
            total: tape.scalar(total),
            photo_pixels,
            feat_cells,
            dist_pairs,
        };
        breakdown.check_finite()?;
        Ok((total, breakdown))
    }

    /// Loss of one pair under frozen parameters.
    pub fn loss(&self, i1: &ImageTensor, i2: &ImageTensor) -> Result<LossBreakdown> {
        let mut tape = Tape::new();
        let vars = self.encoder.params().register_constants(&mut tape);
        let (_, breakdown) = self.loss_on_tape(&mut tape, &vars, i1, i2)?;
        Ok(breakdown)
    }
}
