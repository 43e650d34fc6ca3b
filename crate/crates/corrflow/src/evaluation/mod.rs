//! Downstream evaluators: point-tracking metrics, revolute-joint recovery,
//! and goal-conditioned action planning.

mod articulation;
mod planning;
mod tapvid;

use crate::core::FEATURE_STRIDE;
use crate::error::{Error, Result};

pub use articulation::{
    apply_revolute, articulation_errors, evaluate_articulated_pair, fit_revolute_joint,
    fit_rigid_transform, lift_correspondences, point_to_line, ArticulatedPairResult,
    ArticulationErrors, ArticulationParams, LiftedCorrespondences, MIN_STATE_DEG,
};
pub use planning::{plan_action, PlannedAction, DONE_THRESHOLD_PX};
pub use tapvid::{
    query_correspondence, scale_tracks, tapvid_metrics, video_correspondence_sets,
    CorrespondenceSet, MetricCounts, MetricReport, OcclusionPolicy, THRESHOLDS,
};

/// Default shorter-side target when resizing inputs for evaluation.
pub const EVAL_SHORT_SIDE: usize = 256;

/// Evaluation raster for an `h x w` input: the shorter side scales to
/// `short_side` (0 keeps the native size) and both sides snap to the nearest
/// positive multiple of the feature stride so the matcher accepts them.
pub fn eval_resize_dims(h: usize, w: usize, short_side: usize) -> Result<(usize, usize)> {
    if h == 0 || w == 0 {
        return Err(Error::InvalidArgument(format!(
            "raster must be positive, got {h}x{w}"
        )));
    }
    let snap = |v: f64| ((v / FEATURE_STRIDE as f64).round().max(1.0) as usize) * FEATURE_STRIDE;
    let s = if short_side == 0 {
        1.0
    } else {
        short_side as f64 / h.min(w) as f64
    };
    Ok((snap(h as f64 * s), snap(w as f64 * s)))
}
