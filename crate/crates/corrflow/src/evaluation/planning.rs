//! Goal-conditioned action selection from a current-to-goal flow field.

use ndarray::Array2;

use crate::core::{backproject, CameraIntrinsics, FlowField, FlowResolution, Point2D};
use crate::error::{Error, Result};

/// Maximum 2D displacement (pixels) below which the scene counts as at goal.
pub const DONE_THRESHOLD_PX: f64 = 3.0;

/// One planned pick-and-move step in camera coordinates.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlannedAction {
    /// Every candidate pixel moves less than the done threshold.
    Done,
    /// Grasp at `grasp` (meters) and translate by `displacement` (meters).
    Move {
        grasp: [f64; 3],
        displacement: [f64; 3],
        /// Selected pixel as `(x, y)`.
        grasp_pixel: [usize; 2],
        /// Correspondence displacement at the selected pixel, pixels.
        flow_px: [f64; 2],
        magnitude_px: f64,
    },
}

/// Picks the valid-depth pixel with the largest correspondence displacement
/// (restricted to `region` when given) and back-projects the move. The goal
/// frame has no depth, so the target keeps the grasp depth. Ties keep the
/// first pixel in row-major order.
pub fn plan_action(
    depth: &Array2<f64>,
    k: &CameraIntrinsics,
    flow: &FlowField,
    region: Option<&Array2<bool>>,
    done_threshold_px: f64,
) -> Result<PlannedAction> {
    if flow.resolution() != FlowResolution::Full {
        return Err(Error::InvalidArgument(
            "action planning needs a full-resolution flow field".into(),
        ));
    }
    let (h, w) = depth.dim();
    if flow.height() != h || flow.width() != w {
        return Err(Error::InvalidArgument(format!(
            "flow raster {}x{} does not match depth raster {w}x{h}",
            flow.width(),
            flow.height()
        )));
    }
    if let Some(m) = region {
        if m.dim() != (h, w) {
            return Err(Error::InvalidArgument(format!(
                "region mask {}x{} does not match depth raster {w}x{h}",
                m.dim().1,
                m.dim().0
            )));
        }
    }
    if !(done_threshold_px >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "done threshold must be non-negative, got {done_threshold_px}"
        )));
    }

    let mut best: Option<(usize, usize, f64)> = None;
    for y in 0..h {
        for x in 0..w {
            if region.is_some_and(|m| !m[[y, x]]) {
                continue;
            }
            if !(depth[[y, x]] > 0.0) {
                continue;
            }
            let (dx, dy) = flow.at(y, x);
            let mag = (dx * dx + dy * dy).sqrt();
            if best.is_none_or(|(.., m)| mag > m) {
                best = Some((y, x, mag));
            }
        }
    }
    let (y, x, magnitude_px) = best.ok_or_else(|| {
        Error::Data("no pixel has valid depth inside the candidate region".into())
    })?;
    if magnitude_px < done_threshold_px {
        return Ok(PlannedAction::Done);
    }

    let d = depth[[y, x]];
    let (dx, dy) = flow.at(y, x);
    let grasp = backproject(Point2D::new(x as f64, y as f64), d, k)?;
    let target = backproject(Point2D::new(x as f64 + dx, y as f64 + dy), d, k)?;
    Ok(PlannedAction::Move {
        grasp: [grasp.x, grasp.y, grasp.z],
        displacement: [target.x - grasp.x, target.y - grasp.y, target.z - grasp.z],
        grasp_pixel: [x, y],
        flow_px: [dx, dy],
        magnitude_px,
    })
}
