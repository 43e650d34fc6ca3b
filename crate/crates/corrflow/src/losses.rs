//! Self-supervised warping losses: photometric, feature-metric, and
//! distance-consistency, each a Charbonnier-penalized masked mean, plus
//! their weighted combination.
//!
//! Means are anchored at the penalty floor: `mean(psi(x))` is computed as
//! `psi(0) + mean(psi(x) - psi(0))`, which is algebraically identical but
//! makes "loss equals the floor" hold bit-exactly whenever every residual
//! is exactly zero.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayD, IxDyn};

use crate::autodiff::{Tape, Var};
use crate::config::{LossConfig, LossWeights};
use crate::core::{FeatureMap, FlowField, FlowResolution, ImageTensor, make_pixel_grid};
use crate::encoders::SegmentStack;
use crate::error::{Error, Result};

/// Smoothing added inside pairwise-distance norms so their gradient is
/// defined at coincident points. Small enough to vanish below every
/// tolerance in use.
const NORM_EPS2: f64 = 1e-12;

/// The robust penalty `(x^2 + eps^2)^alpha`.
pub fn charbonnier_scalar(x: f64, eps: f64, alpha: f64) -> f64 {
    (x * x + eps * eps).powf(alpha)
}

/// Per-term values of one loss evaluation.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LossBreakdown {
    pub l_photo: f64,
    pub l_feat: f64,
    pub l_dist: f64,
    pub total: f64,
    pub photo_pixels: usize,
    pub feat_cells: usize,
    pub dist_pairs: usize,
}

impl LossBreakdown {
    pub fn check_finite(&self) -> Result<()> {
        if !(self.l_photo.is_finite()
            && self.l_feat.is_finite()
            && self.l_dist.is_finite()
            && self.total.is_finite())
        {
            return Err(Error::Training(format!(
                "non-finite loss: photo {} feat {} dist {}",
                self.l_photo, self.l_feat, self.l_dist
            )));
        }
        Ok(())
    }
}

/// `floor + mean((psi - floor) * weights) / mean-weight`, see module docs.
fn anchored_mean(
    tape: &mut Tape,
    penalties: Var,
    weights: Option<Arc<ArrayD<f64>>>,
    floor: f64,
) -> Var {
    let shape = tape.value(penalties).shape().to_vec();
    let fl = tape.constant(ArrayD::from_elem(IxDyn(&shape), floor));
    let centered = tape.sub(penalties, fl);
    let m = match weights {
        Some(w) => tape.weighted_mean(centered, w),
        None => tape.mean_all(centered),
    };
    let f0 = tape.constant(ArrayD::from_elem(IxDyn(&[]), floor));
    tape.add(m, f0)
}

fn mask_weights(mask: &Array2<bool>, channels: usize) -> (Arc<ArrayD<f64>>, usize) {
    let n = mask.len();
    let mut w = Array2::zeros((n, channels));
    let mut count = 0;
    for (r, &m) in mask.iter().enumerate() {
        if m {
            count += 1;
            for c in 0..channels {
                w[[r, c]] = 1.0;
            }
        }
    }
    (Arc::new(w.into_dyn()), count)
}

/// Charbonnier mean of `I1 - warp(I2, flow)` over masked pixels, at full
/// resolution. `flow_full_rows` is an `(H*W) x 2` tape variable.
pub fn photometric_on_tape(
    tape: &mut Tape,
    i1: &ImageTensor,
    i2: &ImageTensor,
    flow_full_rows: Var,
    mask: &Array2<bool>,
    eps: f64,
    alpha: f64,
) -> Result<(Var, usize)> {
    let (h, w) = (i1.height(), i1.width());
    if i2.height() != h || i2.width() != w {
        return Err(Error::InvalidArgument("image pair shapes differ".into()));
    }
    if mask.dim() != (h, w) {
        return Err(Error::InvalidArgument(format!(
            "mask {}x{} does not match image {h}x{w}",
            mask.dim().0,
            mask.dim().1
        )));
    }
    if tape.value(flow_full_rows).shape() != [h * w, 2] {
        return Err(Error::InvalidArgument(
            "flow rows do not match full image resolution".into(),
        ));
    }
    let (weights, count) = mask_weights(mask, 3);
    if count == 0 {
        return Err(Error::InvalidArgument("mask selects no pixels".into()));
    }

    let base = tape.constant(make_pixel_grid(h, w)?.as_rows().into_dyn());
    let coords = tape.add(base, flow_full_rows);
    let i2map = tape.constant(i2.data().clone().into_dyn());
    let warped = tape.bilinear_sample(i2map, coords);
    let i1rows = tape.constant(
        i1.data()
            .to_shape((h * w, 3))
            .expect("contiguous image")
            .to_owned()
            .into_dyn(),
    );
    let diff = tape.sub(i1rows, warped);
    let pen = tape.charbonnier(diff, eps, alpha);
    let floor = charbonnier_scalar(0.0, eps, alpha);
    Ok((anchored_mean(tape, pen, Some(weights), floor), count))
}

/// Charbonnier mean of `fs1 - warp(fs2, flow)` over masked cells at
/// feature resolution. Both feature maps are frozen constants.
pub fn feature_metric_on_tape(
    tape: &mut Tape,
    fs1: &FeatureMap,
    fs2: &FeatureMap,
    flow_feat_rows: Var,
    mask_low: &Array2<bool>,
    eps: f64,
    alpha: f64,
) -> Result<(Var, usize)> {
    let (h, w, c) = (fs1.height(), fs1.width(), fs1.channels());
    if (fs2.height(), fs2.width(), fs2.channels()) != (h, w, c) {
        return Err(Error::InvalidArgument("semantic map shapes differ".into()));
    }
    if mask_low.dim() != (h, w) {
        return Err(Error::InvalidArgument(format!(
            "low-res mask {}x{} does not match feature grid {h}x{w}",
            mask_low.dim().0,
            mask_low.dim().1
        )));
    }
    if tape.value(flow_feat_rows).shape() != [h * w, 2] {
        return Err(Error::InvalidArgument(
            "flow rows do not match feature resolution".into(),
        ));
    }
    let (weights, count) = mask_weights(mask_low, c);
    if count == 0 {
        return Err(Error::InvalidArgument("mask selects no cells".into()));
    }

    let base = tape.constant(make_pixel_grid(h, w)?.as_rows().into_dyn());
    let coords = tape.add(base, flow_feat_rows);
    let f2map = tape.constant(fs2.data().clone().into_dyn());
    let warped = tape.bilinear_sample(f2map, coords);
    let f1rows = tape.constant(fs1.as_rows().into_dyn());
    let diff = tape.sub(f1rows, warped);
    let pen = tape.charbonnier(diff, eps, alpha);
    let floor = charbonnier_scalar(0.0, eps, alpha);
    Ok((anchored_mean(tape, pen, Some(weights), floor), count))
}

/// 4-neighborhood cell pairs at feature resolution, filtered by segment
/// membership: both endpoints in the same segment (`within`) or in two
/// different segments (`!within`). Cells outside every segment never pair.
fn neighbor_pairs(regions_low: &SegmentStack, within: bool) -> (Vec<usize>, Vec<usize>) {
    let (h, w) = (regions_low.height(), regions_low.width());
    // Segment id per cell, usize::MAX where uncovered.
    let mut seg = Array2::from_elem((h, w), usize::MAX);
    for s in 0..regions_low.len() {
        for y in 0..h {
            for x in 0..w {
                if regions_low.mask(s)[[y, x]] {
                    seg[[y, x]] = s;
                }
            }
        }
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    let consider = |y0: usize, x0: usize, y1: usize, x1: usize, a: &mut Vec<usize>, b: &mut Vec<usize>| {
        let (s0, s1) = (seg[[y0, x0]], seg[[y1, x1]]);
        if s0 == usize::MAX || s1 == usize::MAX {
            return;
        }
        if (s0 == s1) == within {
            a.push(y0 * w + x0);
            b.push(y1 * w + x1);
        }
    };
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                consider(y, x, y, x + 1, &mut a, &mut b);
            }
            if y + 1 < h {
                consider(y, x, y + 1, x, &mut a, &mut b);
            }
        }
    }
    (a, b)
}

/// Smoothed Euclidean length of constant 2-vectors, same formula as the
/// tape's row-norm op so identical inputs give identical bits.
fn smoothed_norm(dx: f64, dy: f64) -> f64 {
    (dx * dx + dy * dy + NORM_EPS2).sqrt()
}

/// Penalizes changes of pairwise distances between neighboring cells under
/// the flow: `psi(|p_j - p_i| - |p'_j - p'_i|)` averaged over qualifying
/// pairs. The warped difference is formed as `(p_j - p_i) + (f_j - f_i)`,
/// so any constant flow reaches the floor `psi(0)` exactly.
pub fn distance_consistency_on_tape(
    tape: &mut Tape,
    flow_feat_rows: Var,
    regions_low: &SegmentStack,
    within: bool,
    eps: f64,
    alpha: f64,
) -> Result<(Var, usize)> {
    let (h, w) = (regions_low.height(), regions_low.width());
    if tape.value(flow_feat_rows).shape() != [h * w, 2] {
        return Err(Error::InvalidArgument(
            "flow rows do not match the region grid".into(),
        ));
    }
    let (ia, ib) = neighbor_pairs(regions_low, within);
    let floor = charbonnier_scalar(0.0, eps, alpha);
    if ia.is_empty() {
        log::warn!("distance consistency: no qualifying neighbor pairs; returning the floor");
        let fl = tape.constant(ArrayD::from_elem(IxDyn(&[]), floor));
        return Ok((fl, 0));
    }
    let m = ia.len();

    // Exact integer source differences and their smoothed norms.
    let mut d1 = Array2::zeros((m, 2));
    let mut n1 = Array1::zeros(m);
    for p in 0..m {
        let (ya, xa) = (ia[p] / w, ia[p] % w);
        let (yb, xb) = (ib[p] / w, ib[p] % w);
        d1[[p, 0]] = xb as f64 - xa as f64;
        d1[[p, 1]] = yb as f64 - ya as f64;
        n1[p] = smoothed_norm(d1[[p, 0]], d1[[p, 1]]);
    }

    let fa = tape.gather_rows(flow_feat_rows, Arc::new(ia));
    let fb = tape.gather_rows(flow_feat_rows, Arc::new(ib));
    let df = tape.sub(fb, fa);
    let d1c = tape.constant(d1.into_dyn());
    let d2 = tape.add(d1c, df);
    let n2 = tape.norm_rows(d2, NORM_EPS2);
    let n1c = tape.constant(n1.into_dyn());
    let gap = tape.sub(n1c, n2);
    let pen = tape.charbonnier(gap, eps, alpha);
    Ok((anchored_mean(tape, pen, None, floor), m))
}

/// Ablation replacement for the distance term: first-order flow smoothness
/// `psi(f_j - f_i)` over all 4-neighbor pairs, same `psi(0)` floor.
pub fn smoothness_on_tape(
    tape: &mut Tape,
    flow_feat_rows: Var,
    h: usize,
    w: usize,
    eps: f64,
    alpha: f64,
) -> Result<(Var, usize)> {
    if tape.value(flow_feat_rows).shape() != [h * w, 2] {
        return Err(Error::InvalidArgument(
            "flow rows do not match the grid".into(),
        ));
    }
    let mut ia = Vec::new();
    let mut ib = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                ia.push(y * w + x);
                ib.push(y * w + x + 1);
            }
            if y + 1 < h {
                ia.push(y * w + x);
                ib.push((y + 1) * w + x);
            }
        }
    }
    let m = ia.len();
    let floor = charbonnier_scalar(0.0, eps, alpha);
    if m == 0 {
        let fl = tape.constant(ArrayD::from_elem(IxDyn(&[]), floor));
        return Ok((fl, 0));
    }
    let fa = tape.gather_rows(flow_feat_rows, Arc::new(ia));
    let fb = tape.gather_rows(flow_feat_rows, Arc::new(ib));
    let df = tape.sub(fb, fa);
    let pen = tape.charbonnier(df, eps, alpha);
    Ok((anchored_mean(tape, pen, None, floor), m))
}

/// `w_p * L_p + w_f * L_f + w_d * L_d` on the tape.
pub fn combine_on_tape(tape: &mut Tape, lp: Var, lf: Var, ld: Var, w: &LossWeights) -> Var {
    let a = tape.scale(lp, w.photo);
    let b = tape.scale(lf, w.feat);
    let c = tape.scale(ld, w.dist);
    let ab = tape.add(a, b);
    tape.add(ab, c)
}

// ----- plain (constant-flow) entry points -----

fn flow_rows_const(tape: &mut Tape, flow: &FlowField, expect: FlowResolution) -> Result<Var> {
    if flow.resolution() != expect {
        return Err(Error::InvalidArgument(format!(
            "expected {expect:?}-resolution flow"
        )));
    }
    Ok(tape.constant(flow.as_rows().into_dyn()))
}

/// Photometric loss of a concrete full-resolution flow field.
pub fn photometric_loss(
    i1: &ImageTensor,
    i2: &ImageTensor,
    flow: &FlowField,
    mask: &Array2<bool>,
    eps: f64,
    alpha: f64,
) -> Result<f64> {
    let mut tape = Tape::new();
    let rows = flow_rows_const(&mut tape, flow, FlowResolution::Full)?;
    let (v, _) = photometric_on_tape(&mut tape, i1, i2, rows, mask, eps, alpha)?;
    Ok(tape.scalar(v))
}

/// Feature-metric loss of a concrete feature-resolution flow field.
pub fn feature_metric_loss(
    fs1: &FeatureMap,
    fs2: &FeatureMap,
    flow: &FlowField,
    mask_low: &Array2<bool>,
    eps: f64,
    alpha: f64,
) -> Result<f64> {
    let mut tape = Tape::new();
    let rows = flow_rows_const(&mut tape, flow, FlowResolution::Feature)?;
    let (v, _) = feature_metric_on_tape(&mut tape, fs1, fs2, rows, mask_low, eps, alpha)?;
    Ok(tape.scalar(v))
}

/// Distance-consistency loss of a concrete feature-resolution flow field.
pub fn distance_consistency_loss(
    flow: &FlowField,
    regions_low: &SegmentStack,
    within: bool,
    eps: f64,
    alpha: f64,
) -> Result<f64> {
    let mut tape = Tape::new();
    let rows = flow_rows_const(&mut tape, flow, FlowResolution::Feature)?;
    let (v, _) =
        distance_consistency_on_tape(&mut tape, rows, regions_low, within, eps, alpha)?;
    Ok(tape.scalar(v))
}

/// Weighted total of precomputed per-term values.
pub fn weighted_total(lp: f64, lf: f64, ld: f64, w: &LossWeights) -> f64 {
    w.photo * lp + w.feat * lf + w.dist * ld
}

/// Convenience wrapper reading the Charbonnier parameters from config.
pub fn charbonnier_params(cfg: &LossConfig) -> (f64, f64) {
    (cfg.charbonnier_eps, cfg.charbonnier_alpha)
}
