//! Bootstrapped visible-region discovery: score segments by how well their
//! pixels match anywhere in the target under the current cost volume, then
//! keep the top-k segments as the loss mask.

use ndarray::Array2;

use crate::core::FEATURE_STRIDE;
use crate::encoders::SegmentStack;
use crate::error::{Error, Result};
use crate::matching::CostVolume;

/// Per-pixel best-match similarity at full resolution. Detached: region
/// selection never backpropagates.
pub struct SimilarityMap {
    data: Array2<f64>,
}

impl SimilarityMap {
    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }
}

/// Union of the selected segments; the loss mask.
pub struct VisibleRegionMask {
    data: Array2<bool>,
    selected: Vec<usize>,
}

impl VisibleRegionMask {
    pub fn data(&self) -> &Array2<bool> {
        &self.data
    }

    /// Indices into the segment stack; empty when the full-image fallback
    /// was used.
    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    /// Full-image mask for degenerate segmentations.
    pub fn full_image(h: usize, w: usize) -> Self {
        Self {
            data: Array2::from_elem((h, w), true),
            selected: Vec::new(),
        }
    }
}

/// Max over target cells per source cell, block-replicated to `H x W`.
pub fn max_similarity_map(c: &CostVolume) -> SimilarityMap {
    let (h, w) = (c.grid_height(), c.grid_width());
    let s = FEATURE_STRIDE;
    let mut data = Array2::zeros((h * s, w * s));
    for i in 0..h {
        for j in 0..w {
            let row = c.data().row(i * w + j);
            let m = row.iter().fold(f64::NEG_INFINITY, |a, v| a.max(*v));
            for py in i * s..(i + 1) * s {
                for px in j * s..(j + 1) * s {
                    data[[py, px]] = m;
                }
            }
        }
    }
    SimilarityMap { data }
}

/// Mean similarity over each segment's pixels; empty segments score
/// negative infinity so they can never be selected.
pub fn segment_scores(s: &SimilarityMap, segments: &SegmentStack) -> Result<Vec<f64>> {
    let dim = s.data.dim();
    if dim != (segments.height(), segments.width()) {
        return Err(Error::InvalidArgument(format!(
            "similarity map {}x{} does not match segments {}x{}",
            dim.0,
            dim.1,
            segments.height(),
            segments.width()
        )));
    }
    let mut scores = Vec::with_capacity(segments.len());
    let mut any = false;
    for i in 0..segments.len() {
        let mask = segments.mask(i);
        let mut sum = 0.0;
        let mut count = 0usize;
        for (v, &m) in s.data.iter().zip(mask.iter()) {
            if m {
                sum += v;
                count += 1;
            }
        }
        if count == 0 {
            scores.push(f64::NEG_INFINITY);
        } else {
            any = true;
            scores.push(sum / count as f64);
        }
    }
    if !any {
        return Err(Error::Data("all segments are empty".into()));
    }
    Ok(scores)
}

/// Union of the `min(k, N)` highest-scoring segments. Ties keep the larger
/// segment, then the lower index. Degenerate stacks (a single segment)
/// fall back to the full-image mask.
pub fn select_visible_regions(
    segments: &SegmentStack,
    scores: &[f64],
    k: usize,
) -> Result<VisibleRegionMask> {
    if k == 0 {
        return Err(Error::InvalidArgument("top-k must be at least 1".into()));
    }
    if scores.len() != segments.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores for {} segments",
            scores.len(),
            segments.len()
        )));
    }
    if segments.len() <= 1 {
        return Ok(VisibleRegionMask::full_image(
            segments.height(),
            segments.width(),
        ));
    }
    let mut order: Vec<usize> = (0..segments.len()).collect();
    order.sort_by(|a, b| {
        scores[*b]
            .total_cmp(&scores[*a])
            .then_with(|| segments.area(*b).cmp(&segments.area(*a)))
            .then_with(|| a.cmp(b))
    });
    order.truncate(k.min(segments.len()));
    let mut selected = order;
    selected.sort_unstable();

    let mut data = Array2::from_elem((segments.height(), segments.width()), false);
    for &i in &selected {
        for (d, &m) in data.iter_mut().zip(segments.mask(i).iter()) {
            *d |= m;
        }
    }
    Ok(VisibleRegionMask { data, selected })
}
