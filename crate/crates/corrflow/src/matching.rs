//! Cost-volume matching: all-pairs feature similarity, semantic candidate
//! masking, masked softmax, and softargmax flow extraction.
//!
//! The 4D rasters `h x w x h x w` are stored as `(h*w) x (h*w)` matrices
//! with row-major cell flattening: row `i*w + j` is source cell `(i, j)`,
//! column `k*w + l` is target cell `(k, l)`.

use std::sync::Arc;

use ndarray::{Array2, Array3};

use crate::autodiff::{Tape, Var};
use crate::core::{FeatureMap, FlowField, FlowResolution, PixelGrid};
use crate::error::{Error, Result};

/// Scaled all-pairs similarity between two feature maps.
pub struct CostVolume {
    data: Array2<f64>,
    h: usize,
    w: usize,
}

impl CostVolume {
    /// Wraps an already-computed `(h*w) x (h*w)` score matrix.
    pub fn from_matrix(data: Array2<f64>, h: usize, w: usize) -> Result<Self> {
        if data.dim() != (h * w, h * w) {
            return Err(Error::InvalidArgument(format!(
                "score matrix {}x{} does not match a {h}x{w} grid",
                data.dim().0,
                data.dim().1
            )));
        }
        Ok(Self { data, h, w })
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn grid_height(&self) -> usize {
        self.h
    }

    pub fn grid_width(&self) -> usize {
        self.w
    }

    /// `C[i,j,k,l]`: similarity of source cell (i,j) with target cell (k,l).
    pub fn at(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[[i * self.w + j, k * self.w + l]]
    }
}

/// Per-source-cell boolean set of allowed target cells.
pub struct CandidateMask {
    data: Arc<Array2<bool>>,
    h: usize,
    w: usize,
    per_cell: usize,
}

impl CandidateMask {
    pub fn data(&self) -> &Array2<bool> {
        &self.data
    }

    pub fn shared(&self) -> Arc<Array2<bool>> {
        Arc::clone(&self.data)
    }

    /// Number of allowed target cells for every source cell.
    pub fn candidates_per_cell(&self) -> usize {
        self.per_cell
    }

    pub fn grid_height(&self) -> usize {
        self.h
    }

    pub fn grid_width(&self) -> usize {
        self.w
    }
}

/// Row-normalized matching probabilities, exactly zero off-mask.
pub struct MatchingDistribution {
    data: Array2<f64>,
    h: usize,
    w: usize,
}

impl MatchingDistribution {
    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn grid_height(&self) -> usize {
        self.h
    }

    pub fn grid_width(&self) -> usize {
        self.w
    }
}

fn check_same_grid(f1: &FeatureMap, f2: &FeatureMap) -> Result<(usize, usize, usize)> {
    if f1.height() != f2.height() || f1.width() != f2.width() {
        return Err(Error::InvalidArgument(format!(
            "feature grids differ: {}x{} vs {}x{}",
            f1.height(),
            f1.width(),
            f2.height(),
            f2.width()
        )));
    }
    if f1.channels() != f2.channels() {
        return Err(Error::InvalidArgument(format!(
            "feature channel counts differ: {} vs {}",
            f1.channels(),
            f2.channels()
        )));
    }
    Ok((f1.height(), f1.width(), f1.channels()))
}

/// `C = f1 . f2^T / sqrt(c)` over flattened cells.
pub fn cost_volume(f1: &FeatureMap, f2: &FeatureMap) -> Result<CostVolume> {
    let (h, w, c) = check_same_grid(f1, f2)?;
    let a = f1.as_rows();
    let b = f2.as_rows();
    let data = a.dot(&b.t()) / (c as f64).sqrt();
    Ok(CostVolume { data, h, w })
}

/// Tape version over `(h*w) x c` token matrices.
pub fn cost_volume_on_tape(tape: &mut Tape, t1: Var, t2: Var) -> Var {
    let c = tape.value(t1).shape()[1];
    let t2t = tape.transpose2(t2);
    let prod = tape.matmul(t1, t2t);
    tape.scale(prod, 1.0 / (c as f64).sqrt())
}

/// Number of candidates per source cell for a grid of `cells` cells.
pub fn candidate_count(fraction: f64, cells: usize) -> usize {
    ((fraction * cells as f64).ceil() as usize).max(1)
}

/// Marks, per source cell, the top-fraction target cells by cosine
/// similarity of frozen semantic features. Ties at the cut keep the
/// smaller row-major index. The mask is a constant: no gradient flows
/// through candidate selection.
pub fn candidate_mask(
    fs1: &FeatureMap,
    fs2: &FeatureMap,
    fraction: f64,
) -> Result<CandidateMask> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "candidate fraction must be in (0, 1], got {fraction}"
        )));
    }
    let (h, w, _) = check_same_grid(fs1, fs2)?;
    let n = h * w;
    let per_cell = candidate_count(fraction, n);

    let a = normalize_rows(&fs1.as_rows());
    let b = normalize_rows(&fs2.as_rows());
    let sim = a.dot(&b.t());

    let mut data = Array2::from_elem((n, n), false);
    let mut idx: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        idx.clear();
        idx.extend(0..n);
        let row = sim.row(i);
        // Higher similarity first; ties keep the smaller index.
        let cmp = |x: &usize, y: &usize| {
            row[*y]
                .total_cmp(&row[*x])
                .then_with(|| x.cmp(y))
        };
        if per_cell < n {
            idx.select_nth_unstable_by(per_cell - 1, cmp);
        }
        for &j in &idx[..per_cell] {
            data[[i, j]] = true;
        }
    }
    Ok(CandidateMask {
        data: Arc::new(data),
        h,
        w,
        per_cell,
    })
}

/// L2-normalizes every row; rows with near-zero norm are left unchanged.
pub fn normalize_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    out
}

/// Softmax over the masked entries of every source-cell row; off-mask
/// entries are exactly zero.
pub fn masked_softmax(c: &CostVolume, m: &CandidateMask) -> Result<MatchingDistribution> {
    if (c.h, c.w) != (m.h, m.w) {
        return Err(Error::InvalidArgument(format!(
            "cost volume grid {}x{} does not match mask grid {}x{}",
            c.h, c.w, m.h, m.w
        )));
    }
    let mut tape = Tape::new();
    let cv = tape.constant(c.data.clone().into_dyn());
    let out = tape.masked_softmax_rows(cv, m.shared());
    let data = tape
        .value(out)
        .to_owned()
        .into_dimensionality::<ndarray::Ix2>()
        .expect("2D distribution");
    Ok(MatchingDistribution {
        data,
        h: c.h,
        w: c.w,
    })
}

/// Softargmax: per source cell, expected target coordinate minus the
/// source coordinate. Output is a feature-resolution flow field.
pub fn flow_from_distribution(ct: &MatchingDistribution, grid: &PixelGrid) -> Result<FlowField> {
    if grid.height() != ct.h || grid.width() != ct.w {
        return Err(Error::InvalidArgument(format!(
            "grid {}x{} does not match distribution target raster {}x{}",
            grid.height(),
            grid.width(),
            ct.h,
            ct.w
        )));
    }
    let n = ct.h * ct.w;
    for i in 0..n {
        let s: f64 = ct.data.row(i).sum();
        if (s - 1.0).abs() > 1e-3 {
            return Err(Error::InvariantViolation(format!(
                "matching distribution row {i} sums to {s}, not 1"
            )));
        }
    }
    let g = grid.as_rows();
    let expected = ct.data.dot(&g);
    let mut flow = Array3::zeros((ct.h, ct.w, 2));
    for i in 0..ct.h {
        for j in 0..ct.w {
            let row = i * ct.w + j;
            flow[[i, j, 0]] = expected[[row, 0]] - j as f64;
            flow[[i, j, 1]] = expected[[row, 1]] - i as f64;
        }
    }
    FlowField::new(flow, FlowResolution::Feature)
}

/// Tape version: masked softmax of the cost volume followed by the
/// coordinate expectation. Returns the `(h*w) x 2` flow rows.
pub fn flow_on_tape(
    tape: &mut Tape,
    cost: Var,
    mask: Arc<Array2<bool>>,
    grid: &PixelGrid,
) -> Var {
    let dist = tape.masked_softmax_rows(cost, mask);
    let g = tape.constant(grid.as_rows().into_dyn());
    let expected = tape.matmul(dist, g);
    let src = tape.constant(grid.as_rows().into_dyn());
    tape.sub(expected, src)
}

/// Differentiable feature-to-full-resolution flow upsampling: bilinear
/// spatial resampling then scaling by the stride. Input and output are
/// row-major `N x 2` displacement rows.
pub fn upsample_flow_on_tape(
    tape: &mut Tape,
    flow_rows: Var,
    h: usize,
    w: usize,
    stride: usize,
) -> Var {
    let map = tape.reshape(flow_rows, &[h, w, 2]);
    let (hf, wf) = (h * stride, w * stride);
    let mut coords = Array2::zeros((hf * wf, 2));
    for py in 0..hf {
        for px in 0..wf {
            let row = py * wf + px;
            coords[[row, 0]] = crate::core::upsample_source_coord(px, stride);
            coords[[row, 1]] = crate::core::upsample_source_coord(py, stride);
        }
    }
    let q = tape.constant(coords.into_dyn());
    let sampled = tape.bilinear_sample(map, q);
    tape.scale(sampled, stride as f64)
}
