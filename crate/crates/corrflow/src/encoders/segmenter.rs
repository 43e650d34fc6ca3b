//! Frozen region proposers behind a backend interface, plus the segment
//! stack type shared with visibility selection and the losses.

use ndarray::Array2;

use crate::core::ImageTensor;
use crate::error::{Error, Result};

/// Disjoint binary masks over one image. The union may be partial; there
/// is always at least one mask.
#[derive(Clone)]
pub struct SegmentStack {
    masks: Vec<Array2<bool>>,
    height: usize,
    width: usize,
}

impl SegmentStack {
    pub fn new(masks: Vec<Array2<bool>>) -> Result<Self> {
        let Some(first) = masks.first() else {
            return Err(Error::InvalidArgument("segment stack is empty".into()));
        };
        let (height, width) = first.dim();
        let mut claimed = Array2::<bool>::from_elem((height, width), false);
        for (i, m) in masks.iter().enumerate() {
            if m.dim() != (height, width) {
                return Err(Error::InvalidArgument(format!(
                    "segment {i} shape {:?} differs from {:?}",
                    m.dim(),
                    (height, width)
                )));
            }
            for (c, &v) in claimed.iter_mut().zip(m.iter()) {
                if v {
                    if *c {
                        return Err(Error::InvariantViolation(
                            "segments overlap".into(),
                        ));
                    }
                    *c = true;
                }
            }
        }
        Ok(Self {
            masks,
            height,
            width,
        })
    }

    /// Single mask covering the whole raster (degenerate fallback).
    pub fn full_image(height: usize, width: usize) -> Self {
        Self {
            masks: vec![Array2::from_elem((height, width), true)],
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn mask(&self, i: usize) -> &Array2<bool> {
        &self.masks[i]
    }

    pub fn masks(&self) -> &[Array2<bool>] {
        &self.masks
    }

    pub fn area(&self, i: usize) -> usize {
        self.masks[i].iter().filter(|v| **v).count()
    }

    /// Majority-downsamples every segment to a `stride`-times smaller grid.
    /// Downsampled segments may be empty; disjointness is preserved because
    /// at most one segment can hold a strict majority of a cell.
    pub fn downsample(&self, stride: usize) -> Result<SegmentStack> {
        let masks = self
            .masks
            .iter()
            .map(|m| downsample_majority(m, stride))
            .collect::<Result<Vec<_>>>()?;
        let (height, width) = masks[0].dim();
        Ok(SegmentStack {
            masks,
            height,
            width,
        })
    }
}

/// A cell of the coarse grid is set iff more than half of its `stride x
/// stride` source pixels are set.
pub fn downsample_majority(mask: &Array2<bool>, stride: usize) -> Result<Array2<bool>> {
    let (hf, wf) = mask.dim();
    if stride == 0 || hf % stride != 0 || wf % stride != 0 {
        return Err(Error::InvalidArgument(format!(
            "mask {hf}x{wf} not divisible by stride {stride}"
        )));
    }
    let (h, w) = (hf / stride, wf / stride);
    let half = (stride * stride) / 2;
    let mut out = Array2::from_elem((h, w), false);
    for cy in 0..h {
        for cx in 0..w {
            let mut count = 0;
            for py in cy * stride..(cy + 1) * stride {
                for px in cx * stride..(cx + 1) * stride {
                    count += usize::from(mask[[py, px]]);
                }
            }
            out[[cy, cx]] = count > half;
        }
    }
    Ok(out)
}

/// A frozen proposer of disjoint image regions.
pub trait Segmenter: Send + Sync {
    fn segment(&self, image: &ImageTensor) -> Result<SegmentStack>;
    /// Stable digest of the frozen definition, for training-time audits.
    fn checksum(&self) -> u64;
}

/// Color quantization followed by 4-connected components; components are
/// kept largest-first up to `max_regions`.
pub struct ColorRegionSegmenter {
    pub levels: usize,
    pub max_regions: usize,
}

impl ColorRegionSegmenter {
    pub fn new(levels: usize, max_regions: usize) -> Result<Self> {
        if levels < 2 {
            return Err(Error::Config("segmenter levels must be at least 2".into()));
        }
        if max_regions == 0 {
            return Err(Error::Config("segmenter.max_regions must be positive".into()));
        }
        Ok(Self {
            levels,
            max_regions,
        })
    }
}

impl Segmenter for ColorRegionSegmenter {
    fn checksum(&self) -> u64 {
        let mut h = crate::autodiff::Fnv1a::new();
        h.update(b"color_regions");
        h.update(&(self.levels as u64).to_le_bytes());
        h.update(&(self.max_regions as u64).to_le_bytes());
        h.finish()
    }

    fn segment(&self, image: &ImageTensor) -> Result<SegmentStack> {
        let (h, w) = (image.height(), image.width());
        let lv = self.levels as f64;
        let quant = Array2::from_shape_fn((h, w), |(y, x)| {
            let mut code = 0usize;
            for ch in 0..3 {
                let v = image.data()[[y, x, ch]];
                let bin = ((v * lv) as usize).min(self.levels - 1);
                code = code * self.levels + bin;
            }
            code
        });

        // 4-connected flood fill over equal quantization codes.
        let mut label = Array2::from_elem((h, w), usize::MAX);
        let mut areas: Vec<usize> = Vec::new();
        let mut stack = Vec::new();
        for sy in 0..h {
            for sx in 0..w {
                if label[[sy, sx]] != usize::MAX {
                    continue;
                }
                let id = areas.len();
                let code = quant[[sy, sx]];
                let mut area = 0;
                stack.push((sy, sx));
                label[[sy, sx]] = id;
                while let Some((y, x)) = stack.pop() {
                    area += 1;
                    let mut visit = |ny: usize, nx: usize, label: &mut Array2<usize>| {
                        if label[[ny, nx]] == usize::MAX && quant[[ny, nx]] == code {
                            label[[ny, nx]] = id;
                            stack.push((ny, nx));
                        }
                    };
                    if y > 0 {
                        visit(y - 1, x, &mut label);
                    }
                    if y + 1 < h {
                        visit(y + 1, x, &mut label);
                    }
                    if x > 0 {
                        visit(y, x - 1, &mut label);
                    }
                    if x + 1 < w {
                        visit(y, x + 1, &mut label);
                    }
                }
                areas.push(area);
            }
        }

        if areas.is_empty() {
            return Ok(SegmentStack::full_image(h, w));
        }
        // Largest areas first; ties keep discovery (row-major) order.
        let mut order: Vec<usize> = (0..areas.len()).collect();
        order.sort_by(|a, b| areas[*b].cmp(&areas[*a]).then(a.cmp(b)));
        order.truncate(self.max_regions);
        let keep: Vec<usize> = order;
        let masks: Vec<Array2<bool>> = keep
            .iter()
            .map(|&id| Array2::from_shape_fn((h, w), |(y, x)| label[[y, x]] == id))
            .collect();
        SegmentStack::new(masks)
    }
}

/// Regular tiling into `tile x tile` squares (partial tiles at the border).
pub struct GridSegmenter {
    pub tile: usize,
    pub max_regions: usize,
}

impl GridSegmenter {
    pub fn new(tile: usize, max_regions: usize) -> Result<Self> {
        if tile == 0 {
            return Err(Error::Config("grid tile must be positive".into()));
        }
        if max_regions == 0 {
            return Err(Error::Config("segmenter.max_regions must be positive".into()));
        }
        Ok(Self { tile, max_regions })
    }
}

impl Segmenter for GridSegmenter {
    fn checksum(&self) -> u64 {
        let mut h = crate::autodiff::Fnv1a::new();
        h.update(b"grid");
        h.update(&(self.tile as u64).to_le_bytes());
        h.update(&(self.max_regions as u64).to_le_bytes());
        h.finish()
    }

    fn segment(&self, image: &ImageTensor) -> Result<SegmentStack> {
        let (h, w) = (image.height(), image.width());
        let (ty, tx) = (h.div_ceil(self.tile), w.div_ceil(self.tile));
        if ty * tx > self.max_regions {
            return Err(Error::Config(format!(
                "grid of {} tiles exceeds segmenter.max_regions {}; increase the tile size",
                ty * tx,
                self.max_regions
            )));
        }
        let mut masks = Vec::with_capacity(ty * tx);
        for gy in 0..ty {
            for gx in 0..tx {
                let mask = Array2::from_shape_fn((h, w), |(y, x)| {
                    y / self.tile == gy && x / self.tile == gx
                });
                masks.push(mask);
            }
        }
        SegmentStack::new(masks)
    }
}
