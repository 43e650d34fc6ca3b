//! Frozen semantic feature extraction behind a backend interface.
//!
//! The hermetic backend is a deterministic hand-crafted descriptor: per
//! stride-8 cell it concatenates mean color, a 12-bin color histogram, and
//! a downweighted normalized position, then applies a fixed random
//! projection to `c'` channels. No gradients ever flow through a
//! [`SemanticEncoder`]; callers treat its outputs as constants.

use ndarray::{Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::core::{bilinear_sample, FeatureMap, ImageTensor, FEATURE_STRIDE};
use crate::error::{Error, Result};

/// A frozen image-to-feature-map extractor at the shared stride-8 grid.
pub trait SemanticEncoder: Send + Sync {
    fn channels(&self) -> usize;
    /// Same input, same output, always; the map carries no gradient.
    fn features(&self, image: &ImageTensor) -> Result<FeatureMap>;
    /// Stable digest of the frozen definition, for training-time audits.
    fn checksum(&self) -> u64;
}

const DESCRIPTOR_DIM: usize = 17; // 3 mean color + 12 histogram + 2 position
const HIST_BINS: usize = 4;
const POSITION_WEIGHT: f64 = 0.25;
const PROJECTION_SEED: u64 = 0x00d0_d0fe;

/// Deterministic hand-crafted backend for hermetic tests and desk-scale runs.
pub struct HandcraftedSemantic {
    channels: usize,
    projection: Array2<f64>,
}

impl HandcraftedSemantic {
    pub fn new(channels: usize) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Config("semantic channels must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(PROJECTION_SEED);
        let dist = Normal::new(0.0, (1.0 / DESCRIPTOR_DIM as f64).sqrt()).expect("valid normal");
        let projection =
            Array2::from_shape_simple_fn((DESCRIPTOR_DIM, channels), || dist.sample(&mut rng));
        Ok(Self {
            channels,
            projection,
        })
    }
}

impl SemanticEncoder for HandcraftedSemantic {
    fn channels(&self) -> usize {
        self.channels
    }

    fn checksum(&self) -> u64 {
        let mut h = crate::autodiff::Fnv1a::new();
        h.update(&(self.channels as u64).to_le_bytes());
        for v in self.projection.iter() {
            h.update(&v.to_le_bytes());
        }
        h.finish()
    }

    fn features(&self, image: &ImageTensor) -> Result<FeatureMap> {
        if !image.stride_aligned() {
            return Err(Error::InvalidArgument(format!(
                "image dimensions {}x{} not divisible by {FEATURE_STRIDE}",
                image.height(),
                image.width()
            )));
        }
        let s = FEATURE_STRIDE;
        let (h, w) = (image.height() / s, image.width() / s);
        let mut out = Array3::zeros((h, w, self.channels));
        let mut desc = [0.0; DESCRIPTOR_DIM];
        for cy in 0..h {
            for cx in 0..w {
                desc.fill(0.0);
                let npix = (s * s) as f64;
                for py in cy * s..(cy + 1) * s {
                    for px in cx * s..(cx + 1) * s {
                        for ch in 0..3 {
                            let v = image.data()[[py, px, ch]];
                            desc[ch] += v / npix;
                            let bin = ((v * HIST_BINS as f64) as usize).min(HIST_BINS - 1);
                            desc[3 + ch * HIST_BINS + bin] += 1.0 / npix;
                        }
                    }
                }
                desc[15] = POSITION_WEIGHT * cx as f64 / w.max(2).saturating_sub(1) as f64;
                desc[16] = POSITION_WEIGHT * cy as f64 / h.max(2).saturating_sub(1) as f64;
                for k in 0..self.channels {
                    let mut acc = 0.0;
                    for (d, dv) in desc.iter().enumerate() {
                        acc += dv * self.projection[[d, k]];
                    }
                    out[[cy, cx, k]] = acc;
                }
            }
        }
        FeatureMap::new(out, s)
    }
}

/// Bilinearly resamples a feature map whose native grid differs from the
/// target `h x w` grid, aligning cell centers proportionally.
pub fn resample_feature_map(map: &FeatureMap, h: usize, w: usize) -> Result<FeatureMap> {
    let (sh, sw, c) = (map.height(), map.width(), map.channels());
    if (sh, sw) == (h, w) {
        return FeatureMap::new(map.data().clone(), map.stride());
    }
    let mut coords = Array2::zeros((h * w, 2));
    for y in 0..h {
        for x in 0..w {
            let row = y * w + x;
            coords[[row, 0]] = (x as f64 + 0.5) * sw as f64 / w as f64 - 0.5;
            coords[[row, 1]] = (y as f64 + 0.5) * sh as f64 / h as f64 - 0.5;
        }
    }
    let sampled = bilinear_sample(map.data(), &coords)?;
    let mut out = Array3::zeros((h, w, c));
    for y in 0..h {
        for x in 0..w {
            for k in 0..c {
                out[[y, x, k]] = sampled[[y * w + x, k]];
            }
        }
    }
    FeatureMap::new(out, map.stride())
}
