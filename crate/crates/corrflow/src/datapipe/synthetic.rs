//! Procedural textured frames with known ground-truth motion, used by the
//! self-contained examples and the learning tests.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::core::{
    backproject, bilinear_sample_point, project, CameraIntrinsics, FlowField, FlowResolution,
    ImageTensor, Point2D,
};
use crate::error::{Error, Result};

use super::annotations::ArticulatedPairAnnotation;
use super::index::crop_image;

/// Multi-octave value noise: smooth at large scales with fine detail on
/// top, deterministic in the seed, range [0, 1] per channel.
pub fn value_noise_texture(h: usize, w: usize, octaves: usize, seed: u64) -> ImageTensor {
    let octaves = octaves.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Array3::zeros((h, w, 3));
    let mut total_amp = 0.0;
    for k in 0..octaves {
        let cell = 1usize << (octaves - k);
        let amp = 0.5f64.powi(k as i32);
        total_amp += amp;
        let (lh, lw) = (h / cell + 2, w / cell + 2);
        let mut lattice = Array3::zeros((lh, lw, 3));
        lattice.iter_mut().for_each(|v| *v = rng.random::<f64>());
        for y in 0..h {
            let fy = y as f64 / cell as f64;
            let y0 = fy.floor() as usize;
            let ty = fy - y0 as f64;
            for x in 0..w {
                let fx = x as f64 / cell as f64;
                let x0 = fx.floor() as usize;
                let tx = fx - x0 as f64;
                for c in 0..3 {
                    let a = lattice[[y0, x0, c]];
                    let b = lattice[[y0, x0 + 1, c]];
                    let d = lattice[[y0 + 1, x0, c]];
                    let e = lattice[[y0 + 1, x0 + 1, c]];
                    let top = a + tx * (b - a);
                    let bot = d + tx * (e - d);
                    data[[y, x, c]] += amp * (top + ty * (bot - top));
                }
            }
        }
    }
    data.mapv_inplace(|v| v / total_amp);
    ImageTensor::new(data).expect("finite noise")
}

/// A frame pair cut from one texture with a known constant displacement.
pub struct SyntheticPair {
    pub i1: ImageTensor,
    pub i2: ImageTensor,
    /// Ground-truth displacement from `i1` to `i2`, pixels `(x, y)`.
    pub flow: (f64, f64),
}

/// Crops the texture at two offsets. Content at `p` in the first crop
/// appears at `p + (o1 - o2)` in the second, so that difference is the
/// exact ground-truth flow.
pub fn translated_crop_pair(
    texture: &ImageTensor,
    size: usize,
    o1_yx: (usize, usize),
    o2_yx: (usize, usize),
) -> Result<SyntheticPair> {
    let i1 = crop_image(texture, o1_yx.0, o1_yx.1, size)?;
    let i2 = crop_image(texture, o2_yx.0, o2_yx.1, size)?;
    Ok(SyntheticPair {
        i1,
        i2,
        flow: (
            o1_yx.1 as f64 - o2_yx.1 as f64,
            o1_yx.0 as f64 - o2_yx.0 as f64,
        ),
    })
}

/// Random integer translation up to `max_shift` pixels per axis.
pub fn random_translated_pair(
    texture: &ImageTensor,
    size: usize,
    max_shift: usize,
    rng: &mut impl Rng,
) -> Result<SyntheticPair> {
    let (h, w) = (texture.height(), texture.width());
    if size + 2 * max_shift > h.min(w) {
        return Err(Error::InvalidArgument(format!(
            "texture {h}x{w} too small for {size} crops shifted by {max_shift}"
        )));
    }
    let y1 = rng.random_range(max_shift..h - size - max_shift + 1);
    let x1 = rng.random_range(max_shift..w - size - max_shift + 1);
    let dy = rng.random_range(0..=2 * max_shift) as i64 - max_shift as i64;
    let dx = rng.random_range(0..=2 * max_shift) as i64 - max_shift as i64;
    let y2 = (y1 as i64 + dy) as usize;
    let x2 = (x1 as i64 + dx) as usize;
    translated_crop_pair(texture, size, (y1, x1), (y2, x2))
}

fn quantize_to_channel_depth(img: ImageTensor) -> ImageTensor {
    let mut data = img.data().clone();
    data.mapv_inplace(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0);
    ImageTensor::new(data).expect("finite quantized image")
}

/// A rendered revolute-motion RGB-D pair with exact annotations and the
/// exact forward flow. The moving part is the textured rectangle
/// `mask_rect = (y0, x0, height, width)` rotating by `angle_deg` about the
/// optical-axis direction through the pixel `pivot_px`, all at constant
/// depth `depth_m`, so every ground-truth quantity is closed-form. The
/// caller picks geometry that keeps the rotated part inside the raster.
pub fn synthetic_revolute_instance(
    h: usize,
    w: usize,
    k: &CameraIntrinsics,
    depth_m: f64,
    pivot_px: (f64, f64),
    angle_deg: f64,
    mask_rect: (usize, usize, usize, usize),
    seed: u64,
) -> Result<(ArticulatedPairAnnotation, FlowField)> {
    k.validate()?;
    if !(depth_m > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "depth must be positive, got {depth_m}"
        )));
    }
    let (my0, mx0, mh, mw) = mask_rect;
    if mh == 0 || mw == 0 || my0 + mh > h || mx0 + mw > w {
        return Err(Error::InvalidArgument(format!(
            "mask rect {mh}x{mw} at ({my0}, {mx0}) does not fit a {h}x{w} raster"
        )));
    }
    let pivot3 = backproject(Point2D::new(pivot_px.0, pivot_px.1), depth_m, k)?;
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    // rotation about the optical-axis direction keeps z fixed
    let spin = move |p: Point2D, sin: f64| -> Result<Point2D> {
        let s = backproject(p, depth_m, k)?;
        let (rx, ry) = (s.x - pivot3.x, s.y - pivot3.y);
        let m = crate::core::Point3D::new(
            pivot3.x + rx * cos - ry * sin,
            pivot3.y + rx * sin + ry * cos,
            depth_m,
        );
        project(m, k)
    };

    let rgb_0 = quantize_to_channel_depth(value_noise_texture(h, w, 5, seed));
    let part_mask = Array2::from_shape_fn((h, w), |(y, x)| {
        y >= my0 && y < my0 + mh && x >= mx0 && x < mx0 + mw
    });

    let mut flow = Array3::zeros((h, w, 2));
    for y in 0..h {
        for x in 0..w {
            if !part_mask[[y, x]] {
                continue;
            }
            let q = Point2D::new(x as f64, y as f64);
            let p = spin(q, sin)?;
            flow[[y, x, 0]] = p.x - q.x;
            flow[[y, x, 1]] = p.y - q.y;
        }
    }

    // frame 1 appearance: pixels whose inverse rotation lands on the part
    // show the rotated texture; everything else keeps the static background
    let mut rgb_1 = rgb_0.data().clone();
    for y in 0..h {
        for x in 0..w {
            let src = spin(Point2D::new(x as f64, y as f64), -sin)?;
            let on_part = src.x >= mx0 as f64 - 0.5
                && src.x < (mx0 + mw) as f64 - 0.5
                && src.y >= my0 as f64 - 0.5
                && src.y < (my0 + mh) as f64 - 0.5;
            if on_part {
                let v = bilinear_sample_point(rgb_0.data(), src.x, src.y)?;
                for c in 0..3 {
                    rgb_1[[y, x, c]] = v[c];
                }
            }
        }
    }
    let rgb_1 = quantize_to_channel_depth(ImageTensor::new(rgb_1)?);

    let depth = Array2::from_elem((h, w), depth_m);
    let inst = ArticulatedPairAnnotation {
        rgb: [rgb_0, rgb_1],
        depth: [depth.clone(), depth],
        intrinsics: *k,
        part_mask,
        gt_axis: [0.0, 0.0, 1.0],
        gt_pivot: [pivot3.x, pivot3.y, pivot3.z],
        gt_angle_deg: angle_deg,
    };
    Ok((inst, FlowField::new(flow, FlowResolution::Full)?))
}
