//! Raster loading, saving, and resizing. Images are RGB in [0, 1]; depth
//! rasters are 16-bit grayscale in millimeters, converted to meters.

use std::path::Path;

use image::GenericImageView;
use ndarray::{Array2, Array3};

use crate::core::ImageTensor;
use crate::error::{Error, Result};

/// Millimeter-to-meter conversion for stored depth rasters.
const DEPTH_SCALE: f64 = 1000.0;

pub fn load_image(path: &Path) -> Result<ImageTensor> {
    let img = image::open(path)
        .map_err(|e| Error::Data(format!("cannot read image {}: {e}", path.display())))?;
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut data = Array3::zeros((h, w, 3));
    for (x, y, p) in rgb.enumerate_pixels() {
        for c in 0..3 {
            data[[y as usize, x as usize, c]] = p.0[c] as f64 / 255.0;
        }
    }
    ImageTensor::new(data)
}

pub fn save_image(path: &Path, img: &ImageTensor) -> Result<()> {
    let (h, w) = (img.height(), img.width());
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for (x, y, p) in buf.enumerate_pixels_mut() {
        for c in 0..3 {
            let v = img.data()[[y as usize, x as usize, c]];
            p.0[c] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    buf.save(path)
        .map_err(|e| Error::Data(format!("cannot write image {}: {e}", path.display())))
}

/// Reads a 16-bit depth raster; values are millimeters, zero marks invalid
/// pixels and is preserved as 0.0.
pub fn load_depth_meters(path: &Path) -> Result<Array2<f64>> {
    let img = image::open(path)
        .map_err(|e| Error::Data(format!("cannot read depth {}: {e}", path.display())))?;
    let (w, h) = img.dimensions();
    let gray = img.into_luma16();
    let mut out = Array2::zeros((h as usize, w as usize));
    for (x, y, p) in gray.enumerate_pixels() {
        out[[y as usize, x as usize]] = p.0[0] as f64 / DEPTH_SCALE;
    }
    Ok(out)
}

/// Writes depth in meters as a 16-bit grayscale PNG in millimeters.
/// Values round to the nearest millimeter; zeros stay zero (invalid).
pub fn save_depth_meters(path: &Path, depth: &Array2<f64>) -> Result<()> {
    let (h, w) = depth.dim();
    let mut img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(w as u32, h as u32);
    for (x, y, p) in img.enumerate_pixels_mut() {
        let mm = (depth[[y as usize, x as usize]] * DEPTH_SCALE)
            .round()
            .clamp(0.0, u16::MAX as f64);
        p.0[0] = mm as u16;
    }
    img.save(path)
        .map_err(|e| Error::Data(format!("cannot write depth {}: {e}", path.display())))
}

/// Bilinear resize with proportional center alignment; resizing to the
/// original size is an exact copy.
pub fn resize_image(img: &ImageTensor, new_h: usize, new_w: usize) -> Result<ImageTensor> {
    if new_h == 0 || new_w == 0 {
        return Err(Error::InvalidArgument("resize target must be nonzero".into()));
    }
    let (h, w) = (img.height(), img.width());
    let mut out = Array3::zeros((new_h, new_w, 3));
    let max_x = (w - 1) as f64;
    let max_y = (h - 1) as f64;
    for y in 0..new_h {
        let sy = ((y as f64 + 0.5) * h as f64 / new_h as f64 - 0.5).clamp(0.0, max_y);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = sy - y0 as f64;
        for x in 0..new_w {
            let sx = ((x as f64 + 0.5) * w as f64 / new_w as f64 - 0.5).clamp(0.0, max_x);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = sx - x0 as f64;
            for c in 0..3 {
                let a = img.data()[[y0, x0, c]];
                let b = img.data()[[y0, x1, c]];
                let d = img.data()[[y1, x0, c]];
                let e = img.data()[[y1, x1, c]];
                let top = a + fx * (b - a);
                let bot = d + fx * (e - d);
                out[[y, x, c]] = top + fy * (bot - top);
            }
        }
    }
    ImageTensor::new(out)
}

/// Nearest-neighbor resize for rasters where interpolation would invent
/// values: depth maps keep their holes, masks stay boolean. Uses the same
/// center-aligned coordinate mapping as the bilinear image resize.
pub fn resize_nearest<T: Copy>(src: &Array2<T>, new_h: usize, new_w: usize) -> Result<Array2<T>> {
    if new_h == 0 || new_w == 0 {
        return Err(Error::InvalidArgument("resize target must be nonzero".into()));
    }
    let (h, w) = src.dim();
    let mut out = Array2::from_elem((new_h, new_w), src[[0, 0]]);
    for y in 0..new_h {
        let sy = ((y as f64 + 0.5) * h as f64 / new_h as f64 - 0.5)
            .round()
            .clamp(0.0, (h - 1) as f64) as usize;
        for x in 0..new_w {
            let sx = ((x as f64 + 0.5) * w as f64 / new_w as f64 - 0.5)
                .round()
                .clamp(0.0, (w - 1) as f64) as usize;
            out[[y, x]] = src[[sy, sx]];
        }
    }
    Ok(out)
}

/// Scales so the shorter side equals `target`, preserving aspect ratio.
pub fn resize_shorter_side(img: &ImageTensor, target: usize) -> Result<ImageTensor> {
    if target == 0 {
        return Err(Error::InvalidArgument("resize target must be nonzero".into()));
    }
    let (h, w) = (img.height(), img.width());
    let scale = target as f64 / h.min(w) as f64;
    let (new_h, new_w) = if h <= w {
        (target, (w as f64 * scale).round().max(1.0) as usize)
    } else {
        ((h as f64 * scale).round().max(1.0) as usize, target)
    };
    resize_image(img, new_h, new_w)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn quantized_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ImageTensor {
        let mut d = Array3::zeros((h, w, 3));
        d.iter_mut()
            .for_each(|v| *v = rng.random_range(0..=255u32) as f64 / 255.0);
        ImageTensor::new(d).unwrap()
    }

    #[test]
    fn image_round_trip_preserves_8bit_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let img = quantized_image(&mut rng, 12, 17);
        save_image(&path, &img).unwrap();
        let back = load_image(&path).unwrap();
        for (a, b) in img.data().iter().zip(back.data().iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn depth_round_trip_is_millimeter_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        let mut buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(4, 3);
        buf.put_pixel(0, 0, image::Luma([1500u16]));
        buf.put_pixel(3, 2, image::Luma([65535u16]));
        buf.save(&path).unwrap();
        let d = load_depth_meters(&path).unwrap();
        assert_eq!(d.dim(), (3, 4));
        assert_eq!(d[[0, 0]], 1.5);
        assert_eq!(d[[2, 3]], 65.535);
        assert_eq!(d[[1, 1]], 0.0);
    }

    #[test]
    fn saved_depth_reloads_millimeter_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        let mut depth = Array2::zeros((3, 4));
        depth[[0, 0]] = 1.5;
        depth[[2, 3]] = 0.072;
        depth[[1, 2]] = 0.0; // invalid stays invalid
        save_depth_meters(&path, &depth).unwrap();
        let back = load_depth_meters(&path).unwrap();
        assert_eq!(back, depth);
    }

    #[test]
    fn nearest_resize_preserves_values_and_holes() {
        let mut depth = Array2::zeros((4, 6));
        depth[[1, 2]] = 2.25;
        depth[[3, 5]] = 0.0;
        depth[[0, 0]] = 1.0;
        let up = resize_nearest(&depth, 8, 12).unwrap();
        // every output value exists in the input
        for &v in up.iter() {
            assert!(depth.iter().any(|&s| s == v));
        }
        // identity resize is an exact copy
        assert_eq!(resize_nearest(&depth, 4, 6).unwrap(), depth);
        // 2x upsample replicates each source cell into a 2x2 block
        assert_eq!(up[[2, 4]], 2.25);
        assert_eq!(up[[3, 5]], 2.25);
        // boolean rasters resize the same way
        let mask = Array2::from_shape_fn((4, 6), |(y, x)| (y + x) % 2 == 0);
        let half = resize_nearest(&mask, 2, 3).unwrap();
        assert_eq!(half.dim(), (2, 3));
    }

    #[test]
    fn resize_to_same_size_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = quantized_image(&mut rng, 9, 13);
        let out = resize_image(&img, 9, 13).unwrap();
        assert_eq!(img.data(), out.data());
    }

    #[test]
    fn shorter_side_resize_preserves_aspect() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = quantized_image(&mut rng, 480, 640);
        let out = resize_shorter_side(&img, 288).unwrap();
        assert_eq!((out.height(), out.width()), (288, 384));
        let tall = quantized_image(&mut rng, 640, 480);
        let out = resize_shorter_side(&tall, 288).unwrap();
        assert_eq!((out.height(), out.width()), (384, 288));
    }

    #[test]
    fn resize_of_constant_image_stays_constant() {
        let img = ImageTensor::new(Array3::from_elem((10, 20, 3), 0.4)).unwrap();
        let out = resize_image(&img, 7, 5).unwrap();
        for v in out.data().iter() {
            assert!((v - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn downscale_by_two_averages_neighbors() {
        // With proportional alignment, a 2x downscale lands each target
        // center exactly between two source centers.
        let mut d = Array3::zeros((2, 4, 3));
        for x in 0..4 {
            for c in 0..3 {
                d[[0, x, c]] = x as f64 / 10.0;
                d[[1, x, c]] = x as f64 / 10.0;
            }
        }
        let img = ImageTensor::new(d).unwrap();
        let out = resize_image(&img, 1, 2).unwrap();
        assert!((out.data()[[0, 0, 0]] - 0.05).abs() < 1e-12);
        assert!((out.data()[[0, 1, 0]] - 0.25).abs() < 1e-12);
    }
}
