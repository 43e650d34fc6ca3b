//! Bilinear sampling, flow warping, and flow upsampling.
//!
//! Out-of-bounds queries clamp to the raster edge. Interpolation uses the
//! lerp form `a + t*(b - a)` so that constant rasters and exact-integer
//! queries reproduce cell values bit-for-bit.

use ndarray::Array3;

use crate::core::types::{FlowField, FlowResolution, ImageTensor};
use crate::error::{Error, Result};

/// Interpolation weights and source cells for a single 2D query.
///
/// `grad_x`/`grad_y` report whether the query was clamped on that axis,
/// in which case the value is constant in the query coordinate.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SamplePoint {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
    pub fx: f64,
    pub fy: f64,
    /// 1.0 when the x coordinate is inside `[0, w-1]`, else 0.0.
    pub grad_x: f64,
    /// 1.0 when the y coordinate is inside `[0, h-1]`, else 0.0.
    pub grad_y: f64,
}

pub(crate) fn resolve_sample_point(h: usize, w: usize, x: f64, y: f64) -> SamplePoint {
    let max_x = (w - 1) as f64;
    let max_y = (h - 1) as f64;
    let cx = x.clamp(0.0, max_x);
    let cy = y.clamp(0.0, max_y);
    let x0f = cx.floor();
    let y0f = cy.floor();
    let x0 = x0f as usize;
    let y0 = y0f as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    SamplePoint {
        x0,
        x1,
        y0,
        y1,
        fx: cx - x0f,
        fy: cy - y0f,
        grad_x: if (0.0..=max_x).contains(&x) { 1.0 } else { 0.0 },
        grad_y: if (0.0..=max_y).contains(&y) { 1.0 } else { 0.0 },
    }
}

/// Writes the interpolated value of every channel at one query point.
pub(crate) fn sample_channels<S: ndarray::Data<Elem = f64>>(
    map: &ndarray::ArrayBase<S, ndarray::Ix3>,
    p: &SamplePoint,
    out: &mut [f64],
) {
    let d = map.dim().2;
    debug_assert_eq!(out.len(), d);
    for k in 0..d {
        let a = map[[p.y0, p.x0, k]];
        let b = map[[p.y0, p.x1, k]];
        let c = map[[p.y1, p.x0, k]];
        let e = map[[p.y1, p.x1, k]];
        let top = a + p.fx * (b - a);
        let bot = c + p.fx * (e - c);
        out[k] = top + p.fy * (bot - top);
    }
}

/// Bilinearly samples a `h x w x d` raster at a raster of 2D query points.
///
/// `coords` has shape `N x 2` holding `(x, y)` pairs; the output is `N x d`.
/// Queries outside the raster clamp to the nearest edge cell.
pub fn bilinear_sample(map: &Array3<f64>, coords: &ndarray::Array2<f64>) -> Result<ndarray::Array2<f64>> {
    let (h, w, d) = map.dim();
    if coords.dim().1 != 2 {
        return Err(Error::InvalidArgument(format!(
            "coords must be N x 2, got N x {}",
            coords.dim().1
        )));
    }
    if coords.iter().any(|v| v.is_nan()) {
        return Err(Error::Computation("NaN sample coordinates".into()));
    }
    let n = coords.dim().0;
    let mut out = ndarray::Array2::zeros((n, d));
    for i in 0..n {
        let p = resolve_sample_point(h, w, coords[[i, 0]], coords[[i, 1]]);
        sample_channels(map, &p, out.row_mut(i).as_slice_mut().expect("contiguous row"));
    }
    Ok(out)
}

/// Samples a single `(x, y)` query, returning one value per channel.
pub fn bilinear_sample_point(map: &Array3<f64>, x: f64, y: f64) -> Result<Vec<f64>> {
    if x.is_nan() || y.is_nan() {
        return Err(Error::Computation("NaN sample coordinates".into()));
    }
    let (h, w, d) = map.dim();
    let p = resolve_sample_point(h, w, x, y);
    let mut out = vec![0.0; d];
    sample_channels(map, &p, &mut out);
    Ok(out)
}

/// Backward-warps a raster by a flow field at the same resolution:
/// `out[y][x] = sample(map, (x, y) + flow[y][x])`.
pub fn warp_by_flow(map: &Array3<f64>, flow: &FlowField) -> Result<Array3<f64>> {
    let (h, w, d) = map.dim();
    if flow.height() != h || flow.width() != w {
        return Err(Error::InvalidArgument(format!(
            "flow raster {}x{} does not match map raster {h}x{w}",
            flow.height(),
            flow.width()
        )));
    }
    let mut out = Array3::zeros((h, w, d));
    let mut buf = vec![0.0; d];
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = flow.at(y, x);
            let p = resolve_sample_point(h, w, x as f64 + dx, y as f64 + dy);
            sample_channels(map, &p, &mut buf);
            for k in 0..d {
                out[[y, x, k]] = buf[k];
            }
        }
    }
    Ok(out)
}

/// Warps a full-resolution image by a full-resolution flow field.
pub fn warp_image(image: &ImageTensor, flow: &FlowField) -> Result<ImageTensor> {
    if flow.resolution() != FlowResolution::Full {
        return Err(Error::InvalidArgument(
            "warp_image needs a full-resolution flow".into(),
        ));
    }
    ImageTensor::new(warp_by_flow(image.data(), flow)?)
}

/// Feature-grid coordinate sampled by full-resolution pixel `p` under
/// stride `s`, with cell centers at integers on both rasters.
#[inline]
pub(crate) fn upsample_source_coord(p: usize, stride: usize) -> f64 {
    (p as f64 + 0.5) / stride as f64 - 0.5
}

/// Upsamples a feature-resolution flow to full resolution.
///
/// Displacements are bilinearly resampled spatially and multiplied by the
/// stride so the result is in full-image pixel units.
pub fn upsample_flow(flow: &FlowField, stride: usize) -> Result<FlowField> {
    if flow.resolution() != FlowResolution::Feature {
        return Err(Error::InvalidArgument(
            "upsample_flow expects a feature-resolution flow".into(),
        ));
    }
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be positive".into()));
    }
    let (h, w, _) = flow.data().dim();
    let (hf, wf) = (h * stride, w * stride);
    let s = stride as f64;
    let mut out = Array3::zeros((hf, wf, 2));
    let mut buf = [0.0; 2];
    for py in 0..hf {
        let sy = upsample_source_coord(py, stride);
        for px in 0..wf {
            let sx = upsample_source_coord(px, stride);
            let p = resolve_sample_point(h, w, sx, sy);
            sample_channels(flow.data(), &p, &mut buf);
            out[[py, px, 0]] = buf[0] * s;
            out[[py, px, 1]] = buf[1] * s;
        }
    }
    FlowField::new(out, FlowResolution::Full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, Array3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ramp_map(h: usize, w: usize) -> Array3<f64> {
        // v(x, y) = x in channel 0, y in channel 1
        let mut m = Array3::zeros((h, w, 2));
        for y in 0..h {
            for x in 0..w {
                m[[y, x, 0]] = x as f64;
                m[[y, x, 1]] = y as f64;
            }
        }
        m
    }

    #[test]
    fn integer_coords_hit_exact_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut m = Array3::zeros((4, 5, 3));
        m.iter_mut().for_each(|v| *v = rng.random::<f64>());
        for y in 0..4 {
            for x in 0..5 {
                let got = bilinear_sample_point(&m, x as f64, y as f64).unwrap();
                for k in 0..3 {
                    assert_eq!(got[k], m[[y, x, k]]);
                }
            }
        }
    }

    #[test]
    fn linear_ramp_midpoint() {
        let m = ramp_map(2, 3);
        let got = bilinear_sample_point(&m, 1.5, 0.0).unwrap();
        assert_eq!(got[0], 1.5);
        assert_eq!(got[1], 0.0);
    }

    #[test]
    fn out_of_bounds_clamps_to_corner() {
        let m = ramp_map(3, 3);
        let got = bilinear_sample_point(&m, -3.0, -3.0).unwrap();
        assert_eq!(got[0], 0.0);
        assert_eq!(got[1], 0.0);
        let far = bilinear_sample_point(&m, 99.0, 99.0).unwrap();
        assert_eq!(far[0], 2.0);
        assert_eq!(far[1], 2.0);
    }

    #[test]
    fn nan_coords_rejected() {
        let m = ramp_map(2, 2);
        assert!(bilinear_sample_point(&m, f64::NAN, 0.0).is_err());
        let coords = Array2::from_shape_vec((1, 2), vec![0.0, f64::NAN]).unwrap();
        assert!(bilinear_sample(&m, &coords).is_err());
    }

    #[test]
    fn zero_flow_warp_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = Array3::zeros((5, 4, 3));
        m.iter_mut().for_each(|v| *v = rng.random::<f64>());
        let flow = FlowField::zeros(5, 4, FlowResolution::Feature);
        let out = warp_by_flow(&m, &flow).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn integer_shift_warp_copies_cells() {
        let m = ramp_map(4, 4);
        let mut f = Array3::zeros((4, 4, 2));
        f.slice_mut(ndarray::s![.., .., 0]).fill(1.0);
        let flow = FlowField::new(f, FlowResolution::Feature).unwrap();
        let out = warp_by_flow(&m, &flow).unwrap();
        // In-bounds region: out[y][x] = m[y][x+1]
        for y in 0..4 {
            for x in 0..3 {
                assert_eq!(out[[y, x, 0]], m[[y, x + 1, 0]]);
                assert_eq!(out[[y, x, 1]], m[[y, x + 1, 1]]);
            }
        }
    }

    #[test]
    fn random_subpixel_warp_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut m = Array3::zeros((4, 4, 2));
        m.iter_mut().for_each(|v| *v = rng.random::<f64>());
        let mut f = Array3::zeros((4, 4, 2));
        f.iter_mut()
            .for_each(|v| *v = rng.random_range(-1.5..1.5));
        let flow = FlowField::new(f.clone(), FlowResolution::Feature).unwrap();
        let out = warp_by_flow(&m, &flow).unwrap();

        // Independent per-pixel interpolation oracle in weight form.
        for y in 0..4 {
            for x in 0..4 {
                let qx = (x as f64 + f[[y, x, 0]]).clamp(0.0, 3.0);
                let qy = (y as f64 + f[[y, x, 1]]).clamp(0.0, 3.0);
                let x0 = qx.floor() as usize;
                let y0 = qy.floor() as usize;
                let x1 = (x0 + 1).min(3);
                let y1 = (y0 + 1).min(3);
                let wx = qx - x0 as f64;
                let wy = qy - y0 as f64;
                for k in 0..2 {
                    let expect = m[[y0, x0, k]] * (1.0 - wx) * (1.0 - wy)
                        + m[[y0, x1, k]] * wx * (1.0 - wy)
                        + m[[y1, x0, k]] * (1.0 - wx) * wy
                        + m[[y1, x1, k]] * wx * wy;
                    assert!((out[[y, x, k]] - expect).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn warp_dimension_mismatch_is_error() {
        let m = ramp_map(4, 4);
        let flow = FlowField::zeros(3, 4, FlowResolution::Feature);
        assert!(warp_by_flow(&m, &flow).is_err());
    }

    #[test]
    fn upsample_constant_flow_is_exact() {
        let mut f = Array3::zeros((4, 4, 2));
        f.slice_mut(ndarray::s![.., .., 0]).fill(1.0);
        f.slice_mut(ndarray::s![.., .., 1]).fill(1.0);
        let flow = FlowField::new(f, FlowResolution::Feature).unwrap();
        let up = upsample_flow(&flow, 8).unwrap();
        assert_eq!(up.height(), 32);
        assert_eq!(up.width(), 32);
        for y in 0..32 {
            for x in 0..32 {
                assert_eq!(up.at(y, x), (8.0, 8.0));
            }
        }
    }

    #[test]
    fn upsample_zero_flow_is_zero() {
        let flow = FlowField::zeros(2, 3, FlowResolution::Feature);
        let up = upsample_flow(&flow, 8).unwrap();
        assert!(up.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn upsample_linear_flow_matches_scalar_oracle() {
        // flow dx varies linearly with cell x; bilinear resampling of a
        // linear field is the same linear field away from clamped borders.
        let mut f = Array3::zeros((4, 6, 2));
        for y in 0..4 {
            for x in 0..6 {
                f[[y, x, 0]] = 0.5 * x as f64;
                f[[y, x, 1]] = -0.25 * y as f64;
            }
        }
        let flow = FlowField::new(f.clone(), FlowResolution::Feature).unwrap();
        let up = upsample_flow(&flow, 8).unwrap();
        for py in 0..32 {
            for px in 0..48 {
                let sx = (px as f64 + 0.5) / 8.0 - 0.5;
                let sy = (py as f64 + 0.5) / 8.0 - 0.5;
                // scalar oracle: clamp, gather 4 cells, weight form, scale by 8
                let cx = sx.clamp(0.0, 5.0);
                let cy = sy.clamp(0.0, 3.0);
                let x0 = cx.floor() as usize;
                let y0 = cy.floor() as usize;
                let x1 = (x0 + 1).min(5);
                let y1 = (y0 + 1).min(3);
                let wx = cx - x0 as f64;
                let wy = cy - y0 as f64;
                for k in 0..2 {
                    let v = f[[y0, x0, k]] * (1.0 - wx) * (1.0 - wy)
                        + f[[y0, x1, k]] * wx * (1.0 - wy)
                        + f[[y1, x0, k]] * (1.0 - wx) * wy
                        + f[[y1, x1, k]] * wx * wy;
                    let got = if k == 0 { up.at(py, px).0 } else { up.at(py, px).1 };
                    assert!((got - v * 8.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn bilinear_is_linear_in_map_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut m1 = Array3::zeros((4, 4, 2));
        let mut m2 = Array3::zeros((4, 4, 2));
        m1.iter_mut().for_each(|v| *v = rng.random::<f64>());
        m2.iter_mut().for_each(|v| *v = rng.random::<f64>());
        let (a, b) = (0.7, -1.3);
        let combo = a * &m1 + b * &m2;
        for _ in 0..50 {
            let x = rng.random_range(-1.0..4.5);
            let y = rng.random_range(-1.0..4.5);
            let s1 = bilinear_sample_point(&m1, x, y).unwrap();
            let s2 = bilinear_sample_point(&m2, x, y).unwrap();
            let sc = bilinear_sample_point(&combo, x, y).unwrap();
            for k in 0..2 {
                assert!((sc[k] - (a * s1[k] + b * s2[k])).abs() < 1e-6);
            }
        }
    }
}
