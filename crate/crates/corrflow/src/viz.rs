//! Rendered diagnostics: correspondence overlays, flow color wheels, and
//! PCA feature coloring.

use ndarray::{Array2, Array3};

use crate::core::{FlowField, FlowResolution, ImageTensor, Point2D};
use crate::error::{Error, Result};
use crate::evaluation::query_correspondence;

/// Converts HSV (hue in degrees, s and v in `[0, 1]`) to RGB in `[0, 1]`.
pub fn hsv_to_rgb(h_deg: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h_deg.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Renders a flow field as a color wheel: hue encodes direction, saturation
/// encodes magnitude relative to the largest displacement. Zero flow is
/// white everywhere.
pub fn flow_color_wheel(flow: &FlowField) -> Result<ImageTensor> {
    let (h, w) = (flow.height(), flow.width());
    let mut max_mag = 0.0f64;
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = flow.at(y, x);
            max_mag = max_mag.max(dx.hypot(dy));
        }
    }
    let mut out = Array3::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = flow.at(y, x);
            let mag = dx.hypot(dy);
            let hue = dy.atan2(dx).to_degrees();
            let sat = if max_mag > 0.0 { mag / max_mag } else { 0.0 };
            let rgb = hsv_to_rgb(hue, sat, 1.0);
            for k in 0..3 {
                out[[y, x, k]] = rgb[k];
            }
        }
    }
    ImageTensor::new(out)
}

/// A regular grid of query points with their flow-warped partners, for
/// overlay rendering. Spacing is chosen so the longer image side carries
/// about `per_side` points.
pub fn correspondence_endpoints(
    flow: &FlowField,
    per_side: usize,
) -> Result<Vec<(Point2D, Point2D)>> {
    if flow.resolution() != FlowResolution::Full {
        return Err(Error::InvalidArgument(
            "overlay rendering needs a full-resolution flow field".into(),
        ));
    }
    if per_side == 0 {
        return Err(Error::InvalidArgument("need at least one point per side".into()));
    }
    let (h, w) = (flow.height(), flow.width());
    let step = (h.max(w) as f64 / per_side as f64).ceil().max(1.0) as usize;
    let mut queries = Vec::new();
    let mut y = step / 2;
    while y < h {
        let mut x = step / 2;
        while x < w {
            queries.push(Point2D::new(x as f64, y as f64));
            x += step;
        }
        y += step;
    }
    let predictions = query_correspondence(flow, &queries)?;
    Ok(queries.into_iter().zip(predictions).collect())
}

fn put_pixel(canvas: &mut Array3<f64>, x: i64, y: i64, rgb: [f64; 3]) {
    let (h, w, _) = canvas.dim();
    if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
        return;
    }
    for k in 0..3 {
        canvas[[y as usize, x as usize, k]] = rgb[k];
    }
}

fn draw_line(canvas: &mut Array3<f64>, a: (f64, f64), b: (f64, f64), rgb: [f64; 3]) {
    let (mut x0, mut y0) = (a.0.round() as i64, a.1.round() as i64);
    let (x1, y1) = (b.0.round() as i64, b.1.round() as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        put_pixel(canvas, x0, y0, rgb);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

fn draw_dot(canvas: &mut Array3<f64>, p: (f64, f64), rgb: [f64; 3]) {
    let (x, y) = (p.0.round() as i64, p.1.round() as i64);
    for oy in -1..=1 {
        for ox in -1..=1 {
            put_pixel(canvas, x + ox, y + oy, rgb);
        }
    }
}

/// Draws source and target side by side with lines joining each grid query
/// to its predicted partner. Each query gets its own hue so individual
/// correspondences stay traceable.
pub fn correspondence_overlay(
    src: &ImageTensor,
    tgt: &ImageTensor,
    flow: &FlowField,
    per_side: usize,
) -> Result<ImageTensor> {
    if src.height() != flow.height() || src.width() != flow.width() {
        return Err(Error::InvalidArgument(format!(
            "source raster {}x{} does not match flow raster {}x{}",
            src.width(),
            src.height(),
            flow.width(),
            flow.height()
        )));
    }
    if tgt.height() != src.height() || tgt.width() != src.width() {
        return Err(Error::InvalidArgument(format!(
            "target raster {}x{} does not match source raster {}x{}",
            tgt.width(),
            tgt.height(),
            src.width(),
            src.height()
        )));
    }
    let (h, w) = (src.height(), src.width());
    let mut canvas = Array3::zeros((h, 2 * w, 3));
    canvas.slice_mut(ndarray::s![.., ..w, ..]).assign(src.data());
    canvas.slice_mut(ndarray::s![.., w.., ..]).assign(tgt.data());

    let pairs = correspondence_endpoints(flow, per_side)?;
    let n = pairs.len().max(1);
    for (i, (q, p)) in pairs.iter().enumerate() {
        let rgb = hsv_to_rgb(360.0 * i as f64 / n as f64, 1.0, 1.0);
        // clamp the predicted endpoint into the target panel
        let px = p.x.clamp(0.0, (w - 1) as f64) + w as f64;
        let py = p.y.clamp(0.0, (h - 1) as f64);
        draw_line(&mut canvas, (q.x, q.y), (px, py), rgb);
        draw_dot(&mut canvas, (q.x, q.y), rgb);
        draw_dot(&mut canvas, (px, py), rgb);
    }
    ImageTensor::new(canvas)
}

/// Projects two feature-cell sets through a joint 3-component PCA and paints
/// matching feature content with matching colors, nearest-upsampled back to
/// image resolution and placed side by side.
pub fn pca_feature_panel(
    f1: &ndarray::Array2<f64>,
    f2: &ndarray::Array2<f64>,
    grid: (usize, usize),
    stride: usize,
) -> Result<ImageTensor> {
    let (gh, gw) = grid;
    let cells = gh * gw;
    if f1.nrows() != cells || f2.nrows() != cells || f1.ncols() != f2.ncols() {
        return Err(Error::InvalidArgument(format!(
            "feature rows {}x{} and {}x{} do not cover a {gh}x{gw} grid",
            f1.nrows(),
            f1.ncols(),
            f2.nrows(),
            f2.ncols()
        )));
    }
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be positive".into()));
    }
    let c = f1.ncols();
    let n = 2 * cells;
    let mut mean = vec![0.0; c];
    for row in f1.rows().into_iter().chain(f2.rows()) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = nalgebra::DMatrix::zeros(c, c);
    for row in f1.rows().into_iter().chain(f2.rows()) {
        let d = nalgebra::DVector::from_iterator(c, row.iter().zip(&mean).map(|(v, m)| v - m));
        cov += &d * d.transpose();
    }
    cov /= n as f64;
    let eig = cov.symmetric_eigen();
    // top 3 eigenvectors by eigenvalue
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let comps: Vec<nalgebra::DVector<f64>> =
        order.iter().take(3).map(|&i| eig.eigenvectors.column(i).into_owned()).collect();

    // project, then rescale each component to [0, 1] over both maps jointly
    let project = |f: &ndarray::Array2<f64>| -> Array2<f64> {
        let mut out = Array2::zeros((f.nrows(), comps.len()));
        for (r, row) in f.rows().into_iter().enumerate() {
            for (k, comp) in comps.iter().enumerate() {
                out[[r, k]] = row
                    .iter()
                    .zip(&mean)
                    .zip(comp.iter())
                    .map(|((v, m), e)| (v - m) * e)
                    .sum();
            }
        }
        out
    };
    let p1 = project(f1);
    let p2 = project(f2);
    let mut lo = vec![f64::INFINITY; comps.len()];
    let mut hi = vec![f64::NEG_INFINITY; comps.len()];
    for p in [&p1, &p2] {
        for r in 0..p.nrows() {
            for k in 0..comps.len() {
                lo[k] = lo[k].min(p[[r, k]]);
                hi[k] = hi[k].max(p[[r, k]]);
            }
        }
    }
    let mut canvas = Array3::zeros((gh * stride, 2 * gw * stride, 3));
    let mut paint = |p: &Array2<f64>, x_off: usize| {
        for gy in 0..gh {
            for gx in 0..gw {
                let r = gy * gw + gx;
                for k in 0..3 {
                    let v = if k < comps.len() && hi[k] > lo[k] {
                        (p[[r, k]] - lo[k]) / (hi[k] - lo[k])
                    } else {
                        0.5
                    };
                    for py in 0..stride {
                        for px in 0..stride {
                            canvas[[gy * stride + py, x_off + gx * stride + px, k]] = v;
                        }
                    }
                }
            }
        }
    };
    paint(&p1, 0);
    paint(&p2, gw * stride);
    ImageTensor::new(canvas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn constant_image(h: usize, w: usize, v: f64) -> ImageTensor {
        ImageTensor::new(Array3::from_elem((h, w, 3), v)).unwrap()
    }

    #[test]
    fn hsv_primaries() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), [1.0, 0.0, 0.0]);
        assert_eq!(hsv_to_rgb(120.0, 1.0, 1.0), [0.0, 1.0, 0.0]);
        assert_eq!(hsv_to_rgb(240.0, 1.0, 1.0), [0.0, 0.0, 1.0]);
        // zero saturation is white regardless of hue
        assert_eq!(hsv_to_rgb(77.0, 0.0, 1.0), [1.0, 1.0, 1.0]);
    }

    #[test]
    fn zero_flow_wheel_is_white() {
        let flow = FlowField::zeros(6, 8, FlowResolution::Full);
        let img = flow_color_wheel(&flow).unwrap();
        assert!(img.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn opposite_directions_get_different_hues() {
        let mut data = Array3::zeros((2, 2, 2));
        data[[0, 0, 0]] = 1.0; // rightward
        data[[1, 1, 0]] = -1.0; // leftward
        let flow = FlowField::new(data, FlowResolution::Full).unwrap();
        let img = flow_color_wheel(&flow).unwrap();
        let a: Vec<f64> = (0..3).map(|k| img.data()[[0, 0, k]]).collect();
        let b: Vec<f64> = (0..3).map(|k| img.data()[[1, 1, k]]).collect();
        assert_ne!(a, b);
        // both at max magnitude: fully saturated hues
        assert_eq!(a, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_flow_endpoints_coincide() {
        let flow = FlowField::zeros(24, 32, FlowResolution::Full);
        let pairs = correspondence_endpoints(&flow, 6).unwrap();
        assert!(!pairs.is_empty());
        for (q, p) in pairs {
            assert_eq!(q, p);
        }
    }

    #[test]
    fn endpoints_follow_constant_flow() {
        let mut data = Array3::zeros((24, 32, 2));
        data.slice_mut(ndarray::s![.., .., 0]).fill(3.0);
        data.slice_mut(ndarray::s![.., .., 1]).fill(-2.0);
        let flow = FlowField::new(data, FlowResolution::Full).unwrap();
        for (q, p) in correspondence_endpoints(&flow, 5).unwrap() {
            assert_eq!((p.x, p.y), (q.x + 3.0, q.y - 2.0));
        }
    }

    #[test]
    fn overlay_has_side_by_side_geometry() {
        let src = constant_image(16, 24, 0.2);
        let tgt = constant_image(16, 24, 0.8);
        let flow = FlowField::zeros(16, 24, FlowResolution::Full);
        let img = correspondence_overlay(&src, &tgt, &flow, 4).unwrap();
        assert_eq!((img.height(), img.width()), (16, 48));
        // a corner pixel away from any marker keeps its panel's color
        assert_eq!(img.data()[[15, 0, 0]], 0.2);
        assert_eq!(img.data()[[15, 47, 0]], 0.8);
        // markers were drawn somewhere
        assert!(img.data().iter().any(|&v| v != 0.2 && v != 0.8));
    }

    #[test]
    fn overlay_rejects_mismatched_rasters() {
        let src = constant_image(16, 24, 0.2);
        let tgt = constant_image(16, 16, 0.8);
        let flow = FlowField::zeros(16, 24, FlowResolution::Full);
        assert!(matches!(
            correspondence_overlay(&src, &tgt, &flow, 4).unwrap_err(),
            Error::InvalidArgument(_)
        ));
    }

    #[test]
    fn pca_panel_colors_identical_content_identically() {
        // two feature maps with the same two clusters: matching cells must
        // get exactly matching colors in both panels
        let c = 6;
        let (gh, gw) = (2, 4);
        let mut f = ndarray::Array2::zeros((gh * gw, c));
        for r in 0..gh * gw {
            for k in 0..c {
                f[[r, k]] = if r % 2 == 0 { 1.0 } else { -1.0 } * (k as f64 + 1.0);
            }
        }
        let img = pca_feature_panel(&f, &f, (gh, gw), 2).unwrap();
        assert_eq!((img.height(), img.width()), (4, 16));
        let left = img.data().slice(ndarray::s![.., ..8, ..]).to_owned();
        let right = img.data().slice(ndarray::s![.., 8.., ..]).to_owned();
        assert_eq!(left, right);
        // the two clusters separate along the leading component
        assert_ne!(
            img.data().slice(ndarray::s![0, 0, ..]).to_vec(),
            img.data().slice(ndarray::s![0, 2, ..]).to_vec()
        );
    }
}
