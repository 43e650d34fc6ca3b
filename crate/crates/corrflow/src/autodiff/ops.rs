//! Gradient rules and forward kernels for the tape ops.

use std::sync::Arc;

use ndarray::{Array1, Array2, Array3, ArrayD, ArrayView2, Axis, Ix2};

use super::{BackwardCtx, GradFn};
use crate::core::{resolve_sample_point, sample_channels};

pub(crate) fn as2(a: &ArrayD<f64>) -> ArrayView2<'_, f64> {
    a.view().into_dimensionality::<Ix2>().expect("2D node")
}

// ----- elementwise -----

pub(crate) struct AddGrad;
impl GradFn for AddGrad {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<ArrayD<f64>>> {
        vec![Some(ctx.grad.clone()), Some(ctx.grad.clone())]
    }
}

pub(crate) struct SubGrad;
impl GradFn for SubGrad {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<ArrayD<f64>>> {
        vec![Some(ctx.grad.clone()), Some(ctx.grad.mapv(|g| -g))]
    }
}

pub(crate) struct MulGrad;
impl GradFn for MulGrad {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<ArrayD<f64>>> {
        vec![
            Some(ctx.grad * ctx.inputs[1]),
            Some(ctx.grad * ctx.inputs[0]),
        ]
    }
}

pub(crate) struct ScaleGrad {
    pub k: f64,
}
impl GradFn for ScaleGrad {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<ArrayD<f64>>> {
        vec![Some(ctx.grad.mapv(|g| g * self.k))]
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub(crate) fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub(crate) struct GeluGrad;
impl GradFn for GeluGrad {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<ArrayD<f64>>> {
        let dx = ctx.inputs[0].mapv(|x| {
            let inner = GELU_C * (x + GELU_A * x * x * x);
            let t = inner.tanh();
            let dinner = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
            0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
        });
        vec![Some(&dx * ctx.grad)]
    }
}

pub(crate) struct CharbonnierGrad {
    pub e2: f64,
    pub alpha: f64,
}
impl GradFn for CharbonnierGrad {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<ArrayD<f64>>> {
        let dx = ctx.inputs[0].mapv(|x| {
            self.alpha * (x * x + self.e2).powf(self.alpha - 1.0) * 2.0 * x
        });
        vec![Some(&dx * ctx.grad)]
    }
}

// ----- reductions -----

pub(crate) struct MeanAllGrad;
impl GradFn for MeanAllGrad {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<ArrayD<f64>>> {
        let n = ctx.inputs[0].len() as f64;
        let g = *ctx.grad.first().expect("scalar grad");
        vec![Some(ArrayD::from_elem(ctx.inputs[0].raw_dim(), g / n))]
    }
}

pub(crate) struct SumAllGrad;
impl GradFn for SumAllGrad {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<ArrayD<f64>>> {
        let g = *ctx.grad.first().expect("scalar grad");
        vec![Some(ArrayD::from_elem(ctx.inputs[0].raw_dim(), g))]
    }
}

pub(crate) struct WeightedMeanGrad {
    pub weights: Arc<ArrayD<f64>>,
    pub wsum: f64,
}
impl GradFn for WeightedMeanGrad {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<ArrayD<f64>>> {
        let g = *ctx.grad.first().expect("scalar grad");
        vec![Some(self.weights.mapv(|w| w * g / self.wsum))]
    }
}

// ----- shape -----

pub(crate) struct ReshapeGrad;
impl GradFn for ReshapeGrad {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<ArrayD<f64>>> {
        let g = ctx
            .grad
            .to_shape(ctx.inputs[0].raw_dim())
            .expect("reshape grad")
            .to_owned();
        vec![Some(g)]
    }
}

pub(crate) struct TransposeGrad;
impl GradFn for TransposeGrad {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<ArrayD<f64>>> {
        vec![Some(as2(ctx.grad).t().to_owned().into_dyn())]
    }
}

pub(crate) struct GatherRowsGrad {
    pub idx: Arc<Vec<usize>>,
}
impl GradFn for GatherRowsGrad {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<ArrayD<f64>>> {
        let src = as2(ctx.inputs[0]);
        let g = as2(ctx.grad);
        let mut out = Array2::<f64>::zeros(src.raw_dim());
        for (r, &i) in self.idx.iter().enumerate() {
            let mut row = out.row_mut(i);
            row += &g.row(r);
        }
        vec![Some(out.into_dyn())]
    }
}

pub(crate) struct SliceColsGrad {
    pub start: usize,
    pub len: usize,
}
impl GradFn for SliceColsGrad {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<ArrayD<f64>>> {
        let src = as2(ctx.inputs[0]);
        let mut out = Array2::<f64>::zeros(src.raw_dim());
        out.slice_mut(ndarray::s![.., self.start..self.start + self.len])
            .assign(&as2(ctx.grad));
        vec![Some(out.into_dyn())]
    }
}

pub(crate) struct ConcatColsGrad {
    pub widths: Vec<usize>,
}
impl GradFn for ConcatColsGrad {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<ArrayD<f64>>> {
        let g = as2(ctx.grad);
        let mut out = Vec::with_capacity(self.widths.len());
        let mut start = 0;
        for &w in &self.widths {
            out.push(Some(
                g.slice(ndarray::s![.., start..start + w]).to_owned().into_dyn(),
            ));
            start += w;
        }
        out
    }
}

// ----- linear algebra -----

pub(crate) struct MatMulGrad;
impl GradFn for MatMulGrad {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<ArrayD<f64>>> {
        let a = as2(ctx.inputs[0]);
        let b = as2(ctx.inputs[1]);
        let g = as2(ctx.grad);
        vec![
            Some(g.dot(&b.t()).into_dyn()),
            Some(a.t().dot(&g).into_dyn()),
        ]
    }
}

pub(crate) struct AddBiasGrad;
impl GradFn for AddBiasGrad {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<ArrayD<f64>>> {
        let g = as2(ctx.grad);
        let db = g.sum_axis(Axis(0));
        vec![Some(ctx.grad.clone()), Some(db.into_dyn())]
    }
}

/// Row-wise softmax with optional mask; masked-out entries are exactly 0.
/// Stabilized by subtracting the row max over allowed entries.
pub(crate) fn softmax_rows_kernel(x: &ArrayView2<'_, f64>, mask: Option<&Array2<bool>>) -> Array2<f64> {
    let (n, m) = x.dim();
    if let Some(mk) = mask {
        assert_eq!(mk.dim(), (n, m), "mask shape mismatch");
    }
    let mut out = Array2::zeros((n, m));
    for i in 0..n {
        let mut any = false;
        let mut max = f64::NEG_INFINITY;
        for j in 0..m {
            let allowed = mask.map_or(true, |mk| mk[[i, j]]);
            any |= allowed;
            if allowed && x[[i, j]] > max {
                max = x[[i, j]];
            }
        }
        assert!(any, "softmax row {i} has no allowed entries");
        // Non-finite scores poison the row instead of panicking so the
        // training loop can abort the step with a proper error.
        if !max.is_finite() {
            for j in 0..m {
                out[[i, j]] = f64::NAN;
            }
            continue;
        }
        let mut sum = 0.0;
        for j in 0..m {
            let allowed = mask.map_or(true, |mk| mk[[i, j]]);
            let e = if allowed { (x[[i, j]] - max).exp() } else { 0.0 };
            out[[i, j]] = e;
            sum += e;
        }
        for j in 0..m {
            out[[i, j]] /= sum;
        }
    }
    out
}

/// Shared softmax backward: `dx = y * (g - sum(g * y))` per row. Masked
/// entries have `y = 0`, so they receive zero gradient automatically.
pub(crate) struct SoftmaxGrad;
impl GradFn for SoftmaxGrad {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<ArrayD<f64>>> {
        let y = as2(ctx.output);
        let g = as2(ctx.grad);
        let (n, m) = y.dim();
        let mut dx = Array2::zeros((n, m));
        for i in 0..n {
            let mut dot = 0.0;
            for j in 0..m {
                dot += g[[i, j]] * y[[i, j]];
            }
            for j in 0..m {
                dx[[i, j]] = y[[i, j]] * (g[[i, j]] - dot);
            }
        }
        vec![Some(dx.into_dyn())]
    }
}

pub(crate) fn layer_norm_forward(
    x: &ArrayView2<'_, f64>,
    gamma: &ArrayD<f64>,
    beta: &ArrayD<f64>,
    eps: f64,
) -> Array2<f64> {
    let (n, d) = x.dim();
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        let row = x.row(i);
        let mean = row.sum() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + eps).sqrt();
        for j in 0..d {
            let xhat = (row[j] - mean) * inv;
            out[[i, j]] = gamma[j] * xhat + beta[j];
        }
    }
    out
}

pub(crate) struct LayerNormGrad {
    pub eps: f64,
}
impl GradFn for LayerNormGrad {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<ArrayD<f64>>> {
        let x = as2(ctx.inputs[0]);
        let gamma = ctx.inputs[1];
        let g = as2(ctx.grad);
        let (n, d) = x.dim();
        let df = d as f64;
        let mut dx = Array2::zeros((n, d));
        let mut dgamma = Array1::<f64>::zeros(d);
        let mut dbeta = Array1::<f64>::zeros(d);
        for i in 0..n {
            let row = x.row(i);
            let mean = row.sum() / df;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / df;
            let inv = 1.0 / (var + self.eps).sqrt();
            let xhat: Vec<f64> = row.iter().map(|v| (v - mean) * inv).collect();
            let mut sum_dxhat = 0.0;
            let mut sum_dxhat_xhat = 0.0;
            for j in 0..d {
                let dxhat = g[[i, j]] * gamma[j];
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * xhat[j];
                dgamma[j] += g[[i, j]] * xhat[j];
                dbeta[j] += g[[i, j]];
            }
            for j in 0..d {
                let dxhat = g[[i, j]] * gamma[j];
                dx[[i, j]] = inv * (dxhat - sum_dxhat / df - xhat[j] * sum_dxhat_xhat / df);
            }
        }
        vec![
            Some(dx.into_dyn()),
            Some(dgamma.into_dyn()),
            Some(dbeta.into_dyn()),
        ]
    }
}

// ----- convolution and pooling -----

fn conv_out_len(len: usize, k: usize, stride: usize, pad: usize) -> usize {
    (len + 2 * pad - k) / stride + 1
}

/// Gathers input patches into a `(Ho*Wo) x (Cin*kh*kw)` matrix.
fn im2col(x: &ArrayD<f64>, kh: usize, kw: usize, stride: usize, pad: usize) -> Array2<f64> {
    let (cin, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let ho = conv_out_len(h, kh, stride, pad);
    let wo = conv_out_len(w, kw, stride, pad);
    let mut cols = Array2::zeros((ho * wo, cin * kh * kw));
    for oy in 0..ho {
        for ox in 0..wo {
            let row = oy * wo + ox;
            for ci in 0..cin {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        let col = ci * kh * kw + ky * kw + kx;
                        if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                            cols[[row, col]] = x[[ci, iy as usize, ix as usize]];
                        }
                    }
                }
            }
        }
    }
    cols
}

pub(crate) fn conv2d_forward(
    x: &ArrayD<f64>,
    w: &ArrayD<f64>,
    b: &ArrayD<f64>,
    stride: usize,
    pad: usize,
) -> ArrayD<f64> {
    let (cout, cin, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    assert_eq!(x.shape()[0], cin, "conv input channel mismatch");
    let h = x.shape()[1];
    let wdt = x.shape()[2];
    let ho = conv_out_len(h, kh, stride, pad);
    let wo = conv_out_len(wdt, kw, stride, pad);
    let cols = im2col(x, kh, kw, stride, pad);
    let wmat = w
        .to_shape((cout, cin * kh * kw))
        .expect("conv weight reshape")
        .to_owned();
    // (P x K) . (K x Cout) -> P x Cout
    let mut out2 = cols.dot(&wmat.t());
    for mut row in out2.rows_mut() {
        for (e, bv) in row.iter_mut().zip(b.iter()) {
            *e += bv;
        }
    }
    // P x Cout -> Cout x Ho x Wo
    let out = out2.t().to_owned();
    out.to_shape((cout, ho, wo))
        .expect("conv output reshape")
        .to_owned()
        .into_dyn()
}

pub(crate) struct Conv2dGrad {
    pub stride: usize,
    pub pad: usize,
}
impl GradFn for Conv2dGrad {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<ArrayD<f64>>> {
        let x = ctx.inputs[0];
        let w = ctx.inputs[1];
        let (cout, cin, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
        let (h, wdt) = (x.shape()[1], x.shape()[2]);
        let (ho, wo) = (ctx.output.shape()[1], ctx.output.shape()[2]);

        // Cout x Ho x Wo -> P x Cout
        let g2 = ctx
            .grad
            .to_shape((cout, ho * wo))
            .expect("grad reshape")
            .t()
            .to_owned();
        let cols = im2col(x, kh, kw, self.stride, self.pad);
        let wmat = w
            .to_shape((cout, cin * kh * kw))
            .expect("conv weight reshape")
            .to_owned();

        // dW = (g2^T . cols) shaped Cout x K
        let dw = g2.t().dot(&cols);
        let db = g2.sum_axis(Axis(0));
        // dcols = g2 . Wmat -> P x K, scattered back through im2col
        let dcols = g2.dot(&wmat);
        let mut dx = ArrayD::zeros(x.raw_dim());
        for oy in 0..ho {
            for ox in 0..wo {
                let row = oy * wo + ox;
                for ci in 0..cin {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wdt {
                                let col = ci * kh * kw + ky * kw + kx;
                                dx[[ci, iy as usize, ix as usize]] += dcols[[row, col]];
                            }
                        }
                    }
                }
            }
        }
        vec![
            Some(dx),
            Some(
                dw.to_shape((cout, cin, kh, kw))
                    .expect("dw reshape")
                    .to_owned()
                    .into_dyn(),
            ),
            Some(db.into_dyn()),
        ]
    }
}

pub(crate) fn avg_pool2_forward(x: &ArrayD<f64>) -> ArrayD<f64> {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    assert!(h % 2 == 0 && w % 2 == 0, "avg_pool2 needs even dims");
    let mut out = Array3::zeros((c, h / 2, w / 2));
    for ci in 0..c {
        for y in 0..h / 2 {
            for xx in 0..w / 2 {
                out[[ci, y, xx]] = 0.25
                    * (x[[ci, 2 * y, 2 * xx]]
                        + x[[ci, 2 * y, 2 * xx + 1]]
                        + x[[ci, 2 * y + 1, 2 * xx]]
                        + x[[ci, 2 * y + 1, 2 * xx + 1]]);
            }
        }
    }
    out.into_dyn()
}

pub(crate) struct AvgPool2Grad;
impl GradFn for AvgPool2Grad {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<ArrayD<f64>>> {
        let x = ctx.inputs[0];
        let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let mut dx = Array3::zeros((c, h, w));
        for ci in 0..c {
            for y in 0..h / 2 {
                for xx in 0..w / 2 {
                    let g = ctx.grad[[ci, y, xx]] * 0.25;
                    dx[[ci, 2 * y, 2 * xx]] += g;
                    dx[[ci, 2 * y, 2 * xx + 1]] += g;
                    dx[[ci, 2 * y + 1, 2 * xx]] += g;
                    dx[[ci, 2 * y + 1, 2 * xx + 1]] += g;
                }
            }
        }
        vec![Some(dx.into_dyn())]
    }
}

// ----- sampling -----

pub(crate) fn bilinear_forward(map: &ArrayD<f64>, coords: &ArrayD<f64>) -> ArrayD<f64> {
    let m3 = map
        .view()
        .into_dimensionality::<ndarray::Ix3>()
        .expect("map is H x W x D");
    let c2 = as2(coords);
    let (h, w, d) = m3.dim();
    let n = c2.dim().0;
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        let p = resolve_sample_point(h, w, c2[[i, 0]], c2[[i, 1]]);
        sample_channels(&m3, &p, out.row_mut(i).as_slice_mut().expect("contiguous"));
    }
    out.into_dyn()
}

pub(crate) struct BilinearGrad;
impl GradFn for BilinearGrad {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<ArrayD<f64>>> {
        let map = ctx.inputs[0]
            .view()
            .into_dimensionality::<ndarray::Ix3>()
            .expect("map is H x W x D");
        let coords = as2(ctx.inputs[1]);
        let g = as2(ctx.grad);
        let (h, w, d) = map.dim();
        let n = coords.dim().0;
        let mut dmap = Array3::<f64>::zeros((h, w, d));
        let mut dcoords = Array2::<f64>::zeros((n, 2));
        for i in 0..n {
            let p = resolve_sample_point(h, w, coords[[i, 0]], coords[[i, 1]]);
            let (mut gx, mut gy) = (0.0, 0.0);
            for k in 0..d {
                let go = g[[i, k]];
                let a = map[[p.y0, p.x0, k]];
                let b = map[[p.y0, p.x1, k]];
                let c = map[[p.y1, p.x0, k]];
                let e = map[[p.y1, p.x1, k]];
                // value gradients: classic weight form
                dmap[[p.y0, p.x0, k]] += go * (1.0 - p.fx) * (1.0 - p.fy);
                dmap[[p.y0, p.x1, k]] += go * p.fx * (1.0 - p.fy);
                dmap[[p.y1, p.x0, k]] += go * (1.0 - p.fx) * p.fy;
                dmap[[p.y1, p.x1, k]] += go * p.fx * p.fy;
                // coordinate gradients, zero when clamped off the raster
                gx += go * ((1.0 - p.fy) * (b - a) + p.fy * (e - c));
                gy += go * ((c + p.fx * (e - c)) - (a + p.fx * (b - a)));
            }
            dcoords[[i, 0]] = gx * p.grad_x;
            dcoords[[i, 1]] = gy * p.grad_y;
        }
        vec![Some(dmap.into_dyn()), Some(dcoords.into_dyn())]
    }
}

pub(crate) struct NormRowsGrad {
    pub eps2: f64,
}
impl GradFn for NormRowsGrad {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<ArrayD<f64>>> {
        let x = as2(ctx.inputs[0]);
        let y = ctx.output;
        let n = x.dim().0;
        let mut dx = Array2::zeros((n, 2));
        for i in 0..n {
            let inv = 1.0 / y[[i]];
            dx[[i, 0]] = ctx.grad[[i]] * x[[i, 0]] * inv;
            dx[[i, 1]] = ctx.grad[[i]] * x[[i, 1]] * inv;
        }
        let _ = self.eps2;
        vec![Some(dx.into_dyn())]
    }
}
