//! Minimal reverse-mode automatic differentiation over `ndarray` arrays.
//!
//! A [`Tape`] records a computation as a flat list of nodes; [`Tape::backward`]
//! walks the list in reverse accumulating gradients. Leaves registered with
//! [`Tape::leaf`] receive gradients, values registered with
//! [`Tape::constant`] do not and their subtrees are skipped.
//!
//! The op set is exactly what the correspondence pipeline needs: dense
//! linear algebra for the encoder, masked softmax and coordinate
//! expectations for matching, and bilinear sampling with gradients w.r.t.
//! both the sampled raster and the query coordinates for the warping
//! losses. Everything runs in `f64`.

mod ops;
mod params;

pub use params::{Fnv1a, ParamSet, ParamVars};

use ndarray::{ArrayD, IxDyn};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

pub(crate) struct BackwardCtx<'a> {
    pub inputs: Vec<&'a ArrayD<f64>>,
    pub output: &'a ArrayD<f64>,
    pub grad: &'a ArrayD<f64>,
}

pub(crate) trait GradFn {
    /// Returns one gradient per parent, `None` where no gradient flows.
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<ArrayD<f64>>>;
}

struct Node {
    value: ArrayD<f64>,
    parents: Vec<Var>,
    grad_fn: Option<Box<dyn GradFn>>,
    needs_grad: bool,
}

/// Gradient table produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<ArrayD<f64>>>,
}

impl Gradients {
    /// Gradient of the backward root with respect to `v`, if any flowed.
    pub fn wrt(&self, v: Var) -> Option<&ArrayD<f64>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

/// A recording of a differentiable computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a value that should receive a gradient.
    pub fn leaf(&mut self, value: ArrayD<f64>) -> Var {
        self.push_node(value, Vec::new(), None, true)
    }

    /// Registers a value that never receives a gradient.
    pub fn constant(&mut self, value: ArrayD<f64>) -> Var {
        self.push_node(value, Vec::new(), None, false)
    }

    pub fn value(&self, v: Var) -> &ArrayD<f64> {
        &self.nodes[v.0].value
    }

    /// Scalar value of a zero-dimensional node.
    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        debug_assert_eq!(val.ndim(), 0, "scalar() on non-scalar node");
        *val.first().expect("non-empty array")
    }

    pub(crate) fn push_node(
        &mut self,
        value: ArrayD<f64>,
        parents: Vec<Var>,
        grad_fn: Option<Box<dyn GradFn>>,
        force_needs_grad: bool,
    ) -> Var {
        let needs_grad =
            force_needs_grad || parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            value,
            parents,
            grad_fn: if needs_grad { grad_fn } else { None },
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Runs reverse accumulation from `root` (typically a scalar loss).
    pub fn backward(&self, root: Var) -> Gradients {
        let mut grads: Vec<Option<ArrayD<f64>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[root.0] = Some(ArrayD::ones(self.nodes[root.0].value.raw_dim()));

        for id in (0..=root.0).rev() {
            if grads[id].is_none() || !self.nodes[id].needs_grad {
                continue;
            }
            let Some(grad_fn) = self.nodes[id].grad_fn.as_ref() else {
                continue;
            };
            let g = grads[id].take().expect("checked above");
            let node = &self.nodes[id];
            let inputs: Vec<&ArrayD<f64>> =
                node.parents.iter().map(|p| &self.nodes[p.0].value).collect();
            let ctx = BackwardCtx {
                inputs,
                output: &node.value,
                grad: &g,
            };
            let parent_grads = grad_fn.backward(&ctx);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (parent, pg) in node.parents.iter().zip(parent_grads) {
                if !self.nodes[parent.0].needs_grad {
                    continue;
                }
                if let Some(pg) = pg {
                    debug_assert_eq!(
                        pg.shape(),
                        self.nodes[parent.0].value.shape(),
                        "gradient shape mismatch"
                    );
                    match &mut grads[parent.0] {
                        Some(acc) => *acc += &pg,
                        slot @ None => *slot = Some(pg),
                    }
                }
            }
            grads[id] = Some(g);
        }
        Gradients { grads }
    }

    // ----- elementwise and scalar ops -----

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push_node(v, vec![a, b], Some(Box::new(ops::AddGrad)), false)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push_node(v, vec![a, b], Some(Box::new(ops::SubGrad)), false)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push_node(v, vec![a, b], Some(Box::new(ops::MulGrad)), false)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).mapv(|x| x * k);
        self.push_node(v, vec![a], Some(Box::new(ops::ScaleGrad { k })), false)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(ops::gelu_scalar);
        self.push_node(v, vec![a], Some(Box::new(ops::GeluGrad)), false)
    }

    /// Elementwise robust penalty `(x^2 + eps^2)^alpha`.
    pub fn charbonnier(&mut self, a: Var, eps: f64, alpha: f64) -> Var {
        let e2 = eps * eps;
        let v = self.value(a).mapv(|x| (x * x + e2).powf(alpha));
        self.push_node(
            v,
            vec![a],
            Some(Box::new(ops::CharbonnierGrad { e2, alpha })),
            false,
        )
    }

    // ----- reductions -----

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len();
        let v = ArrayD::from_elem(IxDyn(&[]), self.value(a).sum() / n as f64);
        self.push_node(v, vec![a], Some(Box::new(ops::MeanAllGrad)), false)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = ArrayD::from_elem(IxDyn(&[]), self.value(a).sum());
        self.push_node(v, vec![a], Some(Box::new(ops::SumAllGrad)), false)
    }

    /// Weighted mean `sum(x * w) / sum(w)` with constant weights.
    ///
    /// The denominator is the weight sum, so boolean masks give a mean over
    /// selected elements.
    pub fn weighted_mean(&mut self, a: Var, weights: std::sync::Arc<ArrayD<f64>>) -> Var {
        let wsum: f64 = weights.sum();
        assert!(wsum > 0.0, "weighted_mean needs positive total weight");
        let num: f64 = self
            .value(a)
            .iter()
            .zip(weights.iter())
            .map(|(x, w)| x * w)
            .sum();
        let v = ArrayD::from_elem(IxDyn(&[]), num / wsum);
        self.push_node(
            v,
            vec![a],
            Some(Box::new(ops::WeightedMeanGrad { weights, wsum })),
            false,
        )
    }

    // ----- shape ops -----

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let v = self
            .value(a)
            .to_shape(IxDyn(shape))
            .expect("reshape length mismatch")
            .to_owned();
        self.push_node(v, vec![a], Some(Box::new(ops::ReshapeGrad)), false)
    }

    pub fn transpose2(&mut self, a: Var) -> Var {
        let v = ops::as2(self.value(a)).t().to_owned().into_dyn();
        self.push_node(v, vec![a], Some(Box::new(ops::TransposeGrad)), false)
    }

    pub fn gather_rows(&mut self, a: Var, idx: std::sync::Arc<Vec<usize>>) -> Var {
        let src = ops::as2(self.value(a));
        let mut out = ndarray::Array2::zeros((idx.len(), src.dim().1));
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).assign(&src.row(i));
        }
        self.push_node(
            out.into_dyn(),
            vec![a],
            Some(Box::new(ops::GatherRowsGrad { idx })),
            false,
        )
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let src = ops::as2(self.value(a));
        let v = src
            .slice(ndarray::s![.., start..start + len])
            .to_owned()
            .into_dyn();
        self.push_node(
            v,
            vec![a],
            Some(Box::new(ops::SliceColsGrad { start, len })),
            false,
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|p| ops::as2(self.value(*p))).collect();
        let widths: Vec<usize> = views.iter().map(|v| v.dim().1).collect();
        let v = ndarray::concatenate(
            ndarray::Axis(1),
            &views.iter().map(|v| v.view()).collect::<Vec<_>>(),
        )
        .expect("concat_cols shape mismatch")
        .into_dyn();
        self.push_node(
            v,
            parts.to_vec(),
            Some(Box::new(ops::ConcatColsGrad { widths })),
            false,
        )
    }

    // ----- linear algebra -----

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = ops::as2(self.value(a)).dot(&ops::as2(self.value(b))).into_dyn();
        self.push_node(v, vec![a, b], Some(Box::new(ops::MatMulGrad)), false)
    }

    /// Adds a length-`m` bias to every row of an `n x m` matrix.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let x = ops::as2(self.value(a));
        let b = self.value(bias);
        let mut v = x.to_owned();
        for mut row in v.rows_mut() {
            for (e, bv) in row.iter_mut().zip(b.iter()) {
                *e += bv;
            }
        }
        self.push_node(v.into_dyn(), vec![a, bias], Some(Box::new(ops::AddBiasGrad)), false)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let v = ops::softmax_rows_kernel(&ops::as2(self.value(a)), None);
        self.push_node(v.into_dyn(), vec![a], Some(Box::new(ops::SoftmaxGrad)), false)
    }

    /// Row-wise softmax restricted to `mask`; entries off the mask are
    /// exactly zero. Every row must have at least one allowed entry.
    pub fn masked_softmax_rows(
        &mut self,
        a: Var,
        mask: std::sync::Arc<ndarray::Array2<bool>>,
    ) -> Var {
        let v = ops::softmax_rows_kernel(&ops::as2(self.value(a)), Some(&mask));
        self.push_node(v.into_dyn(), vec![a], Some(Box::new(ops::SoftmaxGrad)), false)
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let v = ops::layer_norm_forward(
            &ops::as2(self.value(x)),
            self.value(gamma),
            self.value(beta),
            eps,
        );
        self.push_node(
            v.into_dyn(),
            vec![x, gamma, beta],
            Some(Box::new(ops::LayerNormGrad { eps })),
            false,
        )
    }

    // ----- convolution and pooling -----

    /// 2D convolution over a `Cin x H x W` input with an odd square kernel,
    /// zero padding `pad`, and the given stride.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let v = ops::conv2d_forward(self.value(x), self.value(w), self.value(b), stride, pad);
        self.push_node(
            v,
            vec![x, w, b],
            Some(Box::new(ops::Conv2dGrad { stride, pad })),
            false,
        )
    }

    /// 2x2 average pooling with stride 2 over a `C x H x W` input.
    pub fn avg_pool2(&mut self, x: Var) -> Var {
        let v = ops::avg_pool2_forward(self.value(x));
        self.push_node(v, vec![x], Some(Box::new(ops::AvgPool2Grad)), false)
    }

    // ----- sampling -----

    /// Bilinear sampling of an `H x W x D` raster at `N x 2` query points
    /// `(x, y)`, clamped to the raster edge. Differentiable with respect to
    /// both the raster values and the query coordinates.
    pub fn bilinear_sample(&mut self, map: Var, coords: Var) -> Var {
        let v = ops::bilinear_forward(self.value(map), self.value(coords));
        self.push_node(v, vec![map, coords], Some(Box::new(ops::BilinearGrad)), false)
    }

    /// Smoothed row norms `sqrt(x^2 + y^2 + eps2)` of an `N x 2` matrix.
    pub fn norm_rows(&mut self, a: Var, eps2: f64) -> Var {
        let x = ops::as2(self.value(a));
        let n = x.dim().0;
        let mut v = ndarray::Array1::zeros(n);
        for i in 0..n {
            v[i] = (x[[i, 0]] * x[[i, 0]] + x[[i, 1]] * x[[i, 1]] + eps2).sqrt();
        }
        self.push_node(
            v.into_dyn(),
            vec![a],
            Some(Box::new(ops::NormRowsGrad { eps2 })),
            false,
        )
    }
}
