//! The trainable correspondence encoder: a stride-8 convolutional stem
//! followed by transformer blocks that alternate self-attention within each
//! image and cross-attention between the two images. Both images pass
//! through the same parameters.

use ndarray::{Array2, Array3, ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{ParamSet, ParamVars, Tape, Var};
use crate::core::{FeatureMap, ImageTensor, FEATURE_STRIDE};
use crate::error::{Error, Result};

const HEADS: usize = 4;
const STEM_MID: usize = 64;
const LN_EPS: f64 = 1e-5;

/// Trainable two-branch encoder with shared weights.
///
/// `encode_pair` maps two same-shape images to `h x w x c` feature maps at
/// stride 8. Cross-attention makes each output depend on both inputs, so
/// the pair must be encoded together.
pub struct CorrespondenceEncoder {
    channels: usize,
    blocks: usize,
    params: ParamSet,
}

impl CorrespondenceEncoder {
    pub fn new(channels: usize, blocks: usize, seed: u64) -> Result<Self> {
        if channels == 0 || channels % HEADS != 0 {
            return Err(Error::Config(format!(
                "encoder.channels must be a positive multiple of {HEADS}, got {channels}"
            )));
        }
        if blocks == 0 {
            return Err(Error::Config("encoder.blocks must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();

        let conv = |rng: &mut ChaCha8Rng, co: usize, ci: usize| {
            let std = (2.0 / (ci * 9) as f64).sqrt();
            rand_nd(rng, &[co, ci, 3, 3], std)
        };
        p.push("stem.conv1.w", conv(&mut rng, STEM_MID, 3));
        p.push("stem.conv1.b", ArrayD::zeros(IxDyn(&[STEM_MID])));
        p.push("stem.conv2.w", conv(&mut rng, channels, STEM_MID));
        p.push("stem.conv2.b", ArrayD::zeros(IxDyn(&[channels])));

        let c = channels;
        for b in 0..blocks {
            for (ln, attn) in [("ln1", "self"), ("ln2", "cross")] {
                p.push(&format!("block{b}.{ln}.g"), ArrayD::ones(IxDyn(&[c])));
                p.push(&format!("block{b}.{ln}.b"), ArrayD::zeros(IxDyn(&[c])));
                for proj in ["q", "k", "v", "o"] {
                    p.push(
                        &format!("block{b}.{attn}.w{proj}"),
                        rand_nd(&mut rng, &[c, c], 0.02),
                    );
                    p.push(
                        &format!("block{b}.{attn}.b{proj}"),
                        ArrayD::zeros(IxDyn(&[c])),
                    );
                }
            }
            p.push(&format!("block{b}.ln3.g"), ArrayD::ones(IxDyn(&[c])));
            p.push(&format!("block{b}.ln3.b"), ArrayD::zeros(IxDyn(&[c])));
            p.push(
                &format!("block{b}.mlp.w1"),
                rand_nd(&mut rng, &[c, 2 * c], 0.02),
            );
            p.push(&format!("block{b}.mlp.b1"), ArrayD::zeros(IxDyn(&[2 * c])));
            p.push(
                &format!("block{b}.mlp.w2"),
                rand_nd(&mut rng, &[2 * c, c], 0.02),
            );
            p.push(&format!("block{b}.mlp.b2"), ArrayD::zeros(IxDyn(&[c])));
        }
        p.push("final.ln.g", ArrayD::ones(IxDyn(&[c])));
        p.push("final.ln.b", ArrayD::zeros(IxDyn(&[c])));
        p.push("final.proj.w", rand_nd(&mut rng, &[c, c], 0.02));
        p.push("final.proj.b", ArrayD::zeros(IxDyn(&[c])));

        Ok(Self {
            channels,
            blocks,
            params: p,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    /// Names of the output projection, the last parameterized layer.
    pub fn final_layer_names(&self) -> [&'static str; 2] {
        ["final.proj.w", "final.proj.b"]
    }

    fn check_pair(&self, i1: &ImageTensor, i2: &ImageTensor) -> Result<(usize, usize)> {
        if i1.height() != i2.height() || i1.width() != i2.width() {
            return Err(Error::InvalidArgument(format!(
                "image pair shapes differ: {}x{} vs {}x{}",
                i1.height(),
                i1.width(),
                i2.height(),
                i2.width()
            )));
        }
        if !i1.stride_aligned() {
            return Err(Error::InvalidArgument(format!(
                "image dimensions {}x{} not divisible by {FEATURE_STRIDE}",
                i1.height(),
                i1.width()
            )));
        }
        Ok((i1.height() / FEATURE_STRIDE, i1.width() / FEATURE_STRIDE))
    }

    /// Frozen-parameter inference path.
    pub fn encode_pair(&self, i1: &ImageTensor, i2: &ImageTensor) -> Result<(FeatureMap, FeatureMap)> {
        let (h, w) = self.check_pair(i1, i2)?;
        let mut tape = Tape::new();
        let vars = self.params.register_constants(&mut tape);
        let (v1, v2) = self.forward_on_tape(&mut tape, &vars, i1, i2)?;
        let f1 = tokens_to_map(tape.value(v1), h, w, self.channels)?;
        let f2 = tokens_to_map(tape.value(v2), h, w, self.channels)?;
        Ok((f1, f2))
    }

    /// Training path: returns the two token matrices `(h*w) x c` as tape
    /// variables so the matcher and losses can extend the same graph.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        vars: &ParamVars,
        i1: &ImageTensor,
        i2: &ImageTensor,
    ) -> Result<(Var, Var)> {
        let (h, w) = self.check_pair(i1, i2)?;
        let pe = tape.constant(posenc(h, w, self.channels).into_dyn());

        let mut x1 = self.stem(tape, vars, i1, h, w);
        let mut x2 = self.stem(tape, vars, i2, h, w);
        x1 = tape.add(x1, pe);
        x2 = tape.add(x2, pe);

        for b in 0..self.blocks {
            let pfx = format!("block{b}");
            // Self-attention within each branch.
            let n1 = self.layer_norm(tape, vars, x1, &pfx, "ln1");
            let n2 = self.layer_norm(tape, vars, x2, &pfx, "ln1");
            let a1 = self.attention(tape, vars, n1, n1, &pfx, "self");
            let a2 = self.attention(tape, vars, n2, n2, &pfx, "self");
            x1 = tape.add(x1, a1);
            x2 = tape.add(x2, a2);
            // Cross-attention: queries from one branch, keys/values from the other.
            let c1 = self.layer_norm(tape, vars, x1, &pfx, "ln2");
            let c2 = self.layer_norm(tape, vars, x2, &pfx, "ln2");
            let b1 = self.attention(tape, vars, c1, c2, &pfx, "cross");
            let b2 = self.attention(tape, vars, c2, c1, &pfx, "cross");
            x1 = tape.add(x1, b1);
            x2 = tape.add(x2, b2);
            // MLP.
            let m1 = self.layer_norm(tape, vars, x1, &pfx, "ln3");
            let m2 = self.layer_norm(tape, vars, x2, &pfx, "ln3");
            let f1 = self.mlp(tape, vars, m1, &pfx);
            let f2 = self.mlp(tape, vars, m2, &pfx);
            x1 = tape.add(x1, f1);
            x2 = tape.add(x2, f2);
        }

        let g = vars.var("final.ln.g");
        let bvar = vars.var("final.ln.b");
        let y1 = tape.layer_norm(x1, g, bvar, LN_EPS);
        let y2 = tape.layer_norm(x2, g, bvar, LN_EPS);
        let pw = vars.var("final.proj.w");
        let pb = vars.var("final.proj.b");
        let o1 = tape.matmul(y1, pw);
        let o1 = tape.add_bias(o1, pb);
        let o2 = tape.matmul(y2, pw);
        let o2 = tape.add_bias(o2, pb);
        Ok((o1, o2))
    }

    fn stem(
        &self,
        tape: &mut Tape,
        vars: &ParamVars,
        img: &ImageTensor,
        h: usize,
        w: usize,
    ) -> Var {
        let x = tape.constant(image_chw(img).into_dyn());
        let x = tape.conv2d(x, vars.var("stem.conv1.w"), vars.var("stem.conv1.b"), 2, 1);
        let x = tape.gelu(x);
        let x = tape.conv2d(x, vars.var("stem.conv2.w"), vars.var("stem.conv2.b"), 2, 1);
        let x = tape.gelu(x);
        let x = tape.avg_pool2(x);
        // c x h x w -> (h*w) x c token matrix
        let x = tape.reshape(x, &[self.channels, h * w]);
        tape.transpose2(x)
    }

    fn layer_norm(&self, tape: &mut Tape, vars: &ParamVars, x: Var, pfx: &str, ln: &str) -> Var {
        let g = vars.var(&format!("{pfx}.{ln}.g"));
        let b = vars.var(&format!("{pfx}.{ln}.b"));
        tape.layer_norm(x, g, b, LN_EPS)
    }

    fn attention(
        &self,
        tape: &mut Tape,
        vars: &ParamVars,
        queries: Var,
        keyvals: Var,
        pfx: &str,
        kind: &str,
    ) -> Var {
        let proj = |tape: &mut Tape, x: Var, name: &str| {
            let w = vars.var(&format!("{pfx}.{kind}.w{name}"));
            let b = vars.var(&format!("{pfx}.{kind}.b{name}"));
            let y = tape.matmul(x, w);
            tape.add_bias(y, b)
        };
        let q = proj(tape, queries, "q");
        let k = proj(tape, keyvals, "k");
        let v = proj(tape, keyvals, "v");
        let dh = self.channels / HEADS;
        let inv = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(HEADS);
        for hd in 0..HEADS {
            let qh = tape.slice_cols(q, hd * dh, dh);
            let kh = tape.slice_cols(k, hd * dh, dh);
            let vh = tape.slice_cols(v, hd * dh, dh);
            let kt = tape.transpose2(kh);
            let scores = tape.matmul(qh, kt);
            let scores = tape.scale(scores, inv);
            let probs = tape.softmax_rows(scores);
            heads.push(tape.matmul(probs, vh));
        }
        let merged = tape.concat_cols(&heads);
        proj(tape, merged, "o")
    }

    fn mlp(&self, tape: &mut Tape, vars: &ParamVars, x: Var, pfx: &str) -> Var {
        let w1 = vars.var(&format!("{pfx}.mlp.w1"));
        let b1 = vars.var(&format!("{pfx}.mlp.b1"));
        let w2 = vars.var(&format!("{pfx}.mlp.w2"));
        let b2 = vars.var(&format!("{pfx}.mlp.b2"));
        let y = tape.matmul(x, w1);
        let y = tape.add_bias(y, b1);
        let y = tape.gelu(y);
        let y = tape.matmul(y, w2);
        tape.add_bias(y, b2)
    }
}

fn rand_nd(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> ArrayD<f64> {
    let dist = Normal::new(0.0, std).expect("valid normal");
    ArrayD::from_shape_simple_fn(IxDyn(shape), || dist.sample(rng))
}

fn image_chw(img: &ImageTensor) -> Array3<f64> {
    let (h, w) = (img.height(), img.width());
    let mut out = Array3::zeros((3, h, w));
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                out[[ch, y, x]] = img.data()[[y, x, ch]];
            }
        }
    }
    out
}

/// Token matrix `(h*w) x c` back to an `h x w x c` feature map.
pub(crate) fn tokens_to_map(tokens: &ArrayD<f64>, h: usize, w: usize, c: usize) -> Result<FeatureMap> {
    let t = tokens
        .view()
        .into_dimensionality::<ndarray::Ix2>()
        .map_err(|_| Error::Computation("token matrix is not 2D".into()))?;
    let mut out = Array3::zeros((h, w, c));
    for y in 0..h {
        for x in 0..w {
            for k in 0..c {
                out[[y, x, k]] = t[[y * w + x, k]];
            }
        }
    }
    FeatureMap::new(out, FEATURE_STRIDE)
}

/// Fixed 2D sinusoidal position encodings: the first c/2 channels encode x,
/// the rest encode y, each as interleaved sine/cosine at geometric
/// frequencies.
fn posenc(h: usize, w: usize, c: usize) -> Array2<f64> {
    let half = c / 2;
    let mut pe = Array2::zeros((h * w, c));
    for y in 0..h {
        for x in 0..w {
            let row = y * w + x;
            for k in 0..half / 2 {
                let freq = 1.0 / 10000f64.powf(2.0 * k as f64 / half as f64);
                pe[[row, 2 * k]] = (x as f64 * freq).sin();
                pe[[row, 2 * k + 1]] = (x as f64 * freq).cos();
                pe[[row, half + 2 * k]] = (y as f64 * freq).sin();
                pe[[row, half + 2 * k + 1]] = (y as f64 * freq).cos();
            }
        }
    }
    pe
}

#[cfg(test)]
mod tests {
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn rand_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ImageTensor {
        let mut data = Array3::zeros((h, w, 3));
        data.iter_mut().for_each(|v| *v = rng.random::<f64>());
        ImageTensor::new(data).unwrap()
    }

    #[test]
    fn output_shape_follows_stride_law() {
        let enc = CorrespondenceEncoder::new(32, 1, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let i1 = rand_image(&mut rng, 64, 64);
        let i2 = rand_image(&mut rng, 64, 64);
        let (f1, f2) = enc.encode_pair(&i1, &i2).unwrap();
        assert_eq!((f1.height(), f1.width(), f1.channels()), (8, 8, 32));
        assert_eq!((f2.height(), f2.width(), f2.channels()), (8, 8, 32));
    }

    #[test]
    fn same_image_gives_identical_features() {
        let enc = CorrespondenceEncoder::new(32, 2, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let i = rand_image(&mut rng, 16, 16);
        let (f1, f2) = enc.encode_pair(&i, &i).unwrap();
        assert_eq!(f1.data(), f2.data());
    }

    #[test]
    fn swapping_inputs_swaps_outputs() {
        let enc = CorrespondenceEncoder::new(32, 2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let i1 = rand_image(&mut rng, 16, 24);
        let i2 = rand_image(&mut rng, 16, 24);
        let (f1, f2) = enc.encode_pair(&i1, &i2).unwrap();
        let (g1, g2) = enc.encode_pair(&i2, &i1).unwrap();
        let d12 = (f1.data() - g2.data()).iter().map(|v| v.abs()).fold(0.0, f64::max);
        let d21 = (f2.data() - g1.data()).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(d12 < 1e-5 && d21 < 1e-5, "swap asymmetry {d12} {d21}");
    }

    #[test]
    fn cross_attention_couples_the_branches() {
        let enc = CorrespondenceEncoder::new(32, 1, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let i1 = rand_image(&mut rng, 16, 16);
        let i2 = rand_image(&mut rng, 16, 16);
        let i2b = rand_image(&mut rng, 16, 16);
        let (f1, _) = enc.encode_pair(&i1, &i2).unwrap();
        let (f1b, _) = enc.encode_pair(&i1, &i2b).unwrap();
        assert_ne!(f1.data(), f1b.data(), "f1 must depend on the second image");
    }

    #[test]
    fn shape_mismatch_rejected() {
        let enc = CorrespondenceEncoder::new(32, 1, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let i1 = rand_image(&mut rng, 16, 16);
        let i2 = rand_image(&mut rng, 16, 24);
        assert!(enc.encode_pair(&i1, &i2).is_err());
    }

    #[test]
    fn default_architecture_is_under_a_million_parameters() {
        let enc = CorrespondenceEncoder::new(128, 4, 0).unwrap();
        let n = enc.param_count();
        assert!(n < 1_000_000, "parameter count {n}");
        assert!(n > 500_000, "unexpectedly small model {n}");
    }

    #[test]
    fn deterministic_given_seed_and_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let i1 = rand_image(&mut rng, 16, 16);
        let i2 = rand_image(&mut rng, 16, 16);
        let e1 = CorrespondenceEncoder::new(32, 1, 9).unwrap();
        let e2 = CorrespondenceEncoder::new(32, 1, 9).unwrap();
        let (a, _) = e1.encode_pair(&i1, &i2).unwrap();
        let (b, _) = e2.encode_pair(&i1, &i2).unwrap();
        assert_eq!(a.data(), b.data());
    }
}
