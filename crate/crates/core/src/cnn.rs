//! Small fully convolutional scorer over raster stacks.
//!
//! The network maps a `C x G x G` input to a `G x G` score image. It is
//! generic over the float type so the same code runs in `f32` for training
//! and inference and in `f64` for gradient checks. All parameters live in one
//! flat vector; layers index into it through offsets.

use std::io::{Read, Write};

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbdt::LossKind;
use crate::raster::{RasterStack, GRADE_INTENSITY, N_CHANNELS};

pub const MAGIC: &[u8; 8] = b"AGRKCNN\n";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Same-padded, stride 1, odd kernel.
    Conv { in_c: usize, out_c: usize, k: usize },
    Relu,
    /// 2x2, stride 2.
    MaxPool,
    /// 2x2 transposed convolution, stride 2.
    ConvTranspose { in_c: usize, out_c: usize },
}

impl LayerSpec {
    fn n_params(&self) -> usize {
        match *self {
            LayerSpec::Conv { in_c, out_c, k } => out_c * in_c * k * k + out_c,
            LayerSpec::ConvTranspose { in_c, out_c } => in_c * out_c * 4 + out_c,
            _ => 0,
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv { in_c, k, .. } => in_c * k * k,
            LayerSpec::ConvTranspose { in_c, .. } => in_c,
            _ => 0,
        }
    }

    /// Output shape for an input shape, or `None` when incompatible.
    fn out_shape(&self, (c, h, w): (usize, usize, usize)) -> Option<(usize, usize, usize)> {
        match *self {
            LayerSpec::Conv { in_c, out_c, k } => (in_c == c && k % 2 == 1).then_some((out_c, h, w)),
            LayerSpec::Relu => Some((c, h, w)),
            LayerSpec::MaxPool => (h % 2 == 0 && w % 2 == 0).then_some((c, h / 2, w / 2)),
            LayerSpec::ConvTranspose { in_c, out_c } => (in_c == c).then_some((out_c, 2 * h, 2 * w)),
        }
    }
}

/// Reference layer chain for `in_c` input channels.
pub fn default_architecture(in_c: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv { in_c, out_c: 6, k: 1 },
        LayerSpec::Relu,
        LayerSpec::Conv { in_c: 6, out_c: 8, k: 3 },
        LayerSpec::Relu,
        LayerSpec::MaxPool,
        LayerSpec::Conv { in_c: 8, out_c: 8, k: 3 },
        LayerSpec::Relu,
        // wide kernels at half resolution give each pixel ~15 m of context
        LayerSpec::Conv { in_c: 8, out_c: 8, k: 5 },
        LayerSpec::Relu,
        LayerSpec::Conv { in_c: 8, out_c: 8, k: 5 },
        LayerSpec::Relu,
        LayerSpec::ConvTranspose { in_c: 8, out_c: 1 },
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Float> Tensor<T> {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![T::zero(); c * h * w],
        }
    }

    fn shape(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }

    /// Raster bytes scaled to `[0, 1]`.
    pub fn from_stack(stack: &RasterStack) -> Self {
        let scale = T::from(1.0 / 255.0).unwrap();
        Self {
            c: N_CHANNELS,
            h: stack.grid,
            w: stack.grid,
            data: stack.data.iter().map(|&b| T::from(b).unwrap() * scale).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    pub layers: Vec<LayerSpec>,
    pub params: Vec<T>,
    pub in_shape: (usize, usize, usize),
}

struct Trace<T> {
    /// Input to each layer; the last entry is the network output.
    activations: Vec<Tensor<T>>,
    /// Argmax offsets for each max-pool layer, in order.
    pool_index: Vec<Vec<usize>>,
}

impl<T: Float> Network<T> {
    pub fn new(layers: Vec<LayerSpec>, in_shape: (usize, usize, usize), seed: u64) -> Result<Self> {
        let mut shape = in_shape;
        for (i, l) in layers.iter().enumerate() {
            shape = l
                .out_shape(shape)
                .ok_or_else(|| Error::Config(format!("layer {i} ({l:?}) does not accept shape {shape:?}")))?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(layers.iter().map(LayerSpec::n_params).sum());
        for l in &layers {
            let n = l.n_params();
            if n == 0 {
                continue;
            }
            let out_c = match *l {
                LayerSpec::Conv { out_c, .. } | LayerSpec::ConvTranspose { out_c, .. } => out_c,
                _ => 0,
            };
            let bound = (6.0 / l.fan_in() as f64).sqrt();
            for _ in 0..n - out_c {
                params.push(T::from(rng.gen_range(-bound..bound)).unwrap());
            }
            params.extend(std::iter::repeat_n(T::zero(), out_c));
        }
        Ok(Self { layers, params, in_shape })
    }

    pub fn out_shape(&self) -> (usize, usize, usize) {
        self.layers.iter().fold(self.in_shape, |s, l| l.out_shape(s).expect("validated at construction"))
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Converts parameters to another float type.
    pub fn cast<U: Float>(&self) -> Network<U> {
        Network {
            layers: self.layers.clone(),
            params: self.params.iter().map(|&p| U::from(p).unwrap()).collect(),
            in_shape: self.in_shape,
        }
    }

    /// Offset of the final parametric layer's weights and its parameter count.
    pub fn last_layer_params(&self) -> Option<std::ops::Range<usize>> {
        let mut offset = 0;
        let mut last = None;
        for l in &self.layers {
            let n = l.n_params();
            if n > 0 {
                last = Some(offset..offset + n);
            }
            offset += n;
        }
        last
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(input)?;
        Ok(self.run(input, false).activations.pop().expect("output present"))
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        if input.shape() != self.in_shape || input.data.len() != input.c * input.h * input.w {
            return Err(Error::Compatibility(format!(
                "network expects input {:?}, got {:?}",
                self.in_shape,
                input.shape()
            )));
        }
        Ok(())
    }

    fn run(&self, input: &Tensor<T>, keep: bool) -> Trace<T> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pool_index = Vec::new();
        let mut x = input.clone();
        let mut offset = 0;
        for l in &self.layers {
            let p = &self.params[offset..offset + l.n_params()];
            offset += l.n_params();
            let y = match *l {
                LayerSpec::Conv { in_c, out_c, k } => conv_forward(&x, p, in_c, out_c, k),
                LayerSpec::Relu => Tensor {
                    c: x.c,
                    h: x.h,
                    w: x.w,
                    data: x.data.iter().map(|&v| v.max(T::zero())).collect(),
                },
                LayerSpec::MaxPool => {
                    let (y, idx) = maxpool_forward(&x);
                    if keep {
                        pool_index.push(idx);
                    }
                    y
                }
                LayerSpec::ConvTranspose { in_c, out_c } => convt_forward(&x, p, in_c, out_c),
            };
            if keep {
                activations.push(std::mem::replace(&mut x, y));
            } else {
                x = y;
            }
        }
        activations.push(x);
        Trace { activations, pool_index }
    }

    /// Output and parameter gradient of `sum(output * upstream)` where
    /// `upstream = loss_grad(output)`; returns the loss.
    pub fn forward_backward<F>(&self, input: &Tensor<T>, grad: &mut [T], loss_grad: F) -> Result<T>
    where
        F: FnOnce(&Tensor<T>) -> (T, Tensor<T>),
    {
        self.check_input(input)?;
        let trace = self.run(input, true);
        let (loss, mut upstream) = loss_grad(trace.activations.last().expect("output present"));
        let mut offset = self.params.len();
        let mut pool = trace.pool_index.len();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let n = l.n_params();
            offset -= n;
            let x = &trace.activations[i];
            let p = &self.params[offset..offset + n];
            let g = &mut grad[offset..offset + n];
            upstream = match *l {
                LayerSpec::Conv { in_c, out_c, k } => conv_backward(x, p, g, &upstream, in_c, out_c, k, i > 0),
                LayerSpec::Relu => Tensor {
                    data: x
                        .data
                        .iter()
                        .zip(&upstream.data)
                        .map(|(&v, &d)| if v > T::zero() { d } else { T::zero() })
                        .collect(),
                    ..upstream
                },
                LayerSpec::MaxPool => {
                    pool -= 1;
                    maxpool_backward(x, &trace.pool_index[pool], &upstream)
                }
                LayerSpec::ConvTranspose { in_c, out_c } => convt_backward(x, p, g, &upstream, in_c, out_c),
            };
        }
        Ok(loss)
    }
}

fn conv_forward<T: Float>(x: &Tensor<T>, p: &[T], in_c: usize, out_c: usize, k: usize) -> Tensor<T> {
    let (h, w) = (x.h, x.w);
    let pad = k / 2;
    let (weights, bias) = p.split_at(out_c * in_c * k * k);
    let mut y = Tensor::zeros(out_c, h, w);
    for o in 0..out_c {
        let out = &mut y.data[o * h * w..(o + 1) * h * w];
        out.iter_mut().for_each(|v| *v = bias[o]);
        for c in 0..in_c {
            let inp = &x.data[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = weights[((o * in_c + c) * k + ky) * k + kx];
                    if wv == T::zero() {
                        continue;
                    }
                    let (y0, y1) = (pad.saturating_sub(ky), (h + pad - ky).min(h));
                    let (x0, x1) = (pad.saturating_sub(kx), (w + pad - kx).min(w));
                    for yy in y0..y1 {
                        let iy = yy + ky - pad;
                        let orow = &mut out[yy * w + x0..yy * w + x1];
                        let irow = &inp[iy * w + x0 + kx - pad..iy * w + x1 + kx - pad];
                        for (o_, &i_) in orow.iter_mut().zip(irow) {
                            *o_ = *o_ + wv * i_;
                        }
                    }
                }
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Float>(
    x: &Tensor<T>,
    p: &[T],
    g: &mut [T],
    dy: &Tensor<T>,
    in_c: usize,
    out_c: usize,
    k: usize,
    need_input_grad: bool,
) -> Tensor<T> {
    let (h, w) = (x.h, x.w);
    let pad = k / 2;
    let (weights, _) = p.split_at(out_c * in_c * k * k);
    let (gw, gb) = g.split_at_mut(out_c * in_c * k * k);
    let mut dx = Tensor::zeros(in_c, h, w);
    for o in 0..out_c {
        let dout = &dy.data[o * h * w..(o + 1) * h * w];
        gb[o] = gb[o] + dout.iter().fold(T::zero(), |a, &v| a + v);
        for c in 0..in_c {
            let inp = &x.data[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let wi = ((o * in_c + c) * k + ky) * k + kx;
                    let wv = weights[wi];
                    let (y0, y1) = (pad.saturating_sub(ky), (h + pad - ky).min(h));
                    let (x0, x1) = (pad.saturating_sub(kx), (w + pad - kx).min(w));
                    let mut acc = T::zero();
                    for yy in y0..y1 {
                        let iy = yy + ky - pad;
                        let drow = &dout[yy * w + x0..yy * w + x1];
                        let lo = iy * w + x0 + kx - pad;
                        let irow = &inp[lo..lo + (x1 - x0)];
                        for (&d, &i_) in drow.iter().zip(irow) {
                            acc = acc + d * i_;
                        }
                        if need_input_grad {
                            let dxrow = &mut dx.data[c * h * w + lo..c * h * w + lo + (x1 - x0)];
                            for (dx_, &d) in dxrow.iter_mut().zip(drow) {
                                *dx_ = *dx_ + wv * d;
                            }
                        }
                    }
                    gw[wi] = gw[wi] + acc;
                }
            }
        }
    }
    dx
}

fn maxpool_forward<T: Float>(x: &Tensor<T>) -> (Tensor<T>, Vec<usize>) {
    let (h2, w2) = (x.h / 2, x.w / 2);
    let mut y = Tensor::zeros(x.c, h2, w2);
    let mut idx = vec![0; x.c * h2 * w2];
    for c in 0..x.c {
        for i in 0..h2 {
            for j in 0..w2 {
                let mut best = c * x.h * x.w + 2 * i * x.w + 2 * j;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let cand = c * x.h * x.w + (2 * i + di) * x.w + 2 * j + dj;
                    if x.data[cand] > x.data[best] {
                        best = cand;
                    }
                }
                let o = (c * h2 + i) * w2 + j;
                y.data[o] = x.data[best];
                idx[o] = best;
            }
        }
    }
    (y, idx)
}

fn maxpool_backward<T: Float>(x: &Tensor<T>, idx: &[usize], dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = Tensor::zeros(x.c, x.h, x.w);
    for (o, &src) in idx.iter().enumerate() {
        dx.data[src] = dx.data[src] + dy.data[o];
    }
    dx
}

fn convt_forward<T: Float>(x: &Tensor<T>, p: &[T], in_c: usize, out_c: usize) -> Tensor<T> {
    let (h, w) = (x.h, x.w);
    let (weights, bias) = p.split_at(in_c * out_c * 4);
    let mut y = Tensor::zeros(out_c, 2 * h, 2 * w);
    for o in 0..out_c {
        for i in 0..2 * h {
            for j in 0..2 * w {
                y.data[(o * 2 * h + i) * 2 * w + j] = bias[o];
            }
        }
        for c in 0..in_c {
            let base = (c * out_c + o) * 4;
            let wk = [weights[base], weights[base + 1], weights[base + 2], weights[base + 3]];
            for i in 0..h {
                for j in 0..w {
                    let v = x.data[(c * h + i) * w + j];
                    for di in 0..2 {
                        for dj in 0..2 {
                            let out = &mut y.data[(o * 2 * h + 2 * i + di) * 2 * w + 2 * j + dj];
                            *out = *out + v * wk[di * 2 + dj];
                        }
                    }
                }
            }
        }
    }
    y
}

fn convt_backward<T: Float>(x: &Tensor<T>, p: &[T], g: &mut [T], dy: &Tensor<T>, in_c: usize, out_c: usize) -> Tensor<T> {
    let (h, w) = (x.h, x.w);
    let (weights, _) = p.split_at(in_c * out_c * 4);
    let (gw, gb) = g.split_at_mut(in_c * out_c * 4);
    let mut dx = Tensor::zeros(in_c, h, w);
    for o in 0..out_c {
        let plane = &dy.data[o * 4 * h * w..(o + 1) * 4 * h * w];
        gb[o] = gb[o] + plane.iter().fold(T::zero(), |a, &v| a + v);
        for c in 0..in_c {
            let base = (c * out_c + o) * 4;
            for i in 0..h {
                for j in 0..w {
                    let v = x.data[(c * h + i) * w + j];
                    let mut back = T::zero();
                    for di in 0..2 {
                        for dj in 0..2 {
                            let d = plane[(2 * i + di) * 2 * w + 2 * j + dj];
                            gw[base + di * 2 + dj] = gw[base + di * 2 + dj] + v * d;
                            back = back + weights[base + di * 2 + dj] * d;
                        }
                    }
                    dx.data[(c * h + i) * w + j] = dx.data[(c * h + i) * w + j] + back;
                }
            }
        }
    }
    dx
}

fn softplus<T: Float>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid<T: Float>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// A labeled agent pixel: `(row, col, grade)`.
pub type LabeledPixel = (usize, usize, u8);

/// Sum over cross-grade pixel pairs of `ln(1 + e^(s_lo - s_hi))`, with the
/// gradient image (nonzero only at labeled pixels). Returns the pair count too.
pub fn pairwise_image_loss<T: Float>(scores: &Tensor<T>, labels: &[LabeledPixel]) -> (T, Tensor<T>, usize) {
    let mut grad = Tensor::zeros(scores.c, scores.h, scores.w);
    let mut loss = T::zero();
    let mut pairs = 0;
    let at = |r: usize, c: usize| r * scores.w + c;
    for (a, &(ra, ca, ga)) in labels.iter().enumerate() {
        for &(rb, cb, gb) in &labels[a + 1..] {
            if ga == gb {
                continue;
            }
            let (hi, lo) = if ga > gb { (at(ra, ca), at(rb, cb)) } else { (at(rb, cb), at(ra, ca)) };
            let diff = scores.data[lo] - scores.data[hi];
            loss = loss + softplus(diff);
            let s = sigmoid(diff);
            grad.data[hi] = grad.data[hi] - s;
            grad.data[lo] = grad.data[lo] + s;
            pairs += 1;
        }
    }
    (loss, grad, pairs)
}

pub const AGENT_PIXEL_WEIGHT: f64 = 1.05;
pub const BACKGROUND_WEIGHT: f64 = 0.05;

/// Weighted per-pixel logistic loss against `label >= grade-1 intensity`,
/// normalized by the total weight.
pub fn pointwise_image_loss<T: Float>(scores: &Tensor<T>, label_image: &[u8]) -> (T, Tensor<T>) {
    let mut grad = Tensor::zeros(scores.c, scores.h, scores.w);
    let (agent_w, bg_w) = (T::from(AGENT_PIXEL_WEIGHT).unwrap(), T::from(BACKGROUND_WEIGHT).unwrap());
    let total: T = label_image.iter().fold(T::zero(), |a, &b| a + if b > 0 { agent_w } else { bg_w });
    let mut loss = T::zero();
    for (i, &b) in label_image.iter().enumerate() {
        let weight = if b > 0 { agent_w } else { bg_w } / total;
        let s = scores.data[i];
        let positive = b >= GRADE_INTENSITY[1];
        loss = loss + weight * if positive { softplus(-s) } else { softplus(s) };
        let y = if positive { T::one() } else { T::zero() };
        grad.data[i] = weight * (sigmoid(s) - y);
    }
    (loss, grad)
}

/// Neighborhood window sizes for a grid, from the large-grid windows 20/10/5
/// scaled to the grid and rounded up to odd sizes.
pub fn neighborhood_windows(grid: usize) -> [usize; 3] {
    let odd = |s: f64| {
        let v = (s * grid as f64 / 200.0).ceil().max(1.0) as usize;
        if v.is_multiple_of(2) {
            v + 1
        } else {
            v
        }
    };
    [odd(20.0), odd(10.0), odd(5.0)]
}

/// `(max, mean)` of the score image over each window centered at the agent
/// pixel, largest window first; all `-1` when the agent is off the raster.
pub fn extract_cnn_features(scores: &ScoreImage, pixel: Option<(usize, usize)>) -> [f64; 6] {
    let Some((r, c)) = pixel else {
        return [-1.0; 6];
    };
    let g = scores.grid;
    let mut out = [0.0; 6];
    for (n, &win) in neighborhood_windows(g).iter().enumerate() {
        let half = win / 2;
        let (r0, r1) = (r.saturating_sub(half), (r + half).min(g - 1));
        let (c0, c1) = (c.saturating_sub(half), (c + half).min(g - 1));
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for rr in r0..=r1 {
            for cc in c0..=c1 {
                let v = f64::from(scores.data[rr * g + cc]);
                max = max.max(v);
                sum += v;
            }
        }
        out[2 * n] = max;
        out[2 * n + 1] = sum / ((r1 - r0 + 1) * (c1 - c0 + 1)) as f64;
    }
    out
}

/// Per-pixel scores, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreImage {
    pub grid: usize,
    pub data: Vec<f32>,
}

impl ScoreImage {
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.grid + col]
    }

    /// Bytes for a PGM dump, min-max normalized.
    pub fn to_gray(&self) -> Vec<u8> {
        let lo = self.data.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        self.data.iter().map(|&v| ((v - lo) / span * 255.0).round() as u8).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub epochs: usize,
    /// Scenes per optimizer step.
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Step size multiplier applied after each epoch.
    pub lr_decay: f64,
    pub loss: LossKind,
    pub seed: u64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            epochs: 8,
            batch_size: 8,
            learning_rate: 3e-3,
            lr_decay: 0.85,
            loss: LossKind::Pairwise,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnnTrainingLog {
    pub steps: usize,
    pub epoch_loss: Vec<f64>,
    pub final_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CnnModel {
    pub net: Network<f32>,
    pub loss: LossKind,
    pub grid: usize,
    pub training: CnnTrainingLog,
}

/// One training scene: its raster, labeled agent pixels and label image.
#[derive(Clone, Debug)]
pub struct CnnExample {
    pub stack: RasterStack,
    pub labels: Vec<LabeledPixel>,
    pub label_image: Vec<u8>,
}

impl CnnModel {
    pub fn new(grid: usize, loss: LossKind, seed: u64) -> Result<Self> {
        Ok(Self {
            net: Network::new(default_architecture(N_CHANNELS), (N_CHANNELS, grid, grid), seed)?,
            loss,
            grid,
            training: CnnTrainingLog {
                steps: 0,
                epoch_loss: Vec::new(),
                final_loss: None,
            },
        })
    }

    pub fn forward(&self, stack: &RasterStack) -> Result<ScoreImage> {
        if stack.grid != self.grid || stack.data.len() != N_CHANNELS * self.grid * self.grid {
            return Err(Error::Compatibility(format!(
                "cnn expects a {g}x{g} stack, got {s}x{s}",
                g = self.grid,
                s = stack.grid
            )));
        }
        let out = self.net.forward(&Tensor::from_stack(stack))?;
        Ok(ScoreImage {
            grid: self.grid,
            data: out.data,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = FileHeader {
            version: MODEL_VERSION,
            loss: self.loss,
            grid: self.grid,
            in_shape: self.net.in_shape,
            layers: self.net.layers.clone(),
            n_params: self.net.params.len(),
            training: self.training.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(12 + json.len() + 4 * self.net.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for p in &self.net.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(Error::Format("not a cnn model file (bad magic)".into()));
        }
        let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let json = bytes
            .get(12..12 + len)
            .ok_or_else(|| Error::Format("cnn model header truncated".into()))?;
        let version: serde_json::Value =
            serde_json::from_slice(json).map_err(|e| Error::Format(format!("cnn model header: {e}")))?;
        match version.get("version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(MODEL_VERSION) => {}
            Some(v) => {
                return Err(Error::UnsupportedVersion {
                    found: v as u32,
                    supported: MODEL_VERSION,
                })
            }
            None => return Err(Error::Format("cnn model header lacks a version".into())),
        }
        let header: FileHeader =
            serde_json::from_slice(json).map_err(|e| Error::Format(format!("cnn model header: {e}")))?;
        let body = &bytes[12 + len..];
        if body.len() != 4 * header.n_params {
            return Err(Error::Format(format!(
                "cnn weights: {} bytes, expected {}",
                body.len(),
                4 * header.n_params
            )));
        }
        let params: Vec<f32> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Format("cnn weights contain non-finite values".into()));
        }
        let mut net = Network::<f32>::new(header.layers, header.in_shape, 0)
            .map_err(|e| Error::Format(format!("cnn layer chain: {e}")))?;
        if net.params.len() != params.len() {
            return Err(Error::Format("cnn parameter count does not match layers".into()));
        }
        net.params = params;
        if net.out_shape() != (1, header.grid, header.grid) {
            return Err(Error::Format("cnn output is not a single score image".into()));
        }
        Ok(Self {
            net,
            loss: header.loss,
            grid: header.grid,
            training: header.training,
        })
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

#[derive(Serialize, Deserialize)]
struct FileHeader {
    version: u32,
    loss: LossKind,
    grid: usize,
    in_shape: (usize, usize, usize),
    layers: Vec<LayerSpec>,
    n_params: usize,
    training: CnnTrainingLog,
}

/// Loss and output gradient for one example; pairwise losses are averaged
/// over the scene's pairs. `None` when the example carries no signal.
pub fn example_loss<T: Float>(scores: &Tensor<T>, ex: &CnnExample, loss: LossKind) -> Option<(T, Tensor<T>)> {
    match loss {
        LossKind::Pairwise => {
            let (l, mut g, pairs) = pairwise_image_loss(scores, &ex.labels);
            if pairs == 0 {
                return None;
            }
            let n = T::from(pairs).unwrap();
            g.data.iter_mut().for_each(|v| *v = *v / n);
            Some((l / n, g))
        }
        LossKind::Pointwise => Some(pointwise_image_loss(scores, &ex.label_image)),
    }
}

struct Adam {
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
}

impl Adam {
    const B1: f32 = 0.9;
    const B2: f32 = 0.999;
    const EPS: f32 = 1e-8;

    fn step(&mut self, params: &mut [f32], grad: &[f32], lr: f32) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Mini-batch Adam over scenes in a seeded shuffled order.
pub fn train_cnn(examples: &[CnnExample], grid: usize, cfg: &CnnConfig) -> Result<CnnModel> {
    let mut model = CnnModel::new(grid, cfg.loss, cfg.seed)?;
    if cfg.epochs == 0 {
        return Ok(model);
    }
    if examples.is_empty() {
        return Err(Error::Training("cnn training set is empty".into()));
    }
    let usable: Vec<usize> = (0..examples.len())
        .filter(|&i| match cfg.loss {
            LossKind::Pairwise => has_cross_grade(&examples[i].labels),
            LossKind::Pointwise => true,
        })
        .collect();
    if usable.is_empty() {
        return Err(Error::Training("no scene has a cross-grade pair".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_c0de);
    let n = model.net.n_params();
    let mut adam = Adam {
        m: vec![0.0; n],
        v: vec![0.0; n],
        t: 0,
    };
    let mut grad = vec![0.0f32; n];
    let mut lr = cfg.learning_rate as f32;
    let mut order = usable.clone();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size.max(1)) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0f32;
            for &i in batch {
                let ex = &examples[i];
                let l = model.net.forward_backward(&Tensor::from_stack(&ex.stack), &mut grad, |out| {
                    example_loss(out, ex, cfg.loss).unwrap_or_else(|| (0.0, Tensor::zeros(out.c, out.h, out.w)))
                })?;
                batch_loss += l;
            }
            let scale = 1.0 / batch.len() as f32;
            grad.iter_mut().for_each(|g| *g *= scale);
            batch_loss *= scale;
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training(format!("cnn loss diverged at step {}", model.training.steps)));
            }
            adam.step(&mut model.net.params, &grad, lr);
            model.training.steps += 1;
            epoch_loss += f64::from(batch_loss) * batch.len() as f64;
        }
        let mean = epoch_loss / order.len() as f64;
        model.training.epoch_loss.push(mean);
        model.training.final_loss = Some(mean);
        lr *= cfg.lr_decay as f32;
    }
    Ok(model)
}

fn has_cross_grade(labels: &[LabeledPixel]) -> bool {
    labels.iter().any(|a| labels.iter().any(|b| a.2 != b.2))
}
