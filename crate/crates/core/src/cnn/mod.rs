//! Shallow convolutional network with hand-written backpropagation:
//! Conv3x3 -> ReLU -> Conv3x3 -> ReLU -> MaxPool2x2 -> Conv3x3 -> ReLU ->
//! GlobalAveragePool -> Dense(1) -> Sigmoid, trained with RMSProp on binary
//! cross-entropy.
//!
//! Convolutions are same-padded, stride 1, and run as im2col + matrix
//! multiplication. The global-average-pool bridge makes the stack accept any
//! input size, which the miniature gradient-check networks rely on.

mod metrics;
mod optim;
mod train;

pub use metrics::{
    auc_rank, cross_validate, evaluate, ClassMetrics, Confusion, CrossValidateConfig,
    MetricsReport, Prediction,
};
pub use optim::{rmsprop_update, RmsProp, RmsPropConfig};
pub use train::{train, Snapshot, SnapshotEnsemble, TrainItem, TrainRun};

use crate::error::{Error, Result};
use crate::scalar::{cast, to_f64, Real};
use crate::spectrogram::{SpectroImage, IMAGE_SIZE};
use ndarray::{Array1, Array2, Array3, Array4, ArrayView3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const KERNEL: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    /// [out_channels, in_channels, 3, 3]
    pub weights: Array4<T>,
    pub bias: Array1<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    pub weights: Array1<T>,
    pub bias: Array1<T>, // length 1
}

/// The classifier. Channel counts are configurable; `(16, 16, 16)` is the
/// desk-scale default and `(128, 128, 64)` the wide configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ShallowCnn<T> {
    pub conv1: ConvLayer<T>,
    pub conv2: ConvLayer<T>,
    pub conv3: ConvLayer<T>,
    pub dense: DenseLayer<T>,
    channels: (usize, usize, usize),
}

pub const DEFAULT_CHANNELS: (usize, usize, usize) = (16, 16, 16);
pub const WIDE_CHANNELS: (usize, usize, usize) = (128, 128, 64);

fn he_conv<T: Real>(cout: usize, cin: usize, rng: &mut ChaCha8Rng) -> ConvLayer<T> {
    let fan_in = (cin * KERNEL * KERNEL) as f64;
    let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("valid stddev");
    let weights = Array4::from_shape_fn((cout, cin, KERNEL, KERNEL), |_| {
        cast::<T>(normal.sample(rng))
    });
    ConvLayer {
        weights,
        bias: Array1::zeros(cout),
    }
}

impl<T: Real> ShallowCnn<T> {
    /// Seeded initialization: conv kernels He-normal, every bias zero, dense
    /// weights zero — so an untrained model outputs exactly sigmoid(0) = 0.5.
    pub fn new(channels: (usize, usize, usize), seed: u64) -> Self {
        let (c1, c2, c3) = channels;
        assert!(c1 > 0 && c2 > 0 && c3 > 0, "channel counts must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            conv1: he_conv(c1, 1, &mut rng),
            conv2: he_conv(c2, c1, &mut rng),
            conv3: he_conv(c3, c2, &mut rng),
            dense: DenseLayer {
                weights: Array1::zeros(c3),
                bias: Array1::zeros(1),
            },
            channels,
        }
    }

    pub fn channels(&self) -> (usize, usize, usize) {
        self.channels
    }

    /// Exact trainable-parameter count for this configuration.
    pub fn param_count(&self) -> usize {
        self.conv1.weights.len()
            + self.conv1.bias.len()
            + self.conv2.weights.len()
            + self.conv2.bias.len()
            + self.conv3.weights.len()
            + self.conv3.bias.len()
            + self.dense.weights.len()
            + 1
    }

    /// Mutable flat views over every parameter tensor, canonical order:
    /// conv1.w, conv1.b, conv2.w, conv2.b, conv3.w, conv3.b, dense.w, dense.b.
    pub fn param_slices_mut(&mut self) -> [&mut [T]; 8] {
        [
            self.conv1.weights.as_slice_mut().expect("contiguous"),
            self.conv1.bias.as_slice_mut().expect("contiguous"),
            self.conv2.weights.as_slice_mut().expect("contiguous"),
            self.conv2.bias.as_slice_mut().expect("contiguous"),
            self.conv3.weights.as_slice_mut().expect("contiguous"),
            self.conv3.bias.as_slice_mut().expect("contiguous"),
            self.dense.weights.as_slice_mut().expect("contiguous"),
            self.dense.bias.as_slice_mut().expect("contiguous"),
        ]
    }

    pub fn param_slices(&self) -> [&[T]; 8] {
        [
            self.conv1.weights.as_slice().expect("contiguous"),
            self.conv1.bias.as_slice().expect("contiguous"),
            self.conv2.weights.as_slice().expect("contiguous"),
            self.conv2.bias.as_slice().expect("contiguous"),
            self.conv3.weights.as_slice().expect("contiguous"),
            self.conv3.bias.as_slice().expect("contiguous"),
            self.dense.weights.as_slice().expect("contiguous"),
            self.dense.bias.as_slice().expect("contiguous"),
        ]
    }

    /// Pre-sigmoid output for an arbitrary-size single-channel field.
    pub fn forward_logit(&self, pixels: &Array2<T>) -> T {
        let input = pixels.view().insert_axis(Axis(0));
        let a1 = relu(conv_forward(&self.conv1, &input));
        let a2 = relu(conv_forward(&self.conv2, &a1.view()));
        let (pooled, _) = maxpool2(&a2);
        let a3 = relu(conv_forward(&self.conv3, &pooled.view()));
        let gap = global_average(&a3);
        self.dense.weights.dot(&gap) + self.dense.bias[0]
    }

    /// Probability for an arbitrary-size single-channel field.
    pub fn forward_pixels(&self, pixels: &Array2<T>) -> T {
        sigmoid(self.forward_logit(pixels))
    }

    /// Probability for a classifier input image; the 128x128 shape contract
    /// is enforced by `SpectroImage` itself.
    pub fn forward(&self, image: &SpectroImage<T>) -> T {
        debug_assert_eq!(image.pixels().nrows(), IMAGE_SIZE);
        self.forward_pixels(image.pixels())
    }

    /// Forward plus backward for one example; gradients are accumulated into
    /// `grads`. Returns (probability, binary cross-entropy loss).
    pub fn forward_backward(
        &self,
        pixels: &Array2<T>,
        label: bool,
        grads: &mut GradBuffer<T>,
    ) -> (T, T) {
        let input = pixels.view().insert_axis(Axis(0));

        let (z1, patches1) = conv_forward_cached(&self.conv1, &input);
        let a1 = relu(z1.clone());
        let (z2, patches2) = conv_forward_cached(&self.conv2, &a1.view());
        let a2 = relu(z2.clone());
        let (pooled, argmax) = maxpool2(&a2);
        let (z3, patches3) = conv_forward_cached(&self.conv3, &pooled.view());
        let a3 = relu(z3.clone());
        let gap = global_average(&a3);
        let logit = self.dense.weights.dot(&gap) + self.dense.bias[0];

        let prob = sigmoid(logit);
        let y = if label { T::one() } else { T::zero() };
        let loss = bce_from_logit(logit, y);

        // dL/dlogit = sigmoid(logit) - y.
        let dlogit = prob - y;
        for (g, &x) in grads.dense_w.iter_mut().zip(gap.iter()) {
            *g += dlogit * x;
        }
        grads.dense_b[0] += dlogit;

        // GAP spreads the gradient evenly over each channel plane.
        let (c3, h3, w3) = a3.dim();
        let plane = cast::<T>((h3 * w3) as f64);
        let mut d_a3 = Array3::zeros((c3, h3, w3));
        for c in 0..c3 {
            let g = dlogit * self.dense.weights[c] / plane;
            d_a3.index_axis_mut(Axis(0), c).fill(g);
        }
        let d_z3 = relu_backward(d_a3, &z3);
        let d_pooled = conv_backward(
            &self.conv3,
            &patches3,
            &d_z3,
            (self.channels.1, pooled.dim().1, pooled.dim().2),
            &mut grads.conv3_w,
            &mut grads.conv3_b,
        );
        let d_a2 = maxpool2_backward(&d_pooled, &argmax, a2.dim());
        let d_z2 = relu_backward(d_a2, &z2);
        let d_a1 = conv_backward(
            &self.conv2,
            &patches2,
            &d_z2,
            (self.channels.0, a1.dim().1, a1.dim().2),
            &mut grads.conv2_w,
            &mut grads.conv2_b,
        );
        let d_z1 = relu_backward(d_a1, &z1);
        conv_backward(
            &self.conv1,
            &patches1,
            &d_z1,
            (1, input.dim().1, input.dim().2),
            &mut grads.conv1_w,
            &mut grads.conv1_b,
        );

        (prob, loss)
    }
}

pub fn sigmoid<T: Real>(z: T) -> T {
    let one = T::one();
    if z >= T::zero() {
        one / (one + (-z).exp())
    } else {
        let e = z.exp();
        e / (one + e)
    }
}

/// Numerically stable binary cross-entropy from the logit:
/// max(z, 0) - z*y + ln(1 + exp(-|z|)).
pub fn bce_from_logit<T: Real>(z: T, y: T) -> T {
    z.max(T::zero()) - z * y + (T::one() + (-z.abs()).exp()).ln()
}

fn relu<T: Real>(mut x: Array3<T>) -> Array3<T> {
    x.mapv_inplace(|v| v.max(T::zero()));
    x
}

fn relu_backward<T: Real>(mut grad: Array3<T>, pre: &Array3<T>) -> Array3<T> {
    ndarray::Zip::from(&mut grad).and(pre).for_each(|g, &z| {
        if z <= T::zero() {
            *g = T::zero();
        }
    });
    grad
}

/// Lay out 3x3 same-padded patches as a (cin*9, H*W) matrix.
fn im2col<T: Real>(input: &ArrayView3<T>) -> Array2<T> {
    let (cin, h, w) = input.dim();
    let mut patches = Array2::zeros((cin * KERNEL * KERNEL, h * w));
    for c in 0..cin {
        for dy in 0..KERNEL {
            for dx in 0..KERNEL {
                let row = c * KERNEL * KERNEL + dy * KERNEL + dx;
                let mut out_row = patches.row_mut(row);
                for y in 0..h {
                    let sy = (y + dy).wrapping_sub(1);
                    if sy >= h {
                        continue; // zero padding
                    }
                    for x in 0..w {
                        let sx = (x + dx).wrapping_sub(1);
                        if sx >= w {
                            continue;
                        }
                        out_row[y * w + x] = input[[c, sy, sx]];
                    }
                }
            }
        }
    }
    patches
}

fn conv_from_patches<T: Real>(
    layer: &ConvLayer<T>,
    patches: &Array2<T>,
    h: usize,
    w: usize,
) -> Array3<T> {
    let cout = layer.weights.dim().0;
    let k = layer.weights.len() / cout;
    let w_mat = layer
        .weights
        .view()
        .into_shape_with_order((cout, k))
        .expect("contiguous weights");
    let mut out = w_mat.dot(patches);
    for (c, mut row) in out.rows_mut().into_iter().enumerate() {
        let b = layer.bias[c];
        row.mapv_inplace(|v| v + b);
    }
    out.into_shape_with_order((cout, h, w)).expect("shape")
}

fn conv_forward<T: Real>(layer: &ConvLayer<T>, input: &ArrayView3<T>) -> Array3<T> {
    let (_, h, w) = input.dim();
    let patches = im2col(input);
    conv_from_patches(layer, &patches, h, w)
}

fn conv_forward_cached<T: Real>(
    layer: &ConvLayer<T>,
    input: &ArrayView3<T>,
) -> (Array3<T>, Array2<T>) {
    let (_, h, w) = input.dim();
    let patches = im2col(input);
    let out = conv_from_patches(layer, &patches, h, w);
    (out, patches)
}

/// Accumulate weight/bias gradients and return the gradient w.r.t. the layer
/// input (col2im of W^T * d_out).
fn conv_backward<T: Real>(
    layer: &ConvLayer<T>,
    patches: &Array2<T>,
    d_out: &Array3<T>,
    input_dim: (usize, usize, usize),
    grad_w: &mut Array4<T>,
    grad_b: &mut Array1<T>,
) -> Array3<T> {
    let (cout, h, w) = d_out.dim();
    let k = layer.weights.len() / cout;
    let d_out_mat = d_out
        .view()
        .into_shape_with_order((cout, h * w))
        .expect("contiguous");

    for (c, row) in d_out_mat.rows().into_iter().enumerate() {
        grad_b[c] += row.sum();
    }
    let gw = d_out_mat.dot(&patches.t());
    let mut grad_w_mat = grad_w
        .view_mut()
        .into_shape_with_order((cout, k))
        .expect("contiguous");
    grad_w_mat += &gw;

    let w_mat = layer
        .weights
        .view()
        .into_shape_with_order((cout, k))
        .expect("contiguous");
    let d_patches = w_mat.t().dot(&d_out_mat);

    // col2im: scatter patch gradients back onto the padded input grid.
    let (cin, hi, wi) = input_dim;
    let mut d_input = Array3::zeros((cin, hi, wi));
    for c in 0..cin {
        for dy in 0..KERNEL {
            for dx in 0..KERNEL {
                let row = c * KERNEL * KERNEL + dy * KERNEL + dx;
                let src = d_patches.row(row);
                for y in 0..h {
                    let sy = (y + dy).wrapping_sub(1);
                    if sy >= hi {
                        continue;
                    }
                    for x in 0..w {
                        let sx = (x + dx).wrapping_sub(1);
                        if sx >= wi {
                            continue;
                        }
                        d_input[[c, sy, sx]] += src[y * w + x];
                    }
                }
            }
        }
    }
    d_input
}

/// 2x2 max pooling with stride 2 (floor on odd sizes); returns the pooled map
/// and the flat argmax index of every pooled cell for backprop routing.
fn maxpool2<T: Real>(input: &Array3<T>) -> (Array3<T>, Vec<usize>) {
    let (c, h, w) = input.dim();
    let (h2, w2) = (h / 2, w / 2);
    let mut out = Array3::zeros((c, h2, w2));
    let mut argmax = vec![0usize; c * h2 * w2];
    for ci in 0..c {
        for y in 0..h2 {
            for x in 0..w2 {
                let mut best = input[[ci, 2 * y, 2 * x]];
                let mut best_idx = (ci * h + 2 * y) * w + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let v = input[[ci, 2 * y + dy, 2 * x + dx]];
                    if v > best {
                        best = v;
                        best_idx = (ci * h + 2 * y + dy) * w + 2 * x + dx;
                    }
                }
                out[[ci, y, x]] = best;
                argmax[(ci * h2 + y) * w2 + x] = best_idx;
            }
        }
    }
    (out, argmax)
}

fn maxpool2_backward<T: Real>(
    d_out: &Array3<T>,
    argmax: &[usize],
    input_dim: (usize, usize, usize),
) -> Array3<T> {
    let mut d_input = Array3::zeros(input_dim);
    let flat = d_input.as_slice_mut().expect("contiguous");
    for (g, &idx) in d_out.iter().zip(argmax.iter()) {
        flat[idx] += *g;
    }
    d_input
}

fn global_average<T: Real>(input: &Array3<T>) -> Array1<T> {
    let (c, h, w) = input.dim();
    let plane = cast::<T>((h * w) as f64);
    Array1::from_iter(
        (0..c).map(|ci| input.index_axis(Axis(0), ci).sum() / plane),
    )
}

/// Gradient accumulator mirroring the model's parameter tensors.
#[derive(Debug, Clone)]
pub struct GradBuffer<T> {
    pub conv1_w: Array4<T>,
    pub conv1_b: Array1<T>,
    pub conv2_w: Array4<T>,
    pub conv2_b: Array1<T>,
    pub conv3_w: Array4<T>,
    pub conv3_b: Array1<T>,
    pub dense_w: Array1<T>,
    pub dense_b: Array1<T>,
}

impl<T: Real> GradBuffer<T> {
    pub fn zeros_like(model: &ShallowCnn<T>) -> Self {
        Self {
            conv1_w: Array4::zeros(model.conv1.weights.dim()),
            conv1_b: Array1::zeros(model.conv1.bias.len()),
            conv2_w: Array4::zeros(model.conv2.weights.dim()),
            conv2_b: Array1::zeros(model.conv2.bias.len()),
            conv3_w: Array4::zeros(model.conv3.weights.dim()),
            conv3_b: Array1::zeros(model.conv3.bias.len()),
            dense_w: Array1::zeros(model.dense.weights.len()),
            dense_b: Array1::zeros(1),
        }
    }

    pub fn zero(&mut self) {
        for s in self.slices_mut() {
            for v in s {
                *v = T::zero();
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for s in self.slices_mut() {
            for v in s {
                *v *= factor;
            }
        }
    }

    /// Canonical order matching `ShallowCnn::param_slices`.
    pub fn slices(&self) -> [&[T]; 8] {
        [
            self.conv1_w.as_slice().expect("contiguous"),
            self.conv1_b.as_slice().expect("contiguous"),
            self.conv2_w.as_slice().expect("contiguous"),
            self.conv2_b.as_slice().expect("contiguous"),
            self.conv3_w.as_slice().expect("contiguous"),
            self.conv3_b.as_slice().expect("contiguous"),
            self.dense_w.as_slice().expect("contiguous"),
            self.dense_b.as_slice().expect("contiguous"),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [T]; 8] {
        [
            self.conv1_w.as_slice_mut().expect("contiguous"),
            self.conv1_b.as_slice_mut().expect("contiguous"),
            self.conv2_w.as_slice_mut().expect("contiguous"),
            self.conv2_b.as_slice_mut().expect("contiguous"),
            self.conv3_w.as_slice_mut().expect("contiguous"),
            self.conv3_b.as_slice_mut().expect("contiguous"),
            self.dense_w.as_slice_mut().expect("contiguous"),
            self.dense_b.as_slice_mut().expect("contiguous"),
        ]
    }
}

/// JSON header written next to each flat parameter file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub arch: String,
    pub channels: [usize; 3],
    pub epoch: usize,
    pub seed: u64,
    pub param_count: usize,
}

pub const SNAPSHOT_ARCH: &str = "shallow-cnn-v1";

/// Serialize parameters as little-endian f64 in canonical layer order, with a
/// JSON header at `<base>.json` and the raw floats at `<base>.params`.
pub fn save_snapshot<T: Real>(
    base: impl AsRef<Path>,
    model: &ShallowCnn<T>,
    epoch: usize,
    seed: u64,
) -> Result<()> {
    let base = base.as_ref();
    let header = SnapshotHeader {
        arch: SNAPSHOT_ARCH.to_string(),
        channels: [model.channels.0, model.channels.1, model.channels.2],
        epoch,
        seed,
        param_count: model.param_count(),
    };
    std::fs::write(
        base.with_extension("json"),
        serde_json::to_string_pretty(&header)?,
    )?;
    let mut file = std::io::BufWriter::new(std::fs::File::create(base.with_extension("params"))?);
    for slice in model.param_slices() {
        for &v in slice {
            file.write_all(&to_f64(v).to_le_bytes())?;
        }
    }
    file.flush()?;
    Ok(())
}

/// Load a snapshot written by `save_snapshot`.
pub fn load_snapshot<T: Real>(base: impl AsRef<Path>) -> Result<(ShallowCnn<T>, SnapshotHeader)> {
    let base = base.as_ref();
    let header: SnapshotHeader =
        serde_json::from_str(&std::fs::read_to_string(base.with_extension("json"))?)?;
    if header.arch != SNAPSHOT_ARCH {
        return Err(Error::BadModelFile(format!(
            "unknown architecture {:?}",
            header.arch
        )));
    }
    let mut model = ShallowCnn::<T>::new(
        (header.channels[0], header.channels[1], header.channels[2]),
        header.seed,
    );
    if model.param_count() != header.param_count {
        return Err(Error::BadModelFile(format!(
            "parameter count mismatch: header {} vs arch {}",
            header.param_count,
            model.param_count()
        )));
    }
    let mut file = std::io::BufReader::new(std::fs::File::open(base.with_extension("params"))?);
    let mut buf = [0u8; 8];
    for slice in model.param_slices_mut() {
        for v in slice {
            file.read_exact(&mut buf).map_err(|e| {
                Error::BadModelFile(format!("truncated parameter file: {e}"))
            })?;
            *v = cast::<T>(f64::from_le_bytes(buf));
        }
    }
    if file.read(&mut buf)? != 0 {
        return Err(Error::BadModelFile("trailing bytes in parameter file".into()));
    }
    Ok((model, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_field(h: usize, w: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((h, w), |_| rng.gen_range(0.0..1.0))
    }

    #[test]
    fn untrained_model_outputs_exactly_half() {
        let model = ShallowCnn::<f64>::new(DEFAULT_CHANNELS, 1);
        let p = model.forward_pixels(&random_field(16, 16, 2));
        assert_eq!(p, 0.5);
    }

    #[test]
    fn probability_stays_strictly_inside_unit_interval() {
        let mut model = ShallowCnn::<f64>::new((4, 4, 4), 3);
        model.dense.weights.fill(0.5);
        model.dense.bias[0] = -0.2;
        for seed in 0..5 {
            let p = model.forward_pixels(&random_field(20, 12, seed));
            assert!(p > 0.0 && p < 1.0, "p = {p}");
        }
    }

    #[test]
    fn parameter_counts_for_both_configurations() {
        let small = ShallowCnn::<f64>::new(DEFAULT_CHANNELS, 0);
        // 16*1*9+16 + 16*16*9+16 + 16*16*9+16 + 16+1
        assert_eq!(small.param_count(), 160 + 2320 + 2320 + 17);
        let wide = ShallowCnn::<f64>::new(WIDE_CHANNELS, 0);
        // 128*1*9+128 + 128*128*9+128 + 64*128*9+64 + 64+1
        assert_eq!(wide.param_count(), 1280 + 147_584 + 73_792 + 65);
        assert_eq!(wide.param_count(), 222_721);
    }

    #[test]
    fn even_circular_shift_with_zero_margin_is_exact() {
        // Constant kernels; content kept away from the borders so zero
        // padding and circular padding agree, making the GAP output exactly
        // shift-invariant for even shifts.
        let mut model = ShallowCnn::<f64>::new((3, 3, 3), 7);
        for layer in [&mut model.conv1, &mut model.conv2, &mut model.conv3] {
            layer.weights.fill(0.05);
        }
        model.dense.weights.fill(0.3);
        model.dense.bias[0] = 0.1;

        let mut image = Array2::zeros((128, 128));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for y in 16..112 {
            for x in 16..112 {
                image[[y, x]] = rng.gen_range(0.0..1.0);
            }
        }
        let mut shifted = Array2::zeros((128, 128));
        for y in 0..128 {
            for x in 0..128 {
                shifted[[(y + 2) % 128, (x + 2) % 128]] = image[[y, x]];
            }
        }
        let a = model.forward_pixels(&image);
        let b = model.forward_pixels(&shifted);
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn conv_gradients_match_finite_differences_on_tiny_input() {
        // Coarse check on a 6x6 input; the acceptance suite runs the full
        // per-layer sweep on 8x8.
        let model = ShallowCnn::<f64>::new((2, 2, 2), 11);
        let mut model = model;
        // Non-zero dense weights so gradients reach the conv stack.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for v in model.dense.weights.iter_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
        let pixels = random_field(6, 6, 13);
        let label = true;

        let mut grads = GradBuffer::zeros_like(&model);
        model.forward_backward(&pixels, label, &mut grads);

        let h = 1e-5;
        for tensor in 0..8 {
            let n = model.param_slices()[tensor].len();
            for idx in (0..n).step_by(3.max(n / 7)) {
                let orig = model.param_slices()[tensor][idx];
                model.param_slices_mut()[tensor][idx] = orig + h;
                let up = bce_from_logit(model.forward_logit(&pixels), 1.0);
                model.param_slices_mut()[tensor][idx] = orig - h;
                let down = bce_from_logit(model.forward_logit(&pixels), 1.0);
                model.param_slices_mut()[tensor][idx] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads.slices()[tensor][idx];
                let denom = analytic.abs().max(numeric.abs()).max(1e-8);
                assert!(
                    ((analytic - numeric) / denom).abs() < 1e-4,
                    "tensor {tensor} idx {idx}: analytic {analytic} vs numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn snapshot_roundtrip_preserves_parameters() {
        let mut model = ShallowCnn::<f64>::new((4, 4, 4), 21);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for slice in model.param_slices_mut() {
            for v in slice {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("snap_epoch_4");
        save_snapshot(&base, &model, 4, 21).unwrap();
        let (loaded, header) = load_snapshot::<f64>(&base).unwrap();
        assert_eq!(header.epoch, 4);
        assert_eq!(header.channels, [4, 4, 4]);
        assert_eq!(loaded, model);

        // Corrupt: truncated file must be rejected.
        let params = base.with_extension("params");
        let bytes = std::fs::read(&params).unwrap();
        std::fs::write(&params, &bytes[..bytes.len() - 8]).unwrap();
        assert!(load_snapshot::<f64>(&base).is_err());
    }
}
