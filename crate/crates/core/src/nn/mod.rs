//! Minimal deterministic inference for small sequential networks.
//!
//! A [`Model`] is an ordered list of [`LayerSpec`]s applied to a channel-last
//! input. Layers flagged as traced contribute every scalar of their
//! post-activation output to the [`ActivationTrace`]; those scalars are the
//! neurons all coverage criteria are computed over.
//!
//! All arithmetic is `f32` and performed in a fixed order, so a forward pass
//! is a pure function of the model and input down to the bit.

mod fixture;
mod format;

pub use fixture::{generate_fixture_model, FixtureArch};
pub use format::{load_model, read_model, save_model, write_model};

use serde::{Deserialize, Serialize};

use crate::error::NnError;
use crate::tensor::{Shape, Tensor};

/// One layer of a sequential network.
///
/// Dense weights are stored `in_dim x out_dim` row-major. Convolution kernels
/// are stored `kh x kw x cin x cout` row-major and only `valid` padding is
/// supported. `relu` on dense/conv layers fuses the activation so that a
/// traced layer reports post-activation values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Dense {
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
        relu: bool,
    },
    Conv2d {
        kh: usize,
        kw: usize,
        cin: usize,
        cout: usize,
        stride: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
        relu: bool,
    },
    MaxPool2d {
        window: usize,
        stride: usize,
    },
    Relu,
    Flatten,
    Softmax,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::Relu => "relu",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Softmax => "softmax",
        }
    }

    /// Whether outputs of this layer kind may be counted as neurons.
    pub fn traceable(&self) -> bool {
        matches!(
            self,
            LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. } | LayerSpec::Relu
        )
    }

    /// `(weight count, bias count)` implied by the declared dimensions.
    pub fn declared_param_lens(&self) -> (usize, usize) {
        match self {
            LayerSpec::Dense {
                in_dim, out_dim, ..
            } => (in_dim * out_dim, *out_dim),
            LayerSpec::Conv2d {
                kh, kw, cin, cout, ..
            } => (kh * kw * cin * cout, *cout),
            _ => (0, 0),
        }
    }

    pub fn params(&self) -> Option<(&[f32], &[f32])> {
        match self {
            LayerSpec::Dense { weights, bias, .. } | LayerSpec::Conv2d { weights, bias, .. } => {
                Some((weights, bias))
            }
            _ => None,
        }
    }

    fn output_shape(&self, index: usize, input: &Shape) -> Result<Shape, NnError> {
        let mismatch = |expected: String| NnError::ShapeMismatch {
            layer: Some(index),
            expected,
            found: input.to_string(),
        };
        match self {
            LayerSpec::Dense {
                in_dim, out_dim, ..
            } => {
                if input.dims() != [*in_dim] {
                    return Err(mismatch(in_dim.to_string()));
                }
                Ok(Shape::new([*out_dim]))
            }
            LayerSpec::Conv2d {
                kh,
                kw,
                cin,
                cout,
                stride,
                ..
            } => {
                let (h, w, c) = match input.dims() {
                    [h, w, c] => (*h, *w, *c),
                    _ => return Err(mismatch(format!("HxWx{cin}"))),
                };
                if c != *cin || h < *kh || w < *kw {
                    return Err(mismatch(format!("at least {kh}x{kw}x{cin}")));
                }
                Ok(Shape::new([
                    (h - kh) / stride + 1,
                    (w - kw) / stride + 1,
                    *cout,
                ]))
            }
            LayerSpec::MaxPool2d { window, stride } => {
                let (h, w, c) = match input.dims() {
                    [h, w, c] => (*h, *w, *c),
                    _ => return Err(mismatch("HxWxC".into())),
                };
                if h < *window || w < *window {
                    return Err(mismatch(format!("at least {window}x{window}xC")));
                }
                Ok(Shape::new([
                    (h - window) / stride + 1,
                    (w - window) / stride + 1,
                    c,
                ]))
            }
            LayerSpec::Relu | LayerSpec::Softmax => Ok(input.clone()),
            LayerSpec::Flatten => Ok(Shape::new([input.numel()])),
        }
    }

    fn check(&self, index: usize) -> Result<(), NnError> {
        let invalid = |reason: &str| NnError::InvalidLayer {
            layer: index,
            reason: reason.to_string(),
        };
        match self {
            LayerSpec::Dense {
                in_dim, out_dim, ..
            } if *in_dim == 0 || *out_dim == 0 => {
                return Err(invalid("dense dimensions must be positive"));
            }
            LayerSpec::Conv2d {
                kh,
                kw,
                cin,
                cout,
                stride,
                ..
            } if *kh == 0 || *kw == 0 || *cin == 0 || *cout == 0 || *stride == 0 => {
                return Err(invalid("conv2d dimensions and stride must be positive"));
            }
            LayerSpec::MaxPool2d { window, stride } if *window == 0 || *stride == 0 => {
                return Err(invalid("maxpool2d window and stride must be positive"));
            }
            _ => {}
        }
        if let Some((weights, bias)) = self.params() {
            let (wn, bn) = self.declared_param_lens();
            if weights.len() != wn {
                return Err(NnError::WeightLengthMismatch {
                    layer: index,
                    expected: wn,
                    found: weights.len(),
                });
            }
            if bias.len() != bn {
                return Err(NnError::WeightLengthMismatch {
                    layer: index,
                    expected: bn,
                    found: bias.len(),
                });
            }
            if !weights.iter().chain(bias).all(|v| v.is_finite()) {
                return Err(NnError::NonFiniteWeight { layer: index });
            }
        }
        Ok(())
    }
}

/// A validated sequential network.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    name: String,
    input_shape: Shape,
    layers: Vec<LayerSpec>,
    traced: Vec<bool>,
    shapes: Vec<Shape>,
    /// First neuron id of each layer; meaningful for traced layers only.
    offsets: Vec<usize>,
    neuron_count: usize,
}

impl Model {
    /// Validates the layer stack: parameter lengths, finiteness, and that each
    /// layer's output shape is the next layer's input shape.
    pub fn new(
        name: impl Into<String>,
        input_shape: Shape,
        layers: Vec<LayerSpec>,
        traced_layers: &[usize],
    ) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::NoLayers);
        }
        let mut traced = vec![false; layers.len()];
        for &t in traced_layers {
            let layer = layers.get(t).ok_or_else(|| NnError::InvalidLayer {
                layer: t,
                reason: "traced index out of range".into(),
            })?;
            if !layer.traceable() {
                return Err(NnError::InvalidLayer {
                    layer: t,
                    reason: format!("{} layers cannot be traced", layer.kind()),
                });
            }
            traced[t] = true;
        }

        let mut shapes = Vec::with_capacity(layers.len());
        let mut offsets = Vec::with_capacity(layers.len());
        let mut current = input_shape.clone();
        let mut neuron_count = 0;
        for (i, layer) in layers.iter().enumerate() {
            layer.check(i)?;
            current = layer.output_shape(i, &current)?;
            offsets.push(neuron_count);
            if traced[i] {
                neuron_count += current.numel();
            }
            shapes.push(current.clone());
        }

        Ok(Model {
            name: name.into(),
            input_shape,
            layers,
            traced,
            shapes,
            offsets,
            neuron_count,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> &Shape {
        &self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn is_traced(&self, layer: usize) -> bool {
        self.traced[layer]
    }

    pub fn traced_layers(&self) -> Vec<usize> {
        (0..self.layers.len()).filter(|&i| self.traced[i]).collect()
    }

    /// Output shape of each layer, in order.
    pub fn layer_shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn output_shape(&self) -> &Shape {
        self.shapes.last().expect("validated model has layers")
    }

    /// Total number of traced scalars.
    pub fn neuron_count(&self) -> usize {
        self.neuron_count
    }

    /// Range of global neuron ids produced by a traced layer.
    pub fn neuron_range(&self, layer: usize) -> Option<std::ops::Range<usize>> {
        self.traced[layer].then(|| {
            let start = self.offsets[layer];
            start..start + self.shapes[layer].numel()
        })
    }

    pub fn forward(&self, input: &Tensor) -> Result<ActivationTrace, NnError> {
        if input.shape() != &self.input_shape {
            return Err(NnError::ShapeMismatch {
                layer: Some(0),
                expected: self.input_shape.to_string(),
                found: input.shape().to_string(),
            });
        }
        let (values, current, logits) = self.run_layers(input.data());
        let logits = logits.unwrap_or_else(|| current.clone());
        let predicted_label = argmax(&logits);
        Ok(ActivationTrace {
            values,
            logits,
            output: current,
            predicted_label,
        })
    }

    fn run_layers(&self, input: &[f32]) -> (Vec<f32>, Vec<f32>, Option<Vec<f32>>) {
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2, checked just above.
            return unsafe { self.run_layers_avx2(input) };
        }
        self.run_layers_inline(input)
    }

    /// Same arithmetic as the portable path, compiled with wider vectors.
    /// No fused multiply-add is emitted, so results are bit-identical.
    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn run_layers_avx2(&self, input: &[f32]) -> (Vec<f32>, Vec<f32>, Option<Vec<f32>>) {
        self.run_layers_inline(input)
    }

    #[inline(always)]
    fn run_layers_inline(&self, input: &[f32]) -> (Vec<f32>, Vec<f32>, Option<Vec<f32>>) {
        let mut values = Vec::with_capacity(self.neuron_count);
        let mut current: Vec<f32> = input.to_vec();
        let mut current_shape = &self.input_shape;
        let mut logits = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let out_shape = &self.shapes[i];
            if matches!(layer, LayerSpec::Softmax) && i + 1 == self.layers.len() {
                logits = Some(current.clone());
            }
            current = apply_layer(layer, &current, current_shape, out_shape);
            if self.traced[i] {
                values.extend_from_slice(&current);
            }
            current_shape = out_shape;
        }
        (values, current, logits)
    }
}

/// Per-neuron post-activation values recorded during one forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationTrace {
    /// Indexed by global neuron id: layer-major, then row-major within a layer.
    pub values: Vec<f32>,
    /// Network output before a trailing softmax (or the raw output if none).
    pub logits: Vec<f32>,
    /// Final network output.
    pub output: Vec<f32>,
    pub predicted_label: usize,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[inline(always)]
fn apply_layer(layer: &LayerSpec, input: &[f32], in_shape: &Shape, out_shape: &Shape) -> Vec<f32> {
    match layer {
        LayerSpec::Dense {
            in_dim,
            out_dim,
            weights,
            bias,
            relu,
        } => {
            let mut out = bias.clone();
            for i in 0..*in_dim {
                let x = input[i];
                let row = &weights[i * out_dim..(i + 1) * out_dim];
                for (acc, w) in out.iter_mut().zip(row) {
                    *acc += x * w;
                }
            }
            if *relu {
                relu_in_place(&mut out);
            }
            out
        }
        LayerSpec::Conv2d {
            kh,
            kw,
            cin,
            cout,
            stride,
            weights,
            bias,
            relu,
        } => {
            let (_, in_w, _) = in_shape.as_image().expect("validated conv input");
            let (out_h, out_w, _) = out_shape.as_image().expect("validated conv output");
            // Accumulate each output channel as a planar row so the innermost
            // loop runs over contiguous x positions; every output still sums
            // bias, then (ky, kx, ci) in order.
            let mut plane = vec![0.0f32; out_w];
            let mut out = vec![0.0f32; out_h * out_w * cout];
            for co in 0..*cout {
                if *stride == 1 && *cin == 1 && kh == kw && matches!(*kh, 3 | 5) {
                    let taps: Vec<f32> = (0..kh * kw).map(|t| weights[t * cout + co]).collect();
                    for oy in 0..out_h {
                        let rows = &input[oy * in_w..(oy + kh) * in_w];
                        match *kh {
                            3 => conv_plane_k::<3>(&mut plane, rows, in_w, &taps, bias[co]),
                            _ => conv_plane_k::<5>(&mut plane, rows, in_w, &taps, bias[co]),
                        }
                        let dst = &mut out[oy * out_w * cout..][..out_w * cout];
                        for (ox, &v) in plane.iter().enumerate() {
                            dst[ox * cout + co] = v;
                        }
                    }
                    continue;
                }
                for oy in 0..out_h {
                    plane.fill(bias[co]);
                    for ky in 0..*kh {
                        let in_row = &input[(oy * stride + ky) * in_w * cin..];
                        for kx in 0..*kw {
                            for ci in 0..*cin {
                                let w = weights[((ky * kw + kx) * cin + ci) * cout + co];
                                let src = &in_row[kx * cin + ci..];
                                if *stride == 1 && *cin == 1 {
                                    for (acc, &x) in plane.iter_mut().zip(&src[..out_w]) {
                                        *acc += x * w;
                                    }
                                } else {
                                    let step = stride * cin;
                                    for (acc, &x) in plane.iter_mut().zip(src.iter().step_by(step))
                                    {
                                        *acc += x * w;
                                    }
                                }
                            }
                        }
                    }
                    let dst = &mut out[oy * out_w * cout..][..out_w * cout];
                    for (ox, &v) in plane.iter().enumerate() {
                        dst[ox * cout + co] = v;
                    }
                }
            }
            if *relu {
                relu_in_place(&mut out);
            }
            out
        }
        LayerSpec::MaxPool2d { window, stride } => {
            let (_, in_w, c) = in_shape.as_image().expect("validated pool input");
            let (out_h, out_w, _) = out_shape.as_image().expect("validated pool output");
            let mut out = vec![f32::NEG_INFINITY; out_h * out_w * c];
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let dst = &mut out[(oy * out_w + ox) * c..][..c];
                    for wy in 0..*window {
                        for wx in 0..*window {
                            let src =
                                &input[((oy * stride + wy) * in_w + ox * stride + wx) * c..][..c];
                            for (d, &s) in dst.iter_mut().zip(src) {
                                if s > *d {
                                    *d = s;
                                }
                            }
                        }
                    }
                }
            }
            out
        }
        LayerSpec::Relu => {
            let mut out = input.to_vec();
            relu_in_place(&mut out);
            out
        }
        LayerSpec::Flatten => input.to_vec(),
        LayerSpec::Softmax => softmax(input),
    }
}

const LANES: usize = 8;

/// Single-channel, stride-1 convolution of one output row with a `K x K`
/// kernel. Accumulates bias, then taps in (ky, kx) order.
#[inline(always)]
fn conv_plane_k<const K: usize>(
    plane: &mut [f32],
    rows: &[f32],
    in_w: usize,
    taps: &[f32],
    bias: f32,
) {
    let taps: &[f32] = &taps[..K * K];
    let out_w = plane.len();
    let row_slices: [&[f32]; K] =
        std::array::from_fn(|ky| &rows[ky * in_w..ky * in_w + out_w + K - 1]);
    let mut ox = 0;
    // Several chunks at once give independent add chains per tap.
    while ox + 4 * LANES <= out_w {
        conv_chunks::<K, 4>(plane, &row_slices, taps, bias, ox);
        ox += 4 * LANES;
    }
    match (out_w - ox) / LANES {
        3 => conv_chunks::<K, 3>(plane, &row_slices, taps, bias, ox),
        2 => conv_chunks::<K, 2>(plane, &row_slices, taps, bias, ox),
        1 => conv_chunks::<K, 1>(plane, &row_slices, taps, bias, ox),
        _ => {}
    }
    ox += (out_w - ox) / LANES * LANES;
    for (o, dst) in plane.iter_mut().enumerate().skip(ox) {
        let mut a = bias;
        for ky in 0..K {
            for kx in 0..K {
                a += row_slices[ky][o + kx] * taps[ky * K + kx];
            }
        }
        *dst = a;
    }
}

/// `G` adjacent groups of `LANES` outputs starting at `ox`.
#[inline(always)]
fn conv_chunks<const K: usize, const G: usize>(
    plane: &mut [f32],
    row_slices: &[&[f32]; K],
    taps: &[f32],
    bias: f32,
    ox: usize,
) {
    let mut acc = [[bias; LANES]; G];
    for ky in 0..K {
        for kx in 0..K {
            let w = taps[ky * K + kx];
            for (g, a) in acc.iter_mut().enumerate() {
                let at = ox + g * LANES + kx;
                let r: &[f32; LANES] = row_slices[ky][at..at + LANES]
                    .try_into()
                    .expect("lane window");
                for l in 0..LANES {
                    a[l] += r[l] * w;
                }
            }
        }
    }
    for (g, a) in acc.iter().enumerate() {
        plane[ox + g * LANES..][..LANES].copy_from_slice(a);
    }
}

#[inline(always)]
fn relu_in_place(values: &mut [f32]) {
    for v in values {
        *v = v.max(0.0);
    }
}

#[inline(always)]
fn softmax(input: &[f32]) -> Vec<f32> {
    let max = input.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut out: Vec<f32> = input.iter().map(|&v| (v - max).exp()).collect();
    let sum: f32 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(in_dim: usize, out_dim: usize, weights: Vec<f32>, bias: Vec<f32>) -> LayerSpec {
        LayerSpec::Dense {
            in_dim,
            out_dim,
            weights,
            bias,
            relu: false,
        }
    }

    #[test]
    fn identity_dense_passes_input_through() {
        let eye = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let model = Model::new(
            "id",
            Shape::new([3]),
            vec![dense(3, 3, eye, vec![0.0; 3])],
            &[0],
        )
        .unwrap();
        let input = Tensor::new(Shape::new([3]), vec![1.0, 2.0, 3.0]).unwrap();
        let trace = model.forward(&input).unwrap();
        assert_eq!(trace.values, vec![1.0, 2.0, 3.0]);
        assert_eq!(trace.predicted_label, 2);
    }

    #[test]
    fn relu_clamps_negatives() {
        let model = Model::new("relu", Shape::new([3]), vec![LayerSpec::Relu], &[0]).unwrap();
        let input = Tensor::new(Shape::new([3]), vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(model.forward(&input).unwrap().values, vec![0.0, 0.0, 2.0]);
    }

    #[test]
    fn argmax_ties_pick_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn neuron_counts() {
        let model = Model::new(
            "d",
            Shape::new([4]),
            vec![dense(4, 10, vec![0.0; 40], vec![0.0; 10])],
            &[0],
        )
        .unwrap();
        assert_eq!(model.neuron_count(), 10);

        let conv = LayerSpec::Conv2d {
            kh: 3,
            kw: 3,
            cin: 1,
            cout: 3,
            stride: 1,
            weights: vec![0.1; 27],
            bias: vec![0.0; 3],
            relu: true,
        };
        let model = Model::new("c", Shape::new([6, 6, 1]), vec![conv], &[0]).unwrap();
        assert_eq!(model.layer_shapes()[0].dims(), &[4, 4, 3]);
        assert_eq!(model.neuron_count(), 48);
    }

    #[test]
    fn shape_errors_name_the_layer() {
        let layers = vec![LayerSpec::Flatten, dense(5, 2, vec![0.0; 10], vec![0.0; 2])];
        let err = Model::new("bad", Shape::new([2, 2, 1]), layers, &[]).unwrap_err();
        assert!(
            matches!(err, NnError::ShapeMismatch { layer: Some(1), .. }),
            "{err}"
        );

        let model = Model::new("ok", Shape::new([3]), vec![LayerSpec::Relu], &[]).unwrap();
        let err = model.forward(&Tensor::zeros(Shape::new([4]))).unwrap_err();
        assert!(matches!(err, NnError::ShapeMismatch { layer: Some(0), .. }));
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        let err = Model::new("e", Shape::new([2]), vec![], &[]).unwrap_err();
        assert_eq!(err.to_string(), "model has no layers");

        let err = Model::new(
            "w",
            Shape::new([2]),
            vec![dense(2, 2, vec![0.0; 3], vec![0.0; 2])],
            &[],
        )
        .unwrap_err();
        assert!(matches!(
            err,
            NnError::WeightLengthMismatch {
                layer: 0,
                expected: 4,
                found: 3
            }
        ));

        let err = Model::new(
            "n",
            Shape::new([2]),
            vec![dense(2, 1, vec![f32::NAN, 0.0], vec![0.0])],
            &[],
        )
        .unwrap_err();
        assert!(matches!(err, NnError::NonFiniteWeight { layer: 0 }));

        let err = Model::new("t", Shape::new([2]), vec![LayerSpec::Softmax], &[0]).unwrap_err();
        assert!(matches!(err, NnError::InvalidLayer { layer: 0, .. }));
    }

    #[test]
    fn softmax_is_a_distribution() {
        let model = Model::new("s", Shape::new([4]), vec![LayerSpec::Softmax], &[]).unwrap();
        let input = Tensor::new(Shape::new([4]), vec![1000.0, -3.0, 999.5, 0.0]).unwrap();
        let trace = model.forward(&input).unwrap();
        let sum: f32 = trace.output.iter().sum();
        assert!((sum - 1.0).abs() <= 1e-6);
        assert!(trace.output.iter().all(|p| (0.0..=1.0).contains(p)));
        assert_eq!(trace.logits, input.data());
        assert_eq!(trace.predicted_label, 0);
    }

    #[test]
    fn maxpool_takes_window_max() {
        let model = Model::new(
            "p",
            Shape::new([2, 2, 2]),
            vec![LayerSpec::MaxPool2d {
                window: 2,
                stride: 2,
            }],
            &[],
        )
        .unwrap();
        let input = Tensor::new(
            Shape::new([2, 2, 2]),
            vec![1.0, -1.0, 4.0, -2.0, 3.0, -5.0, 2.0, -0.5],
        )
        .unwrap();
        assert_eq!(model.forward(&input).unwrap().output, vec![4.0, -0.5]);
    }
}
