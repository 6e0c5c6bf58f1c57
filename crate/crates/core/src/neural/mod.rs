//! Exact layer semantics for the network zoo used by the workbench:
//! standard affine layers, 1D convolutions and transposed convolutions with
//! stride/dilation/grouping, and reshape bridges between vector and channel
//! form. Forward evaluation follows the defining formulas literally;
//! [`grad`] supplies reverse-mode gradients and [`json`] the wire format.
//!
//! Conventions baked in here:
//!
//! * Cross-correlation: `(w (x) v)_j = sum_i w_i v_{(j-1)t + (i-1)d + 1}`
//!   with output length `floor((n - d(s-1) - 1)/t) + 1`.
//! * The transposed operator is the exact adjoint of the above: input entry
//!   `v_i` scatters to output position `(i-1)t + (tap-1)d + 1`; index pairs
//!   falling outside the valid ranges contribute zero. Output length is
//!   `(n-1)t + d(s-1) + 1`.
//! * Grouping: output channels are split into `g` equal blocks; block `b`
//!   reads input channels `b*m/g .. (b+1)*m/g`. (For the square case m = m'
//!   this is the textbook index set; for m != m' it is the unique routing
//!   that keeps conv/tconv adjoint to each other.)
//! * ReLU derivative at 0 is taken as 0.

pub mod grad;
pub mod json;

use crate::linalg::Mat;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("layer {layer}: shape mismatch: {detail}")]
    ShapeMismatch { layer: usize, detail: String },
    #[error("invalid layer parameters: {0}")]
    BadLayer(String),
    #[error("network serialization: {0}")]
    Serde(String),
}

/// Channels-by-length tensor, row-major (`data[c * length + i]`).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub length: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(channels: usize, length: usize, data: Vec<f64>) -> Result<Self, NeuralError> {
        if data.len() != channels * length {
            return Err(NeuralError::BadLayer(format!(
                "tensor data length {} != {channels} x {length}",
                data.len()
            )));
        }
        Ok(Tensor {
            channels,
            length,
            data,
        })
    }

    pub fn zeros(channels: usize, length: usize) -> Self {
        Tensor {
            channels,
            length,
            data: vec![0.0; channels * length],
        }
    }

    /// A vector in network form: one channel.
    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            channels: 1,
            length: data.len(),
            data,
        }
    }

    #[inline]
    pub fn at(&self, c: usize, i: usize) -> f64 {
        self.data[c * self.length + i]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, i: usize) -> &mut f64 {
        &mut self.data[c * self.length + i]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(&self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }
}

/// Dense layer `v -> act(W v + b)`; weight is out x in.
#[derive(Clone, Debug, PartialEq)]
pub struct StandardLayer {
    pub weight: Mat,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl StandardLayer {
    pub fn new(weight: Mat, bias: Vec<f64>, activation: Activation) -> Result<Self, NeuralError> {
        if bias.len() != weight.rows {
            return Err(NeuralError::BadLayer(format!(
                "bias length {} != output dim {}",
                bias.len(),
                weight.rows
            )));
        }
        Ok(StandardLayer {
            weight,
            bias,
            activation,
        })
    }
}

/// Bias of a convolutional layer: a per-channel scalar broadcast over
/// positions (the constructors' default, which keeps size accounting at the
/// learnable-parameter count) or the fully general per-position matrix the
/// layer definition allows.
#[derive(Clone, Debug, PartialEq)]
pub enum ConvBias {
    PerChannel(Vec<f64>),
    /// Rows = output channels, columns = output positions.
    PerPosition(Mat),
}

impl ConvBias {
    fn check(&self, out_channels: usize) -> Result<(), NeuralError> {
        match self {
            ConvBias::PerChannel(v) if v.len() == out_channels => Ok(()),
            ConvBias::PerPosition(m) if m.rows == out_channels => Ok(()),
            _ => Err(NeuralError::BadLayer(
                "conv bias shape does not match output channels".into(),
            )),
        }
    }
}

/// Parameters shared by convolution and transposed convolution layers.
///
/// Weight storage follows the defining tensors: a convolution holds
/// `W[k_out][k_in_offset][tap]` and a transposed convolution
/// `W[k_in_offset][k_out][tap]`, both flattened row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub groups: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub dilation: usize,
    pub weights: Vec<f64>,
    pub bias: ConvBias,
    pub activation: Activation,
}

impl ConvLayer {
    fn validate(&self) -> Result<(), NeuralError> {
        if self.groups == 0
            || self.in_channels % self.groups != 0
            || self.out_channels % self.groups != 0
        {
            return Err(NeuralError::BadLayer(format!(
                "groups {} must divide in {} and out {}",
                self.groups, self.in_channels, self.out_channels
            )));
        }
        if self.kernel_size == 0 || self.stride == 0 || self.dilation == 0 {
            return Err(NeuralError::BadLayer(
                "kernel, stride, dilation must be positive".into(),
            ));
        }
        let expect = self.out_channels * (self.in_channels / self.groups) * self.kernel_size;
        if self.weights.len() != expect {
            return Err(NeuralError::BadLayer(format!(
                "weight length {} != {expect}",
                self.weights.len()
            )));
        }
        self.bias.check(self.out_channels)
    }

    #[inline]
    fn group_of_output(&self, k_out: usize) -> usize {
        k_out * self.groups / self.out_channels
    }

    #[inline]
    fn in_per_group(&self) -> usize {
        self.in_channels / self.groups
    }

    /// Convolution weight W[k_out][k_off][tap].
    #[inline]
    pub fn w_conv(&self, k_out: usize, k_off: usize, tap: usize) -> f64 {
        self.weights[(k_out * self.in_per_group() + k_off) * self.kernel_size + tap]
    }

    /// Transposed-convolution weight W[k_off][k_out][tap].
    #[inline]
    pub fn w_tconv(&self, k_off: usize, k_out: usize, tap: usize) -> f64 {
        self.weights[(k_off * self.out_channels + k_out) * self.kernel_size + tap]
    }

    pub fn conv_output_length(&self, n: usize) -> Option<usize> {
        let span = self.dilation * (self.kernel_size - 1) + 1;
        if n < span {
            return None;
        }
        Some((n - span) / self.stride + 1)
    }

    pub fn tconv_output_length(&self, n: usize) -> usize {
        (n - 1) * self.stride + self.dilation * (self.kernel_size - 1) + 1
    }
}

/// One layer of a network. Reshape bridges vector form `(1, c*l)` and
/// channel form `(c, l)`; it carries no parameters and is ignored by the
/// accounting.
#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Standard(StandardLayer),
    Conv(ConvLayer),
    TConv(ConvLayer),
    Reshape {
        channels: usize,
        length: usize,
        inverse: bool,
    },
}

impl Layer {
    pub fn is_reshape(&self) -> bool {
        matches!(self, Layer::Reshape { .. })
    }

    pub fn activation(&self) -> Option<Activation> {
        match self {
            Layer::Standard(l) => Some(l.activation),
            Layer::Conv(l) | Layer::TConv(l) => Some(l.activation),
            Layer::Reshape { .. } => None,
        }
    }

    pub fn set_activation(&mut self, act: Activation) {
        match self {
            Layer::Standard(l) => l.activation = act,
            Layer::Conv(l) | Layer::TConv(l) => l.activation = act,
            Layer::Reshape { .. } => {}
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetworkKind {
    ReluNet,
    Cnn,
}

/// An ordered stack of layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub kind: NetworkKind,
    pub layers: Vec<Layer>,
}

impl Network {
    pub fn new(kind: NetworkKind, layers: Vec<Layer>) -> Result<Self, NeuralError> {
        for layer in &layers {
            match layer {
                Layer::Conv(c) | Layer::TConv(c) => c.validate()?,
                Layer::Standard(l) => {
                    if l.bias.len() != l.weight.rows {
                        return Err(NeuralError::BadLayer("bias/weight mismatch".into()));
                    }
                }
                Layer::Reshape { .. } => {}
            }
        }
        Ok(Network { kind, layers })
    }

    /// Index of the last parameterized (non-reshape) layer.
    pub fn output_layer_index(&self) -> Option<usize> {
        self.layers.iter().rposition(|l| !l.is_reshape())
    }

    /// Scale the output layer's weights and bias by `eta`; by positive
    /// homogeneity this scales the network output by exactly `eta`.
    pub fn scale_output_layer(&mut self, eta: f64) {
        if let Some(idx) = self.output_layer_index() {
            match &mut self.layers[idx] {
                Layer::Standard(l) => {
                    for w in &mut l.weight.data {
                        *w *= eta;
                    }
                    for b in &mut l.bias {
                        *b *= eta;
                    }
                }
                Layer::Conv(c) | Layer::TConv(c) => {
                    for w in &mut c.weights {
                        *w *= eta;
                    }
                    match &mut c.bias {
                        ConvBias::PerChannel(v) => {
                            for b in v {
                                *b *= eta;
                            }
                        }
                        ConvBias::PerPosition(m) => {
                            for b in &mut m.data {
                                *b *= eta;
                            }
                        }
                    }
                }
                Layer::Reshape { .. } => unreachable!(),
            }
        }
    }

    /// The weight matrix of the output layer, when it is a standard layer.
    pub fn output_weight(&self) -> Option<&Mat> {
        match self.layers.get(self.output_layer_index()?) {
            Some(Layer::Standard(l)) => Some(&l.weight),
            _ => None,
        }
    }

    /// Flat views of every layer's parameters, in (weights, bias) order.
    pub fn param_slices_mut(&mut self) -> Vec<(&mut [f64], &mut [f64])> {
        self.layers
            .iter_mut()
            .map(|layer| match layer {
                Layer::Standard(l) => (&mut l.weight.data[..], &mut l.bias[..]),
                Layer::Conv(c) | Layer::TConv(c) => {
                    let bias = match &mut c.bias {
                        ConvBias::PerChannel(v) => &mut v[..],
                        ConvBias::PerPosition(m) => &mut m.data[..],
                    };
                    (&mut c.weights[..], bias)
                }
                Layer::Reshape { .. } => (&mut [][..], &mut [][..]),
            })
            .collect()
    }
}

fn shape_err(layer: usize, detail: impl Into<String>) -> NeuralError {
    NeuralError::ShapeMismatch {
        layer,
        detail: detail.into(),
    }
}

fn standard_forward(
    l: &StandardLayer,
    x: &Tensor,
    idx: usize,
    pre: &mut Tensor,
) -> Result<(), NeuralError> {
    if x.channels != 1 || x.length != l.weight.cols {
        return Err(shape_err(
            idx,
            format!(
                "standard layer expects (1, {}), got ({}, {})",
                l.weight.cols, x.channels, x.length
            ),
        ));
    }
    let mut out = l.weight.matvec(&x.data);
    for (o, b) in out.iter_mut().zip(&l.bias) {
        *o += b;
    }
    *pre = Tensor::vector(out);
    Ok(())
}

fn conv_forward(
    c: &ConvLayer,
    x: &Tensor,
    idx: usize,
    pre: &mut Tensor,
) -> Result<(), NeuralError> {
    if x.channels != c.in_channels {
        return Err(shape_err(
            idx,
            format!(
                "conv expects {} channels, got {}",
                c.in_channels, x.channels
            ),
        ));
    }
    let n = x.length;
    let n_out = c
        .conv_output_length(n)
        .ok_or_else(|| shape_err(idx, format!("input length {n} shorter than kernel span")))?;
    let mut out = Tensor::zeros(c.out_channels, n_out);
    let in_per_group = c.in_per_group();
    for k_out in 0..c.out_channels {
        let base = c.group_of_output(k_out) * in_per_group;
        for j in 0..n_out {
            let mut acc = 0.0;
            for k_off in 0..in_per_group {
                let chan = base + k_off;
                for tap in 0..c.kernel_size {
                    acc +=
                        c.w_conv(k_out, k_off, tap) * x.at(chan, j * c.stride + tap * c.dilation);
                }
            }
            *out.at_mut(k_out, j) = acc;
        }
    }
    add_bias(&mut out, &c.bias, idx)?;
    *pre = out;
    Ok(())
}

fn tconv_forward(
    c: &ConvLayer,
    x: &Tensor,
    idx: usize,
    pre: &mut Tensor,
) -> Result<(), NeuralError> {
    if x.channels != c.in_channels {
        return Err(shape_err(
            idx,
            format!(
                "tconv expects {} channels, got {}",
                c.in_channels, x.channels
            ),
        ));
    }
    let n = x.length;
    let n_out = c.tconv_output_length(n);
    let mut out = Tensor::zeros(c.out_channels, n_out);
    let in_per_group = c.in_per_group();
    for k_out in 0..c.out_channels {
        let base = c.group_of_output(k_out) * in_per_group;
        for k_off in 0..in_per_group {
            let chan = base + k_off;
            for i in 0..n {
                let v = x.at(chan, i);
                if v == 0.0 {
                    continue;
                }
                for tap in 0..c.kernel_size {
                    *out.at_mut(k_out, i * c.stride + tap * c.dilation) +=
                        c.w_tconv(k_off, k_out, tap) * v;
                }
            }
        }
    }
    add_bias(&mut out, &c.bias, idx)?;
    *pre = out;
    Ok(())
}

fn add_bias(out: &mut Tensor, bias: &ConvBias, idx: usize) -> Result<(), NeuralError> {
    match bias {
        ConvBias::PerChannel(v) => {
            for (c, b) in v.iter().enumerate() {
                for i in 0..out.length {
                    *out.at_mut(c, i) += b;
                }
            }
        }
        ConvBias::PerPosition(m) => {
            if m.cols != out.length || m.rows != out.channels {
                return Err(shape_err(
                    idx,
                    format!(
                        "per-position bias is {}x{}, output is {}x{}",
                        m.rows, m.cols, out.channels, out.length
                    ),
                ));
            }
            for c in 0..out.channels {
                for i in 0..out.length {
                    *out.at_mut(c, i) += m[(c, i)];
                }
            }
        }
    }
    Ok(())
}

fn reshape_forward(
    channels: usize,
    length: usize,
    inverse: bool,
    x: &Tensor,
    idx: usize,
) -> Result<Tensor, NeuralError> {
    if inverse {
        if x.channels != channels || x.length != length {
            return Err(shape_err(
                idx,
                format!(
                    "inverse reshape expects ({channels}, {length}), got ({}, {})",
                    x.channels, x.length
                ),
            ));
        }
        Ok(Tensor {
            channels: 1,
            length: channels * length,
            data: x.data.clone(),
        })
    } else {
        if x.channels != 1 || x.length != channels * length {
            return Err(shape_err(
                idx,
                format!(
                    "reshape expects (1, {}), got ({}, {})",
                    channels * length,
                    x.channels,
                    x.length
                ),
            ));
        }
        Ok(Tensor {
            channels,
            length,
            data: x.data.clone(),
        })
    }
}

/// State captured by [`forward_trace`]: the input fed to every layer, the
/// pre-activation of every parameterized layer, and the network output.
pub struct Trace {
    /// Input tensor of layer i.
    pub inputs: Vec<Tensor>,
    /// Pre-activation of layer i (empty tensors for reshapes).
    pub pre_activations: Vec<Tensor>,
    pub output: Tensor,
}

/// Forward evaluation.
pub fn forward(net: &Network, x: &Tensor) -> Result<Tensor, NeuralError> {
    let mut current = x.clone();
    for (idx, layer) in net.layers.iter().enumerate() {
        current = apply_layer(layer, &current, idx)?;
    }
    Ok(current)
}

fn apply_layer(layer: &Layer, x: &Tensor, idx: usize) -> Result<Tensor, NeuralError> {
    let mut pre = Tensor::zeros(0, 0);
    match layer {
        Layer::Standard(l) => {
            standard_forward(l, x, idx, &mut pre)?;
            pre.data
                .iter_mut()
                .for_each(|v| *v = l.activation.apply(*v));
            Ok(pre)
        }
        Layer::Conv(c) => {
            conv_forward(c, x, idx, &mut pre)?;
            pre.data
                .iter_mut()
                .for_each(|v| *v = c.activation.apply(*v));
            Ok(pre)
        }
        Layer::TConv(c) => {
            tconv_forward(c, x, idx, &mut pre)?;
            pre.data
                .iter_mut()
                .for_each(|v| *v = c.activation.apply(*v));
            Ok(pre)
        }
        Layer::Reshape {
            channels,
            length,
            inverse,
        } => reshape_forward(*channels, *length, *inverse, x, idx),
    }
}

/// Forward evaluation that additionally records layer inputs and
/// pre-activations (used by the ReLU conversion audit and by backprop).
pub fn forward_trace(net: &Network, x: &Tensor) -> Result<Trace, NeuralError> {
    let mut inputs = Vec::with_capacity(net.layers.len());
    let mut pres = Vec::with_capacity(net.layers.len());
    let mut current = x.clone();
    for (idx, layer) in net.layers.iter().enumerate() {
        let incoming = current;
        let mut pre = Tensor::zeros(0, 0);
        current = match layer {
            Layer::Standard(l) => {
                standard_forward(l, &incoming, idx, &mut pre)?;
                let mut out = pre.clone();
                out.data
                    .iter_mut()
                    .for_each(|v| *v = l.activation.apply(*v));
                out
            }
            Layer::Conv(c) => {
                conv_forward(c, &incoming, idx, &mut pre)?;
                let mut out = pre.clone();
                out.data
                    .iter_mut()
                    .for_each(|v| *v = c.activation.apply(*v));
                out
            }
            Layer::TConv(c) => {
                tconv_forward(c, &incoming, idx, &mut pre)?;
                let mut out = pre.clone();
                out.data
                    .iter_mut()
                    .for_each(|v| *v = c.activation.apply(*v));
                out
            }
            Layer::Reshape {
                channels,
                length,
                inverse,
            } => reshape_forward(*channels, *length, *inverse, &incoming, idx)?,
        };
        inputs.push(incoming);
        pres.push(pre);
    }
    Ok(Trace {
        inputs,
        pre_activations: pres,
        output: current,
    })
}

/// Depth, size, and shape extremes of a network's stored realization.
///
/// Depth counts parameterized layers minus the output layer; size counts
/// nonzero stored weights and biases; reshapes are ignored. These are the
/// values of the realization as stored (upper bounds for the minimum over
/// all realizations, which is not searched).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Accounting {
    pub depth: usize,
    pub size: usize,
    pub channels_max: usize,
    pub kernel_max: usize,
}

pub fn accounting(net: &Network) -> Accounting {
    let mut size = 0usize;
    let mut channels_max = 0usize;
    let mut kernel_max = 0usize;
    let mut param_layers = 0usize;
    for layer in &net.layers {
        match layer {
            Layer::Standard(l) => {
                param_layers += 1;
                size += l.weight.count_nonzero();
                size += l.bias.iter().filter(|v| **v != 0.0).count();
            }
            Layer::Conv(c) | Layer::TConv(c) => {
                param_layers += 1;
                size += c.weights.iter().filter(|v| **v != 0.0).count();
                size += match &c.bias {
                    ConvBias::PerChannel(v) => v.iter().filter(|b| **b != 0.0).count(),
                    ConvBias::PerPosition(m) => m.count_nonzero(),
                };
                channels_max = channels_max.max(c.in_channels).max(c.out_channels);
                kernel_max = kernel_max.max(c.kernel_size);
            }
            Layer::Reshape { .. } => {}
        }
    }
    Accounting {
        depth: param_layers.saturating_sub(1),
        size,
        channels_max,
        kernel_max,
    }
}

/// Unroll a convolution layer into the equivalent dense matrix `M` with
/// `M vec(V) = vec(conv(V))` (bias excluded), exposing the sparse
/// weight-sharing structure. `vec` is channel-major, matching [`Tensor`].
pub fn conv_to_dense(c: &ConvLayer, n: usize) -> Option<Mat> {
    let n_out = c.conv_output_length(n)?;
    let mut m = Mat::zeros(c.out_channels * n_out, c.in_channels * n);
    let in_per_group = c.in_per_group();
    for k_out in 0..c.out_channels {
        let base = c.group_of_output(k_out) * in_per_group;
        for j in 0..n_out {
            let row = k_out * n_out + j;
            for k_off in 0..in_per_group {
                let chan = base + k_off;
                for tap in 0..c.kernel_size {
                    let col = chan * n + j * c.stride + tap * c.dilation;
                    m[(row, col)] += c.w_conv(k_out, k_off, tap);
                }
            }
        }
    }
    Some(m)
}

/// Apply only the linear part of a layer: bias dropped, activation dropped.
/// Reshapes pass through. Used by the interval propagation of the ReLU
/// conversion scheme.
pub fn linear_apply(layer: &Layer, x: &Tensor) -> Result<Tensor, NeuralError> {
    apply_layer(&strip_layer(layer, false), x, 0)
}

/// Apply the entrywise absolute value of a layer's linear part; propagates
/// interval radii exactly for linear maps.
pub fn abs_linear_apply(layer: &Layer, x: &Tensor) -> Result<Tensor, NeuralError> {
    apply_layer(&strip_layer(layer, true), x, 0)
}

fn strip_layer(layer: &Layer, take_abs: bool) -> Layer {
    let mut stripped = layer.clone();
    match &mut stripped {
        Layer::Standard(l) => {
            l.activation = Activation::Identity;
            l.bias.iter_mut().for_each(|b| *b = 0.0);
            if take_abs {
                l.weight.data.iter_mut().for_each(|w| *w = w.abs());
            }
        }
        Layer::Conv(c) | Layer::TConv(c) => {
            c.activation = Activation::Identity;
            c.bias = ConvBias::PerChannel(vec![0.0; c.out_channels]);
            if take_abs {
                c.weights.iter_mut().for_each(|w| *w = w.abs());
            }
        }
        Layer::Reshape { .. } => {}
    }
    stripped
}

/// Scalar cross-correlation per the defining formula; the reference used in
/// tests against the layer implementation.
pub fn cross_correlate(w: &[f64], v: &[f64], stride: usize, dilation: usize) -> Vec<f64> {
    let span = dilation * (w.len() - 1) + 1;
    if v.len() < span {
        return Vec::new();
    }
    let n_out = (v.len() - span) / stride + 1;
    (0..n_out)
        .map(|j| {
            w.iter()
                .enumerate()
                .map(|(tap, wi)| wi * v[j * stride + tap * dilation])
                .sum()
        })
        .collect()
}

/// Scalar transposed cross-correlation: exact adjoint of
/// [`cross_correlate`], realized by scattering.
pub fn cross_correlate_transposed(
    w: &[f64],
    v: &[f64],
    stride: usize,
    dilation: usize,
) -> Vec<f64> {
    let n_out = (v.len() - 1) * stride + dilation * (w.len() - 1) + 1;
    let mut out = vec![0.0; n_out];
    for (i, vi) in v.iter().enumerate() {
        for (tap, wi) in w.iter().enumerate() {
            out[i * stride + tap * dilation] += wi * vi;
        }
    }
    out
}
