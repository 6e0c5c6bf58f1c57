//! Reverse-mode gradients for [`Network`].
//!
//! The backward pass mirrors the forward formulas: the input gradient of a
//! convolution is the matching transposed scatter, the input gradient of a
//! transposed convolution is the matching gather, and weight gradients pair
//! upstream values against cached layer inputs.

use super::{forward_trace, Activation, ConvBias, ConvLayer, Layer, Network, NeuralError, Tensor};

/// Flat gradient of one layer's parameters, matching the storage order of
/// the layer's weights and bias.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradients for every layer (empty entries for reshapes).
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|layer| match layer {
                Layer::Standard(l) => LayerGrad {
                    weights: vec![0.0; l.weight.data.len()],
                    bias: vec![0.0; l.bias.len()],
                },
                Layer::Conv(c) | Layer::TConv(c) => LayerGrad {
                    weights: vec![0.0; c.weights.len()],
                    bias: vec![
                        0.0;
                        match &c.bias {
                            ConvBias::PerChannel(v) => v.len(),
                            ConvBias::PerPosition(m) => m.data.len(),
                        }
                    ],
                },
                Layer::Reshape { .. } => LayerGrad {
                    weights: Vec::new(),
                    bias: Vec::new(),
                },
            })
            .collect();
        Gradients { layers }
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (mine, theirs) in self.layers.iter_mut().zip(&other.layers) {
            for (a, b) in mine.weights.iter_mut().zip(&theirs.weights) {
                *a += b;
            }
            for (a, b) in mine.bias.iter_mut().zip(&theirs.bias) {
                *a += b;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *v *= factor;
            }
        }
    }
}

/// Reverse-mode differentiation: gradients of `<upstream, forward(net, x)>`
/// with respect to every parameter, plus the gradient with respect to `x`.
pub fn backward(
    net: &Network,
    x: &Tensor,
    upstream: &Tensor,
) -> Result<(Gradients, Tensor), NeuralError> {
    let trace = forward_trace(net, x)?;
    if upstream.channels != trace.output.channels || upstream.length != trace.output.length {
        return Err(NeuralError::ShapeMismatch {
            layer: net.layers.len(),
            detail: format!(
                "upstream is ({}, {}), output is ({}, {})",
                upstream.channels, upstream.length, trace.output.channels, trace.output.length
            ),
        });
    }
    let mut grads = Gradients::zeros_like(net);
    let mut g = upstream.clone();
    for idx in (0..net.layers.len()).rev() {
        let input = &trace.inputs[idx];
        let pre = &trace.pre_activations[idx];
        g = match &net.layers[idx] {
            Layer::Standard(l) => {
                apply_activation_grad(&mut g, l.activation, pre);
                let grad = &mut grads.layers[idx];
                let (rows, cols) = (l.weight.rows, l.weight.cols);
                for r in 0..rows {
                    let gr = g.data[r];
                    grad.bias[r] += gr;
                    for c in 0..cols {
                        grad.weights[r * cols + c] += gr * input.data[c];
                    }
                }
                let mut dx = vec![0.0; cols];
                for r in 0..rows {
                    let gr = g.data[r];
                    for c in 0..cols {
                        dx[c] += l.weight[(r, c)] * gr;
                    }
                }
                Tensor::vector(dx)
            }
            Layer::Conv(c) => {
                apply_activation_grad(&mut g, c.activation, pre);
                let grad = &mut grads.layers[idx];
                accumulate_conv_bias_grad(grad, &c.bias, &g);
                conv_backward(c, input, &g, grad)
            }
            Layer::TConv(c) => {
                apply_activation_grad(&mut g, c.activation, pre);
                let grad = &mut grads.layers[idx];
                accumulate_conv_bias_grad(grad, &c.bias, &g);
                tconv_backward(c, input, &g, grad)
            }
            Layer::Reshape { .. } => Tensor {
                channels: input.channels,
                length: input.length,
                data: g.data.clone(),
            },
        };
    }
    Ok((grads, g))
}

fn apply_activation_grad(g: &mut Tensor, act: Activation, pre: &Tensor) {
    if act == Activation::Relu {
        for (gv, pv) in g.data.iter_mut().zip(&pre.data) {
            if *pv <= 0.0 {
                *gv = 0.0;
            }
        }
    }
}

fn accumulate_conv_bias_grad(grad: &mut LayerGrad, bias: &ConvBias, g: &Tensor) {
    match bias {
        ConvBias::PerChannel(_) => {
            for c in 0..g.channels {
                let mut acc = 0.0;
                for i in 0..g.length {
                    acc += g.at(c, i);
                }
                grad.bias[c] += acc;
            }
        }
        ConvBias::PerPosition(_) => {
            for (b, gv) in grad.bias.iter_mut().zip(&g.data) {
                *b += gv;
            }
        }
    }
}

fn conv_backward(c: &ConvLayer, input: &Tensor, g: &Tensor, grad: &mut LayerGrad) -> Tensor {
    let in_per_group = c.in_channels / c.groups;
    let mut dx = Tensor::zeros(input.channels, input.length);
    for k_out in 0..c.out_channels {
        let base = (k_out * c.groups / c.out_channels) * in_per_group;
        for j in 0..g.length {
            let gv = g.at(k_out, j);
            if gv == 0.0 {
                continue;
            }
            for k_off in 0..in_per_group {
                let chan = base + k_off;
                for tap in 0..c.kernel_size {
                    let pos = j * c.stride + tap * c.dilation;
                    grad.weights[(k_out * in_per_group + k_off) * c.kernel_size + tap] +=
                        gv * input.at(chan, pos);
                    *dx.at_mut(chan, pos) += c.w_conv(k_out, k_off, tap) * gv;
                }
            }
        }
    }
    dx
}

fn tconv_backward(c: &ConvLayer, input: &Tensor, g: &Tensor, grad: &mut LayerGrad) -> Tensor {
    let in_per_group = c.in_channels / c.groups;
    let mut dx = Tensor::zeros(input.channels, input.length);
    for k_out in 0..c.out_channels {
        let base = (k_out * c.groups / c.out_channels) * in_per_group;
        for k_off in 0..in_per_group {
            let chan = base + k_off;
            for i in 0..input.length {
                let xv = input.at(chan, i);
                let mut dx_acc = 0.0;
                for tap in 0..c.kernel_size {
                    let pos = i * c.stride + tap * c.dilation;
                    let gv = g.at(k_out, pos);
                    grad.weights[(k_off * c.out_channels + k_out) * c.kernel_size + tap] += gv * xv;
                    dx_acc += c.w_tconv(k_off, k_out, tap) * gv;
                }
                *dx.at_mut(chan, i) += dx_acc;
            }
        }
    }
    dx
}
