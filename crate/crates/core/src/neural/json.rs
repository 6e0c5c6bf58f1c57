//! JSON wire format for networks.
//!
//! Layout: `{"kind": "relu_net" | "cnn", "layers": [...]}` where each layer
//! object carries its hyperparameters plus weights and bias as base64 of
//! little-endian f64 values. Per-position conv biases additionally record
//! the number of output positions. The format is covered by round-trip
//! tests and is the on-disk representation of every trained or constructed
//! model.

use super::{
    Activation, ConvBias, ConvLayer, Layer, Network, NetworkKind, NeuralError, StandardLayer,
};
use crate::linalg::Mat;
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

pub fn floats_to_b64(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    BASE64.encode(bytes)
}

pub fn floats_from_b64(text: &str) -> Result<Vec<f64>, NeuralError> {
    let bytes = BASE64
        .decode(text)
        .map_err(|e| NeuralError::Serde(format!("bad base64: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(NeuralError::Serde(
            "float payload not a multiple of 8".into(),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

#[derive(Serialize, Deserialize)]
struct NetworkDto {
    kind: String,
    layers: Vec<LayerDto>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LayerDto {
    Standard {
        activation: String,
        out: usize,
        #[serde(rename = "in")]
        input: usize,
        weights: String,
        bias: String,
    },
    Conv1d(ConvDto),
    Tconv1d(ConvDto),
    Reshape {
        channels: usize,
        length: usize,
        inverse: bool,
    },
}

#[derive(Serialize, Deserialize)]
struct ConvDto {
    activation: String,
    in_channels: usize,
    out_channels: usize,
    groups: usize,
    kernel_size: usize,
    stride: usize,
    dilation: usize,
    weights: String,
    bias_kind: String,
    bias: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias_positions: Option<usize>,
}

fn act_name(a: Activation) -> String {
    match a {
        Activation::Relu => "relu".into(),
        Activation::Identity => "identity".into(),
    }
}

fn act_parse(s: &str) -> Result<Activation, NeuralError> {
    match s {
        "relu" => Ok(Activation::Relu),
        "identity" => Ok(Activation::Identity),
        other => Err(NeuralError::Serde(format!("unknown activation {other:?}"))),
    }
}

fn conv_dto(c: &ConvLayer) -> ConvDto {
    let (bias_kind, bias, bias_positions) = match &c.bias {
        ConvBias::PerChannel(v) => ("per_channel".to_string(), floats_to_b64(v), None),
        ConvBias::PerPosition(m) => (
            "per_position".to_string(),
            floats_to_b64(&m.data),
            Some(m.cols),
        ),
    };
    ConvDto {
        activation: act_name(c.activation),
        in_channels: c.in_channels,
        out_channels: c.out_channels,
        groups: c.groups,
        kernel_size: c.kernel_size,
        stride: c.stride,
        dilation: c.dilation,
        weights: floats_to_b64(&c.weights),
        bias_kind,
        bias,
        bias_positions,
    }
}

fn conv_from_dto(d: &ConvDto) -> Result<ConvLayer, NeuralError> {
    let weights = floats_from_b64(&d.weights)?;
    let bias_values = floats_from_b64(&d.bias)?;
    let bias = match d.bias_kind.as_str() {
        "per_channel" => ConvBias::PerChannel(bias_values),
        "per_position" => {
            let cols = d
                .bias_positions
                .ok_or_else(|| NeuralError::Serde("per_position bias needs positions".into()))?;
            if cols == 0 || bias_values.len() % cols != 0 {
                return Err(NeuralError::Serde("bias length not divisible".into()));
            }
            ConvBias::PerPosition(Mat {
                rows: bias_values.len() / cols,
                cols,
                data: bias_values,
            })
        }
        other => return Err(NeuralError::Serde(format!("unknown bias kind {other:?}"))),
    };
    Ok(ConvLayer {
        in_channels: d.in_channels,
        out_channels: d.out_channels,
        groups: d.groups,
        kernel_size: d.kernel_size,
        stride: d.stride,
        dilation: d.dilation,
        weights,
        bias,
        activation: act_parse(&d.activation)?,
    })
}

pub fn to_json(net: &Network) -> serde_json::Value {
    let layers = net
        .layers
        .iter()
        .map(|layer| match layer {
            Layer::Standard(l) => LayerDto::Standard {
                activation: act_name(l.activation),
                out: l.weight.rows,
                input: l.weight.cols,
                weights: floats_to_b64(&l.weight.data),
                bias: floats_to_b64(&l.bias),
            },
            Layer::Conv(c) => LayerDto::Conv1d(conv_dto(c)),
            Layer::TConv(c) => LayerDto::Tconv1d(conv_dto(c)),
            Layer::Reshape {
                channels,
                length,
                inverse,
            } => LayerDto::Reshape {
                channels: *channels,
                length: *length,
                inverse: *inverse,
            },
        })
        .collect();
    let dto = NetworkDto {
        kind: match net.kind {
            NetworkKind::ReluNet => "relu_net".into(),
            NetworkKind::Cnn => "cnn".into(),
        },
        layers,
    };
    serde_json::to_value(&dto).expect("network serializes")
}

pub fn from_json(value: &serde_json::Value) -> Result<Network, NeuralError> {
    let dto: NetworkDto = serde_json::from_value(value.clone())
        .map_err(|e| NeuralError::Serde(format!("bad network json: {e}")))?;
    let kind = match dto.kind.as_str() {
        "relu_net" => NetworkKind::ReluNet,
        "cnn" => NetworkKind::Cnn,
        other => return Err(NeuralError::Serde(format!("unknown kind {other:?}"))),
    };
    let mut layers = Vec::with_capacity(dto.layers.len());
    for layer in &dto.layers {
        layers.push(match layer {
            LayerDto::Standard {
                activation,
                out,
                input,
                weights,
                bias,
            } => {
                let data = floats_from_b64(weights)?;
                if data.len() != out * input {
                    return Err(NeuralError::Serde("weight size mismatch".into()));
                }
                Layer::Standard(StandardLayer {
                    weight: Mat {
                        rows: *out,
                        cols: *input,
                        data,
                    },
                    bias: floats_from_b64(bias)?,
                    activation: act_parse(activation)?,
                })
            }
            LayerDto::Conv1d(d) => Layer::Conv(conv_from_dto(d)?),
            LayerDto::Tconv1d(d) => Layer::TConv(conv_from_dto(d)?),
            LayerDto::Reshape {
                channels,
                length,
                inverse,
            } => Layer::Reshape {
                channels: *channels,
                length: *length,
                inverse: *inverse,
            },
        });
    }
    Network::new(kind, layers)
}
