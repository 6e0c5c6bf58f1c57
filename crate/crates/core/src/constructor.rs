//! Network construction.
//!
//! Three builders live here:
//!
//! * [`linear_to_relu`] converts a purely linear network into a ReLU network
//!   with identical weights whose outputs agree exactly on a compact box of
//!   inputs. Hidden biases shift every pre-activation to be nonnegative over
//!   the box (so the ReLUs never clip there) and a terminal bias cancels the
//!   accumulated shift:
//!
//!   `b_i = -min_C (W_{1->i} c + sum_k W_{k+1->i} b_k)`,
//!   `b_out = -sum_k W_{k+1->out} b_k`.
//!
//! * [`build_decoder_cnn`] assembles the convolutional decoder that
//!   reproduces the dense Fourier synthesis exactly: one channel pair per
//!   retained frequency, geometric-sequence doubling by dilated kernel-2
//!   transposed convolutions, a 1-tap summation conv, and a dilated kernel-2
//!   selection conv, followed by the ReLU conversion above.
//!
//! * [`compute_budget`] evaluates the sample-complexity bookkeeping
//!   (effective sample size, capacity bound, depth/size templates) as a
//!   transparent formula evaluator with configurable constants.

use crate::fom::Grid;
use crate::fourier::{synthesize_dense, LatentCode};
use crate::linalg::Mat;
use crate::neural::{
    abs_linear_apply, forward, linear_apply, Activation, ConvBias, ConvLayer, Layer, Network,
    NetworkKind, NeuralError, Tensor,
};
use crate::training::bound_rhs;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConstructError {
    #[error("sample set is empty")]
    EmptySampleSet,
    #[error("layer {layer} is not linear: {reason}")]
    NotLinear { layer: usize, reason: String },
    #[error("conversion exactness violated: max deviation {worst:e} (tolerance {tolerance:e})")]
    ConversionFailure { worst: f64, tolerance: f64 },
    #[error("sample dimension {got} does not match expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

/// Finite stand-in for a compact conversion domain: sample
/// points plus a per-coordinate inflation margin. The conversion minimizes
/// over the axis-aligned bounding box of the inflated points, so exactness
/// extends to everything inside that box, not just the samples.
#[derive(Clone, Debug)]
pub struct CompactSampleSet {
    points: Vec<Vec<f64>>,
    inflation: Vec<f64>,
}

impl CompactSampleSet {
    pub fn new(points: Vec<Vec<f64>>, inflation: Vec<f64>) -> Result<Self, ConstructError> {
        if points.is_empty() {
            return Err(ConstructError::EmptySampleSet);
        }
        let dim = points[0].len();
        if points.iter().any(|p| p.len() != dim) || inflation.len() != dim {
            return Err(ConstructError::DimensionMismatch {
                expected: dim,
                got: inflation.len(),
            });
        }
        Ok(CompactSampleSet { points, inflation })
    }

    /// Default margin: 10% of the observed per-coordinate range.
    pub fn with_default_inflation(points: Vec<Vec<f64>>) -> Result<Self, ConstructError> {
        if points.is_empty() {
            return Err(ConstructError::EmptySampleSet);
        }
        let dim = points[0].len();
        let mut inflation = vec![0.0; dim];
        for j in 0..dim {
            let lo = points.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min);
            let hi = points
                .iter()
                .map(|p| p[j])
                .fold(f64::NEG_INFINITY, f64::max);
            inflation[j] = 0.1 * (hi - lo);
        }
        CompactSampleSet::new(points, inflation)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Inflated axis-aligned bounding box as (lo, hi).
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let dim = self.dim();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for p in &self.points {
            for j in 0..dim {
                lo[j] = lo[j].min(p[j]);
                hi[j] = hi[j].max(p[j]);
            }
        }
        for j in 0..dim {
            lo[j] -= self.inflation[j];
            hi[j] += self.inflation[j];
        }
        (lo, hi)
    }
}

fn ensure_linear(net: &Network) -> Result<(), ConstructError> {
    for (idx, layer) in net.layers.iter().enumerate() {
        let bad = |reason: &str| ConstructError::NotLinear {
            layer: idx,
            reason: reason.to_string(),
        };
        match layer {
            Layer::Standard(l) => {
                if l.activation != Activation::Identity {
                    return Err(bad("activation present"));
                }
                if l.bias.iter().any(|b| *b != 0.0) {
                    return Err(bad("nonzero bias"));
                }
            }
            Layer::Conv(c) | Layer::TConv(c) => {
                if c.activation != Activation::Identity {
                    return Err(bad("activation present"));
                }
                let nonzero = match &c.bias {
                    ConvBias::PerChannel(v) => v.iter().any(|b| *b != 0.0),
                    ConvBias::PerPosition(m) => m.data.iter().any(|b| *b != 0.0),
                };
                if nonzero {
                    return Err(bad("nonzero bias"));
                }
            }
            Layer::Reshape { .. } => {}
        }
    }
    Ok(())
}

/// Convert a linear network to a ReLU network that agrees with it exactly on
/// the (inflated bounding box of the) sample set.
///
/// Weights are untouched; hidden layers receive the bias schedule described
/// in the module docs and ReLU activations, the output layer receives the
/// cancelling terminal bias. Interval arithmetic (exact for linear maps)
/// evaluates the entrywise minima over the box.
pub fn linear_to_relu(net: &Network, set: &CompactSampleSet) -> Result<Network, ConstructError> {
    ensure_linear(net)?;
    let (lo, hi) = set.bounding_box();
    let mut center = Tensor::vector(lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect());
    let mut radius = Tensor::vector(lo.iter().zip(&hi).map(|(a, b)| 0.5 * (b - a)).collect());
    let mut bias_acc = Tensor::vector(vec![0.0; set.dim()]);

    let mut converted = net.clone();
    let output_idx = converted
        .output_layer_index()
        .ok_or(ConstructError::EmptySampleSet)?;

    // Invariant maintained below: for input c in the box, the converted
    // prefix evaluates to (weight path) + bias_acc, where the weight path
    // W_{1->i} c lies in [center - radius, center + radius] (interval
    // arithmetic is conservative; any valid enclosure keeps the ReLUs
    // inactive on the box and the terminal bias cancels the shifts exactly).
    for idx in 0..converted.layers.len() {
        let layer = &net.layers[idx];
        if layer.is_reshape() {
            center = linear_apply(layer, &center)?;
            radius = linear_apply(layer, &radius)?;
            bias_acc = linear_apply(layer, &bias_acc)?;
            continue;
        }
        if idx == output_idx {
            // Terminal bias cancels the accumulated hidden shifts.
            let shift = linear_apply(layer, &bias_acc)?;
            let terminal: Vec<f64> = shift.data.iter().map(|v| -v).collect();
            set_layer_bias(&mut converted.layers[idx], &shift, terminal);
            break;
        }
        let q_center = linear_apply(layer, &center)?;
        let q_radius = abs_linear_apply(layer, &radius)?;
        let shift = linear_apply(layer, &bias_acc)?;
        // Entrywise lower bound of the pre-activation over the box, negated.
        let bias: Vec<f64> = q_center
            .data
            .iter()
            .zip(&q_radius.data)
            .zip(&shift.data)
            .map(|((c, r), s)| -(c + s - r))
            .collect();
        bias_acc = Tensor {
            channels: q_center.channels,
            length: q_center.length,
            data: shift.data.iter().zip(&bias).map(|(s, b)| s + b).collect(),
        };
        set_layer_bias(&mut converted.layers[idx], &q_center, bias);
        converted.layers[idx].set_activation(Activation::Relu);
        center = q_center;
        radius = q_radius;
    }
    Ok(converted)
}

fn set_layer_bias(layer: &mut Layer, shaped_like: &Tensor, bias: Vec<f64>) {
    match layer {
        Layer::Standard(l) => l.bias = bias,
        Layer::Conv(c) | Layer::TConv(c) => {
            c.bias = ConvBias::PerPosition(Mat {
                rows: shaped_like.channels,
                cols: shaped_like.length,
                data: bias,
            });
        }
        Layer::Reshape { .. } => {}
    }
}

/// The linear convolutional decoder: maps a latent code (as a one-channel
/// vector of length 2m+1) to the synthesized grid values, exactly equal to
/// [`synthesize_dense`] up to floating point.
///
/// Stage layout for a grid of level k (M = 2^{k+1} synthesis points):
///
/// 1. reshape to 2m+1 channels of length 1;
/// 2. a 1-tap mixing conv producing interleaved (re, im) channels per
///    frequency kappa = -m..m, seeded with z_kappa e^{2 pi i kappa / M};
/// 3. k+1 grouped transposed convs (kernel 2, dilation 2^r) that double each
///    geometric sequence: out = [v, alpha v], alpha = e^{2 pi i kappa 2^r / M};
/// 4. a 1-tap conv summing the real-part channels;
/// 5. a kernel-2 conv with dilation 2^k and taps [0, 1] selecting the upper
///    half of the synthesis points, which are the grid images (x_j + 1)/2.
pub fn linear_decoder(m: usize, grid: Grid) -> Network {
    let m_tilde = 2 * m + 1;
    let channels = 2 * m_tilde;
    let k = grid.level();
    let big_m = 1usize << (k + 1);
    let mut layers = Vec::with_capacity(k as usize + 5);
    layers.push(Layer::Reshape {
        channels: m_tilde,
        length: 1,
        inverse: false,
    });

    // Mixing conv: latent channel order is [a0, a1, b1, ..., am, bm];
    // output channel pair (2c, 2c+1) holds (Re, Im) of z_kappa e^{i phase},
    // kappa = c - m, phase = 2 pi kappa / M.
    let mut mix = vec![0.0; channels * m_tilde];
    for c in 0..m_tilde {
        let kappa = c as isize - m as isize;
        let phase = 2.0 * PI * kappa as f64 / big_m as f64;
        let (cr, ci) = (phase.cos(), phase.sin());
        let abs_k = kappa.unsigned_abs();
        let (a_idx, b_idx, sign) = if abs_k == 0 {
            (0usize, None, 0.0)
        } else {
            (
                2 * abs_k - 1,
                Some(2 * abs_k),
                if kappa > 0 { 1.0 } else { -1.0 },
            )
        };
        // z = a + i (sign b): Re(z e^{i phase}) = cr a - ci sign b,
        // Im = ci a + cr sign b.
        mix[(2 * c) * m_tilde + a_idx] = cr;
        mix[(2 * c + 1) * m_tilde + a_idx] = ci;
        if let Some(b_idx) = b_idx {
            mix[(2 * c) * m_tilde + b_idx] = -ci * sign;
            mix[(2 * c + 1) * m_tilde + b_idx] = cr * sign;
        }
    }
    layers.push(Layer::Conv(ConvLayer {
        in_channels: m_tilde,
        out_channels: channels,
        groups: 1,
        kernel_size: 1,
        stride: 1,
        dilation: 1,
        weights: mix,
        bias: ConvBias::PerChannel(vec![0.0; channels]),
        activation: Activation::Identity,
    }));

    // Doubling stages: grouped tconv, group = frequency, kernel 2,
    // dilation = current length. Weight layout (in_offset, out_channel, tap).
    for r in 0..=k {
        let len = 1usize << r;
        let mut weights = vec![0.0; 2 * channels * 2];
        for c in 0..m_tilde {
            let kappa = c as isize - m as isize;
            let alpha = 2.0 * PI * kappa as f64 * len as f64 / big_m as f64;
            let (ar, ai) = (alpha.cos(), alpha.sin());
            let re = 2 * c;
            let im = 2 * c + 1;
            let w = |k_off: usize, k_out: usize, tap: usize| (k_off * channels + k_out) * 2 + tap;
            // tap 0: identity copy into the first half
            weights[w(0, re, 0)] = 1.0;
            weights[w(1, im, 0)] = 1.0;
            // tap 1: multiply by alpha into the second half
            weights[w(0, re, 1)] = ar;
            weights[w(1, re, 1)] = -ai;
            weights[w(0, im, 1)] = ai;
            weights[w(1, im, 1)] = ar;
        }
        layers.push(Layer::TConv(ConvLayer {
            in_channels: channels,
            out_channels: channels,
            groups: m_tilde,
            kernel_size: 2,
            stride: 1,
            dilation: len,
            weights,
            bias: ConvBias::PerChannel(vec![0.0; channels]),
            activation: Activation::Identity,
        }));
    }

    // Sum the real-part channels.
    let mut sum_w = vec![0.0; channels];
    for c in 0..m_tilde {
        sum_w[2 * c] = 1.0;
    }
    layers.push(Layer::Conv(ConvLayer {
        in_channels: channels,
        out_channels: 1,
        groups: 1,
        kernel_size: 1,
        stride: 1,
        dilation: 1,
        weights: sum_w,
        bias: ConvBias::PerChannel(vec![0.0]),
        activation: Activation::Identity,
    }));

    // Select positions 2^k + 1 .. 2^{k+1} via taps [0, 1] at dilation 2^k.
    layers.push(Layer::Conv(ConvLayer {
        in_channels: 1,
        out_channels: 1,
        groups: 1,
        kernel_size: 2,
        stride: 1,
        dilation: 1usize << k,
        weights: vec![0.0, 1.0],
        bias: ConvBias::PerChannel(vec![0.0]),
        activation: Activation::Identity,
    }));

    Network::new(NetworkKind::Cnn, layers).expect("decoder layers are consistent")
}

/// Tolerance for decoder-vs-oracle agreement after ReLU conversion.
pub const DECODER_TOLERANCE: f64 = 1e-9;

/// Build the ReLU convolutional decoder: the linear synthesis network
/// converted over the sample set, validated against [`synthesize_dense`] on
/// every sample point.
pub fn build_decoder_cnn(
    m: usize,
    grid: Grid,
    set: &CompactSampleSet,
) -> Result<Network, ConstructError> {
    let m_tilde = 2 * m + 1;
    if set.dim() != m_tilde {
        return Err(ConstructError::DimensionMismatch {
            expected: m_tilde,
            got: set.dim(),
        });
    }
    let linear = linear_decoder(m, grid);
    let relu = linear_to_relu(&linear, set)?;
    let mut worst = 0.0_f64;
    for point in set.points() {
        let oracle = synthesize_dense(&LatentCode(point.clone()), grid);
        let got = forward(&relu, &Tensor::vector(point.clone()))?;
        let scale = oracle.values.iter().fold(1.0_f64, |mx, v| mx.max(v.abs()));
        for (a, b) in got.data.iter().zip(&oracle.values) {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    if worst > DECODER_TOLERANCE {
        return Err(ConstructError::ConversionFailure {
            worst,
            tolerance: DECODER_TOLERANCE,
        });
    }
    Ok(relu)
}

/// Configurable universal constants of the complexity templates.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BudgetConstants {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl Default for BudgetConstants {
    fn default() -> Self {
        BudgetConstants {
            c0: 1.0,
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
            c4: 1.0,
        }
    }
}

/// Either a raw training size (the effective size is derived) or the
/// effective size directly (for formula tests).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleBudget {
    TrainingSize { n: usize, failure_prob: f64 },
    Effective { n_tilde: f64 },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BudgetInput {
    pub constants: BudgetConstants,
    pub gamma: f64,
    pub eps: f64,
    pub p: usize,
    pub s: usize,
    pub m: usize,
    pub grid_k: u32,
    pub sample: SampleBudget,
    /// Magnitude bound on the solution operator, when available; enables the
    /// main error bound column.
    pub g_norm: Option<f64>,
}

/// Evaluated bookkeeping quantities. A transparent formula evaluator with
/// configurable constants, not a guarantee generator.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TheoryBudget {
    pub n_tilde: f64,
    pub delta: f64,
    pub reduced_depth_bound: f64,
    pub reduced_size_bound: f64,
    pub decoder_depth_bound: f64,
    pub decoder_size_bound: f64,
    pub decoder_channels_bound: f64,
    pub decoder_kernel_bound: f64,
    pub main_bound_rhs: Option<f64>,
}

/// Effective sample size: N over the polylog factor plus the failure term.
pub fn effective_sample_size(n: usize, p: usize, failure_prob: f64, c0: f64) -> f64 {
    let nf = n as f64;
    let l = (2.0 * nf).ln();
    let inner = (l + p as f64).min(l * (2.0 * p as f64).ln());
    nf / (c0 * l * (l * inner) + (1.0 / failure_prob).ln())
}

/// The three-way capacity minimum.
pub fn capacity_delta(n_tilde: f64, p: usize) -> f64 {
    let pf = p as f64;
    let b1 = 2f64.powf(pf / 2.0 + 1.0) * n_tilde.powf(1.5);
    let b2 = std::f64::consts::E.powi(2) * (n_tilde / 2f64.powf(pf)).powf(1.0 + 0.5 * pf.log2());
    let factorial: f64 = (1..p).map(|i| i as f64).product::<f64>().max(1.0);
    let b3 = n_tilde.sqrt() * (n_tilde.ln() + (pf + 1.0) * 2f64.ln()).powf(pf - 1.0)
        / (2f64.powf(pf / 2.0 - 1.0) * factorial);
    b1.min(b2).min(b3)
}

pub fn compute_budget(input: &BudgetInput) -> TheoryBudget {
    let c = input.constants;
    let p = input.p;
    let pf = p as f64;
    let n_tilde = match input.sample {
        SampleBudget::TrainingSize { n, failure_prob } => {
            effective_sample_size(n, p, failure_prob, c.c0)
        }
        SampleBudget::Effective { n_tilde } => n_tilde,
    };
    let delta = capacity_delta(n_tilde, p);
    let m_tilde = (2 * input.m + 1) as f64;
    let pow2p = 2f64.powf(pf);
    let gamma_term = input.gamma * n_tilde.powf(1.0 / (2.0 * pf));
    let reduced_depth_bound = c.c1
        * (1.0 + pf * pf.ln().max(0.0))
        * (1.0 + n_tilde.ln())
        * ((n_tilde / pow2p).sqrt() + delta.ln() + gamma_term);
    let reduced_size_bound = c.c2
        * pf
        * (pf * n_tilde / pow2p
            + ((n_tilde / pow2p).sqrt() + pf * delta) * ((n_tilde * delta).ln() + gamma_term))
        + m_tilde * delta;
    let log_inv_h = input.grid_k as f64 * 2f64.ln();
    TheoryBudget {
        n_tilde,
        delta,
        reduced_depth_bound,
        reduced_size_bound,
        decoder_depth_bound: c.c3 * log_inv_h,
        decoder_size_bound: c.c3 * input.m as f64 * log_inv_h,
        decoder_channels_bound: 8.0 * input.m as f64,
        decoder_kernel_bound: 2.0,
        main_bound_rhs: input
            .g_norm
            .map(|g| bound_rhs(input.m, n_tilde, input.gamma, input.s, p, g, c.c4)),
    }
}
