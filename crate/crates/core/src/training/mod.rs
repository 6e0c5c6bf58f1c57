//! Dataset generation, the regularized training problem for the reduced
//! network, encoder distillation, and Monte Carlo evaluation of the trained
//! surrogate.
//!
//! The training objective is
//!
//!   sqrt( (1/N) sum_i ||phi(mu_i) - y_i||_2^2 ) + lambda ||W_out||_{2,1}
//!
//! with the l2,1 norm (sum of column Euclidean norms) on the output layer's
//! weight matrix. The square root over the mean makes the loss positively
//! homogeneous: scaling the output layer and the targets by eta > 0 scales
//! the loss by exactly eta, which is tested to machine precision.

pub mod container;

use crate::fom::{
    check_uniform_ellipticity, sample_params, solve_fom, DiffusionProblem, FomError, Grid,
    GridFunction,
};
use crate::fourier::{encode_grid, FourierError};
use crate::linalg::Mat;
use crate::neural::grad::{backward, Gradients};
use crate::neural::{
    forward, Activation, Layer, Network, NetworkKind, NeuralError, StandardLayer, Tensor,
};
use crate::rng::Stream;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Fom(#[from] FomError),
    #[error(transparent)]
    Fourier(#[from] FourierError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("uniform ellipticity check failed (margin {margin})")]
    EllipticityCheck { margin: f64 },
    #[error("loss became non-finite at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("the output layer must be a standard affine layer")]
    OutputLayerNotStandard,
    #[error("dataset container: {0}")]
    BadContainer(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Provenance and shape metadata of a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub problem: DiffusionProblem,
    pub problem_hash: String,
    pub grid_k: u32,
    pub smoothness: usize,
    pub bandwidth: usize,
    pub seed: u64,
    pub split: String,
    pub n: usize,
    pub p: usize,
    pub n_h: usize,
    pub m_tilde: usize,
    pub encoder: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// Parameter samples, full-order snapshots, and latent targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub params: Vec<Vec<f64>>,
    pub snapshots: Vec<Vec<f64>>,
    pub latents: Vec<Vec<f64>>,
    pub meta: DatasetMeta,
}

/// How latent targets are produced from snapshots.
pub enum LatentEncoder<'a> {
    /// The deterministic quadrature encoder [`encode_grid`].
    Quadrature,
    /// A trained encoder network `R^{N_h} -> R^{m_tilde}`.
    Network(&'a Network),
}

impl LatentEncoder<'_> {
    fn tag(&self) -> &'static str {
        match self {
            LatentEncoder::Quadrature => "quadrature",
            LatentEncoder::Network(_) => "network",
        }
    }
}

/// Sample parameters, solve the full order model per sample, and encode the
/// latent targets. Deterministic for a fixed seed; snapshot solves run in
/// parallel and are collected in sample order.
pub fn make_dataset(
    problem: &DiffusionProblem,
    grid: Grid,
    s: usize,
    m: usize,
    n: usize,
    seed: u64,
    split: &str,
    encoder: LatentEncoder<'_>,
) -> Result<Dataset, TrainError> {
    let check = check_uniform_ellipticity(problem);
    if !check.ok {
        return Err(TrainError::EllipticityCheck {
            margin: check.margin,
        });
    }
    let points = sample_params(problem.param_dim(), n, seed);
    let snapshots: Vec<Result<GridFunction, FomError>> = points
        .par_iter()
        .map(|mu| solve_fom(problem, mu, grid))
        .collect();
    let mut snaps = Vec::with_capacity(n);
    let mut latents = Vec::with_capacity(n);
    for snap in snapshots {
        let snap = snap?;
        let latent = match &encoder {
            LatentEncoder::Quadrature => encode_grid(&snap, s, m)?.0,
            LatentEncoder::Network(net) => forward(net, &Tensor::vector(snap.values.clone()))?.data,
        };
        latents.push(latent);
        snaps.push(snap.values);
    }
    let meta = DatasetMeta {
        problem: problem.clone(),
        problem_hash: problem.fingerprint(),
        grid_k: grid.level(),
        smoothness: s,
        bandwidth: m,
        seed,
        split: split.to_string(),
        n,
        p: problem.param_dim(),
        n_h: grid.node_count(),
        m_tilde: 2 * m + 1,
        encoder: encoder.tag().to_string(),
        config_hash: None,
    };
    Ok(Dataset {
        params: points.into_iter().map(|p| p.coords().to_vec()).collect(),
        snapshots: snaps,
        latents,
        meta,
    })
}

/// Sum of Euclidean norms of the matrix columns.
pub fn l21_norm(w: &Mat) -> f64 {
    (0..w.cols)
        .map(|j| {
            (0..w.rows)
                .map(|i| {
                    let v = w[(i, j)];
                    v * v
                })
                .sum::<f64>()
                .sqrt()
        })
        .sum()
}

/// The two terms of the training objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub data_fit: f64,
    pub reg: f64,
    pub total: f64,
}

fn output_weight(phi: &Network) -> Result<&Mat, TrainError> {
    phi.output_weight()
        .ok_or(TrainError::OutputLayerNotStandard)
}

/// Evaluate the objective on a batch.
pub fn loss(
    phi: &Network,
    params: &[Vec<f64>],
    latents: &[Vec<f64>],
    lambda: f64,
) -> Result<LossParts, TrainError> {
    if params.is_empty() || params.len() != latents.len() {
        return Err(TrainError::EmptyBatch);
    }
    let n = params.len() as f64;
    let mut sq = 0.0;
    for (mu, y) in params.iter().zip(latents) {
        let out = forward(phi, &Tensor::vector(mu.clone()))?;
        if out.data.len() != y.len() {
            return Err(TrainError::Neural(NeuralError::ShapeMismatch {
                layer: phi.layers.len(),
                detail: format!("output {} vs target {}", out.data.len(), y.len()),
            }));
        }
        sq += out
            .data
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    let data_fit = (sq / n).sqrt();
    let reg = lambda * l21_norm(output_weight(phi)?);
    Ok(LossParts {
        data_fit,
        reg,
        total: data_fit + reg,
    })
}

/// Chunk size for the deterministic gradient reduction: per-sample gradients
/// are summed inside fixed contiguous chunks (in sample order) and the chunk
/// sums are folded left to right, so the floating point result does not
/// depend on the worker count.
const GRADIENT_CHUNK: usize = 32;

/// Objective value and its gradient on a batch.
///
/// Subgradient conventions: the ReLU derivative at 0 is 0, a zero output
/// column contributes a zero regularizer subgradient, and a zero data fit
/// contributes a zero fit gradient.
pub fn loss_and_grad(
    phi: &Network,
    params: &[Vec<f64>],
    latents: &[Vec<f64>],
    lambda: f64,
) -> Result<(LossParts, Gradients), TrainError> {
    let parts = loss(phi, params, latents, lambda)?;
    let n = params.len() as f64;
    let mut grads = Gradients::zeros_like(phi);
    if parts.data_fit > 1e-300 {
        let scale = 1.0 / (n * parts.data_fit);
        let chunk_grads: Vec<Result<Gradients, TrainError>> = params
            .par_chunks(GRADIENT_CHUNK)
            .zip(latents.par_chunks(GRADIENT_CHUNK))
            .map(|(mu_chunk, y_chunk)| {
                let mut local = Gradients::zeros_like(phi);
                for (mu, y) in mu_chunk.iter().zip(y_chunk) {
                    let out = forward(phi, &Tensor::vector(mu.clone()))?;
                    let upstream = Tensor::vector(
                        out.data
                            .iter()
                            .zip(y)
                            .map(|(a, b)| (a - b) * scale)
                            .collect(),
                    );
                    let (g, _) = backward(phi, &Tensor::vector(mu.clone()), &upstream)?;
                    local.accumulate(&g);
                }
                Ok(local)
            })
            .collect();
        for chunk in chunk_grads {
            grads.accumulate(&chunk?);
        }
    }
    if lambda > 0.0 {
        let out_idx = phi.output_layer_index().ok_or(TrainError::EmptyBatch)?;
        let w = output_weight(phi)?;
        let (rows, cols) = (w.rows, w.cols);
        let mut col_norms = vec![0.0; cols];
        for j in 0..cols {
            col_norms[j] = (0..rows).map(|i| w[(i, j)] * w[(i, j)]).sum::<f64>().sqrt();
        }
        let wg = &mut grads.layers[out_idx].weights;
        for i in 0..rows {
            for j in 0..cols {
                if col_norms[j] > 0.0 {
                    wg[i * cols + j] += lambda * w[(i, j)] / col_norms[j];
                }
            }
        }
    }
    Ok((parts, grads))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Training hyperparameters. `eta_star` optionally rescales the latent
/// targets during optimization (the trained output layer is scaled back by
/// homogeneity before the model is returned); the default is off.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub eta_star: Option<f64>,
}

/// Architecture template for the reduced network and encoder: equal-width
/// ReLU hidden layers and an affine output layer.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ArchTemplate {
    pub hidden_layers: usize,
    pub hidden_width: usize,
}

/// Harness default: 2 hidden layers of width max(32, 4 p m_tilde).
pub fn default_arch(p: usize, m_tilde: usize) -> ArchTemplate {
    ArchTemplate {
        hidden_layers: 2,
        hidden_width: 32.max(4 * p * m_tilde),
    }
}

/// Deterministic He-style uniform initialization.
pub fn init_mlp(input: usize, output: usize, arch: &ArchTemplate, seed: u64) -> Network {
    let mut layers = Vec::with_capacity(arch.hidden_layers + 1);
    let mut fan_in = input;
    for layer_idx in 0..=arch.hidden_layers {
        let fan_out = if layer_idx == arch.hidden_layers {
            output
        } else {
            arch.hidden_width
        };
        let mut stream = Stream::substream(seed, layer_idx as u64);
        let bound = (6.0 / fan_in as f64).sqrt();
        let data: Vec<f64> = (0..fan_out * fan_in)
            .map(|_| stream.next_range(-bound, bound))
            .collect();
        layers.push(Layer::Standard(StandardLayer {
            weight: Mat {
                rows: fan_out,
                cols: fan_in,
                data,
            },
            bias: vec![0.0; fan_out],
            activation: if layer_idx == arch.hidden_layers {
                Activation::Identity
            } else {
                Activation::Relu
            },
        }));
        fan_in = fan_out;
    }
    Network::new(NetworkKind::ReluNet, layers).expect("mlp layers are consistent")
}

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub data_fit: f64,
    pub reg: f64,
    pub total: f64,
}

/// A trained network with its log and best-iterate bookkeeping.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub network: Network,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_total: f64,
}

struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: usize,
}

impl AdamState {
    fn new(net: &Network) -> Self {
        let shapes: Vec<Vec<f64>> = Gradients::zeros_like(net)
            .layers
            .iter()
            .map(|l| vec![0.0; l.weights.len() + l.bias.len()])
            .collect();
        AdamState {
            m: shapes.clone(),
            v: shapes,
            t: 0,
        }
    }
}

/// Cosine decay from the configured rate down to 1% of it across the run;
/// the square-root data fit keeps gradient magnitudes order-one near the
/// optimum, so a decaying step is what actually drives the loss down.
fn epoch_learning_rate(config: &TrainConfig, epoch: usize) -> f64 {
    if config.epochs <= 1 {
        return config.learning_rate;
    }
    let progress = epoch as f64 / (config.epochs - 1) as f64;
    let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
    config.learning_rate * (0.01 + 0.99 * cosine)
}

fn apply_step(net: &mut Network, grads: &Gradients, lr: f64, adam: &mut Option<AdamState>) {
    match adam {
        None => {
            let mut slices = net.param_slices_mut();
            for (layer, grad) in slices.iter_mut().zip(&grads.layers) {
                for (w, g) in layer.0.iter_mut().zip(&grad.weights) {
                    *w -= lr * g;
                }
                for (b, g) in layer.1.iter_mut().zip(&grad.bias) {
                    *b -= lr * g;
                }
            }
        }
        Some(state) => {
            state.t += 1;
            let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
            let bc1 = 1.0 - beta1.powi(state.t as i32);
            let bc2 = 1.0 - beta2.powi(state.t as i32);
            let mut slices = net.param_slices_mut();
            for (idx, (layer, grad)) in slices.iter_mut().zip(&grads.layers).enumerate() {
                let flat: Vec<f64> = grad
                    .weights
                    .iter()
                    .chain(grad.bias.iter())
                    .copied()
                    .collect();
                let m = &mut state.m[idx];
                let v = &mut state.v[idx];
                for (slot, g) in m.iter_mut().zip(&flat) {
                    *slot = beta1 * *slot + (1.0 - beta1) * g;
                }
                for (slot, g) in v.iter_mut().zip(&flat) {
                    *slot = beta2 * *slot + (1.0 - beta2) * g * g;
                }
                let nw = layer.0.len();
                for (p, (mi, vi)) in m.iter().zip(v.iter()).enumerate() {
                    let step = lr * (mi / bc1) / ((vi / bc2).sqrt() + eps);
                    if p < nw {
                        layer.0[p] -= step;
                    } else {
                        layer.1[p - nw] -= step;
                    }
                }
            }
        }
    }
}

fn validate_train_config(config: &TrainConfig) -> Result<(), TrainError> {
    if config.epochs == 0 {
        return Err(TrainError::BadContainer("epochs must be at least 1".into()));
    }
    if config.lambda < 0.0 {
        return Err(TrainError::BadContainer(
            "lambda must be nonnegative".into(),
        ));
    }
    Ok(())
}

fn run_training(
    mut net: Network,
    params: &[Vec<f64>],
    targets: &[Vec<f64>],
    config: &TrainConfig,
) -> Result<TrainedModel, TrainError> {
    validate_train_config(config)?;
    let n = params.len();
    if n == 0 {
        return Err(TrainError::EmptyBatch);
    }
    let batch = config.batch_size.max(1).min(n);
    let mut adam = match config.optimizer {
        OptimizerKind::Adam => Some(AdamState::new(&net)),
        OptimizerKind::Sgd => None,
    };
    let mut log = Vec::with_capacity(config.epochs);
    let mut best_net = net.clone();
    let mut best_total = f64::INFINITY;
    let mut best_epoch = 0;
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..config.epochs {
        let mut shuffler = Stream::substream(config.seed, 1_000_000 + epoch as u64);
        shuffler.shuffle(&mut order);
        let lr = epoch_learning_rate(config, epoch);
        for chunk in order.chunks(batch) {
            let mu: Vec<Vec<f64>> = chunk.iter().map(|&i| params[i].clone()).collect();
            let y: Vec<Vec<f64>> = chunk.iter().map(|&i| targets[i].clone()).collect();
            let (parts, grads) = loss_and_grad(&net, &mu, &y, config.lambda)?;
            if !parts.total.is_finite() {
                return Err(TrainError::Divergence { epoch });
            }
            apply_step(&mut net, &grads, lr, &mut adam);
        }
        let full = loss(&net, params, targets, config.lambda)?;
        if !full.total.is_finite() {
            return Err(TrainError::Divergence { epoch });
        }
        log.push(EpochRecord {
            epoch,
            data_fit: full.data_fit,
            reg: full.reg,
            total: full.total,
        });
        if full.total < best_total {
            best_total = full.total;
            best_epoch = epoch;
            best_net = net.clone();
        }
    }
    Ok(TrainedModel {
        network: best_net,
        log,
        best_epoch,
        best_total,
    })
}

/// Train the reduced network `phi: R^p -> R^{m_tilde}` on the dataset's
/// latent targets by first-order minimization of [`loss`]; returns the
/// best-loss iterate. Deterministic for a fixed config.
pub fn train_reduced(
    dataset: &Dataset,
    arch: &ArchTemplate,
    config: &TrainConfig,
) -> Result<TrainedModel, TrainError> {
    let net = init_mlp(dataset.meta.p, dataset.meta.m_tilde, arch, config.seed);
    let (targets, eta) = match config.eta_star {
        Some(eta) if eta > 0.0 => (
            dataset
                .latents
                .iter()
                .map(|row| row.iter().map(|v| v * eta).collect())
                .collect::<Vec<Vec<f64>>>(),
            eta,
        ),
        _ => (dataset.latents.clone(), 1.0),
    };
    let mut trained = run_training(net, &dataset.params, &targets, config)?;
    if eta != 1.0 {
        // Undo the target rescaling on the output layer (exact by positive
        // homogeneity of the affine output layer).
        trained.network.scale_output_layer(1.0 / eta);
    }
    Ok(trained)
}

/// Result of encoder distillation.
#[derive(Clone, Debug)]
pub struct EncoderFit {
    pub model: TrainedModel,
    /// Largest per-sample latent l2 error of the returned network.
    pub max_err: f64,
    pub converged: bool,
}

/// Largest per-sample l2 error of `net` on (snapshots, latents).
pub fn encoder_max_error(
    net: &Network,
    snapshots: &[Vec<f64>],
    latents: &[Vec<f64>],
) -> Result<f64, TrainError> {
    let mut worst = 0.0_f64;
    for (x, y) in snapshots.iter().zip(latents) {
        let out = forward(net, &Tensor::vector(x.clone()))?;
        let err: f64 = out
            .data
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Distill a network encoder `R^{N_h} -> R^{m_tilde}` against quadrature
/// latent targets, aiming for max-sample l2 error at most `delta`. Training
/// stops early once the target is met; otherwise the best iterate is
/// returned with `converged = false`.
pub fn train_encoder(
    dataset: &Dataset,
    arch: &ArchTemplate,
    delta: f64,
    config: &TrainConfig,
) -> Result<EncoderFit, TrainError> {
    validate_train_config(config)?;
    if dataset.meta.encoder != "quadrature" {
        return Err(TrainError::BadContainer(
            "encoder training needs quadrature latent targets".into(),
        ));
    }
    let mut net = init_mlp(dataset.meta.n_h, dataset.meta.m_tilde, arch, config.seed);
    let n = dataset.snapshots.len();
    if n == 0 {
        return Err(TrainError::EmptyBatch);
    }
    let batch = config.batch_size.max(1).min(n);
    let mut adam = match config.optimizer {
        OptimizerKind::Adam => Some(AdamState::new(&net)),
        OptimizerKind::Sgd => None,
    };
    let mut log = Vec::new();
    let mut best_net = net.clone();
    let mut best_err = f64::INFINITY;
    let mut best_epoch = 0;
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..config.epochs {
        let mut shuffler = Stream::substream(config.seed, 2_000_000 + epoch as u64);
        shuffler.shuffle(&mut order);
        let lr = epoch_learning_rate(config, epoch);
        for chunk in order.chunks(batch) {
            let x: Vec<Vec<f64>> = chunk
                .iter()
                .map(|&i| dataset.snapshots[i].clone())
                .collect();
            let y: Vec<Vec<f64>> = chunk.iter().map(|&i| dataset.latents[i].clone()).collect();
            let (parts, grads) = loss_and_grad(&net, &x, &y, 0.0)?;
            if !parts.total.is_finite() {
                return Err(TrainError::Divergence { epoch });
            }
            apply_step(&mut net, &grads, lr, &mut adam);
        }
        let full = loss(&net, &dataset.snapshots, &dataset.latents, 0.0)?;
        let max_err = encoder_max_error(&net, &dataset.snapshots, &dataset.latents)?;
        log.push(EpochRecord {
            epoch,
            data_fit: full.data_fit,
            reg: max_err, // encoder log reuses the reg column for max error
            total: full.total,
        });
        if max_err < best_err {
            best_err = max_err;
            best_epoch = epoch;
            best_net = net.clone();
        }
        if best_err <= delta {
            break;
        }
    }
    Ok(EncoderFit {
        model: TrainedModel {
            network: best_net,
            log,
            best_epoch,
            best_total: best_err,
        },
        max_err: best_err,
        converged: best_err <= delta,
    })
}

/// Where evaluation latents come from: the trained reduced network, or the
/// deterministic encoder applied to the test snapshot (the autoencoder
/// reconstruction floor).
pub enum LatentSource<'a> {
    Reduced(&'a Network),
    ExactEncode,
}

/// Monte Carlo evaluation report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    /// E = sqrt(mean of sup_j |u(x_j) - decoded_j|^2).
    pub e: f64,
    pub per_sample_sup: Vec<f64>,
    pub mean_sup_sq: f64,
    /// Standard error of the mean of sup^2.
    pub se_mean_sup_sq: f64,
    pub n_test: usize,
    pub seed: u64,
}

/// Draw fresh test parameters, solve the full order model, decode latents,
/// and measure E = sqrt(mean sup^2). The seed must be disjoint from the
/// training seed; determinism is inherited from the parameter stream.
pub fn evaluate_rom(
    source: LatentSource<'_>,
    decoder: &Network,
    problem: &DiffusionProblem,
    grid: Grid,
    s: usize,
    m: usize,
    n_test: usize,
    seed: u64,
) -> Result<EvalReport, TrainError> {
    let points = sample_params(problem.param_dim(), n_test, seed);
    let solves: Vec<Result<GridFunction, FomError>> = points
        .par_iter()
        .map(|mu| solve_fom(problem, mu, grid))
        .collect();
    let mut per_sample_sup = Vec::with_capacity(n_test);
    for (mu, snap) in points.iter().zip(solves) {
        let snap = snap?;
        let latent = match &source {
            LatentSource::Reduced(phi) => forward(phi, &Tensor::vector(mu.coords().to_vec()))?.data,
            LatentSource::ExactEncode => encode_grid(&snap, s, m)?.0,
        };
        let decoded = forward(decoder, &Tensor::vector(latent))?;
        let sup = decoded
            .data
            .iter()
            .zip(&snap.values)
            .fold(0.0_f64, |mx, (a, b)| mx.max((a - b).abs()));
        per_sample_sup.push(sup);
    }
    let n = per_sample_sup.len().max(1) as f64;
    let mean_sup_sq = per_sample_sup.iter().map(|v| v * v).sum::<f64>() / n;
    let var = per_sample_sup
        .iter()
        .map(|v| {
            let d = v * v - mean_sup_sq;
            d * d
        })
        .sum::<f64>()
        / (n - 1.0).max(1.0);
    Ok(EvalReport {
        e: mean_sup_sq.sqrt(),
        per_sample_sup,
        mean_sup_sq,
        se_mean_sup_sq: (var / n).sqrt(),
        n_test,
        seed,
    })
}

/// Right-hand side of the main error bound:
/// c4 (sqrt(m) exp(-gamma n_tilde^{1/(2p)} / sqrt(2))
///     + sqrt(2 m^{1-2s} / (2s-1))) * g_norm.
pub fn bound_rhs(
    m: usize,
    n_tilde: f64,
    gamma: f64,
    s: usize,
    p: usize,
    g_norm: f64,
    c4: f64,
) -> f64 {
    assert!(m >= 1 && s >= 1 && p >= 1);
    let mf = m as f64;
    let sampling =
        mf.sqrt() * (-gamma * n_tilde.powf(1.0 / (2.0 * p as f64)) / 2.0_f64.sqrt()).exp();
    let truncation = (2.0 * mf.powi(1 - 2 * s as i32) / (2.0 * s as f64 - 1.0)).sqrt();
    c4 * (sampling + truncation) * g_norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fom::Coefficient;

    fn toy_problem(p: usize) -> DiffusionProblem {
        let psis = (0..p)
            .map(|j| Coefficient::Sine {
                amplitude: 0.2,
                mode: (j + 1) as u32,
            })
            .collect();
        DiffusionProblem {
            a0: Coefficient::Constant { value: 2.0 },
            psis,
            forcing: Coefficient::Constant { value: 1.0 },
            r: 1.0,
            xi: 0.3,
            gamma: 0.5,
            eps: 0.5,
        }
    }

    #[test]
    fn dataset_zero_forcing_gives_zero_rows() {
        let problem = DiffusionProblem {
            forcing: Coefficient::Constant { value: 0.0 },
            ..toy_problem(1)
        };
        let ds = make_dataset(
            &problem,
            Grid::new(5).unwrap(),
            1,
            3,
            1,
            7,
            "train",
            LatentEncoder::Quadrature,
        )
        .unwrap();
        assert!(ds.snapshots[0].iter().all(|v| v.abs() < 1e-14));
        assert!(ds.latents[0].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn dataset_parameter_independent_when_psis_vanish() {
        let problem = DiffusionProblem {
            psis: vec![
                Coefficient::Constant { value: 0.0 },
                Coefficient::Constant { value: 0.0 },
            ],
            ..toy_problem(2)
        };
        let ds = make_dataset(
            &problem,
            Grid::new(5).unwrap(),
            1,
            2,
            4,
            11,
            "train",
            LatentEncoder::Quadrature,
        )
        .unwrap();
        for row in &ds.snapshots[1..] {
            for (a, b) in row.iter().zip(&ds.snapshots[0]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dataset_latents_match_quadrature_recomputation() {
        let problem = toy_problem(2);
        let grid = Grid::new(6).unwrap();
        let ds = make_dataset(
            &problem,
            grid,
            1,
            4,
            3,
            13,
            "train",
            LatentEncoder::Quadrature,
        )
        .unwrap();
        for (snap, latent) in ds.snapshots.iter().zip(&ds.latents) {
            let gf = GridFunction::new(grid, snap.clone()).unwrap();
            let again = encode_grid(&gf, 1, 4).unwrap();
            assert_eq!(&again.0, latent, "bit-identical recomputation");
        }
    }

    #[test]
    fn dataset_rejects_nonelliptic_problems() {
        let problem = DiffusionProblem {
            psis: vec![Coefficient::Constant { value: 5.0 }],
            ..toy_problem(1)
        };
        assert!(matches!(
            make_dataset(
                &problem,
                Grid::new(4).unwrap(),
                1,
                2,
                2,
                1,
                "train",
                LatentEncoder::Quadrature
            ),
            Err(TrainError::EllipticityCheck { .. })
        ));
    }

    #[test]
    fn l21_examples() {
        let w = Mat::from_rows(&[vec![3.0, 0.0], vec![4.0, 0.0]]);
        assert!((l21_norm(&w) - 5.0).abs() < 1e-12);
        assert!((l21_norm(&Mat::identity(3)) - 3.0).abs() < 1e-12);
        let mut rng = Stream::new(9);
        let r = Mat::from_rows(&[
            (0..4).map(|_| rng.next_symmetric()).collect(),
            (0..4).map(|_| rng.next_symmetric()).collect(),
        ]);
        let eta = 3.7;
        let scaled = Mat {
            rows: r.rows,
            cols: r.cols,
            data: r.data.iter().map(|v| v * eta).collect(),
        };
        assert!((l21_norm(&scaled) - eta * l21_norm(&r)).abs() < 1e-12);
    }

    #[test]
    fn loss_zero_when_exact_and_homogeneous() {
        let arch = ArchTemplate {
            hidden_layers: 1,
            hidden_width: 8,
        };
        let net = init_mlp(2, 3, &arch, 5);
        let params: Vec<Vec<f64>> = vec![vec![0.1, -0.4], vec![0.7, 0.2], vec![-0.3, 0.9]];
        let exact: Vec<Vec<f64>> = params
            .iter()
            .map(|mu| forward(&net, &Tensor::vector(mu.clone())).unwrap().data)
            .collect();
        let parts = loss(&net, &params, &exact, 0.0).unwrap();
        assert!(parts.total < 1e-12);

        // Homogeneity: loss(eta phi, eta y, lambda) = eta loss(phi, y, lambda).
        let targets: Vec<Vec<f64>> = params.iter().map(|mu| vec![mu[0], mu[1], 0.3]).collect();
        let lambda = 0.05;
        let base = loss(&net, &params, &targets, lambda).unwrap();
        for &eta in &[0.5, 2.0, 10.0] {
            let mut scaled_net = net.clone();
            scaled_net.scale_output_layer(eta);
            let scaled_targets: Vec<Vec<f64>> = targets
                .iter()
                .map(|row| row.iter().map(|v| v * eta).collect())
                .collect();
            let scaled = loss(&scaled_net, &params, &scaled_targets, lambda).unwrap();
            let rel = (scaled.total - eta * base.total).abs() / (eta * base.total);
            assert!(rel < 1e-12, "eta = {eta}: relative gap {rel}");
        }
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let arch = ArchTemplate {
            hidden_layers: 1,
            hidden_width: 6,
        };
        let net = init_mlp(2, 3, &arch, 21);
        let params: Vec<Vec<f64>> = vec![vec![0.4, -0.2], vec![-0.8, 0.6]];
        let targets: Vec<Vec<f64>> = vec![vec![0.1, 0.2, 0.3], vec![-0.4, 0.0, 0.25]];
        let lambda = 0.02;
        let (_, grads) = loss_and_grad(&net, &params, &targets, lambda).unwrap();
        let step = 1e-6;
        for layer_idx in 0..net.layers.len() {
            for which in 0..2 {
                let len = if which == 0 {
                    grads.layers[layer_idx].weights.len()
                } else {
                    grads.layers[layer_idx].bias.len()
                };
                for p in (0..len).step_by(7) {
                    let mut plus = net.clone();
                    {
                        let mut s = plus.param_slices_mut();
                        if which == 0 {
                            s[layer_idx].0[p] += step;
                        } else {
                            s[layer_idx].1[p] += step;
                        }
                    }
                    let mut minus = net.clone();
                    {
                        let mut s = minus.param_slices_mut();
                        if which == 0 {
                            s[layer_idx].0[p] -= step;
                        } else {
                            s[layer_idx].1[p] -= step;
                        }
                    }
                    let fd = (loss(&plus, &params, &targets, lambda).unwrap().total
                        - loss(&minus, &params, &targets, lambda).unwrap().total)
                        / (2.0 * step);
                    let ad = if which == 0 {
                        grads.layers[layer_idx].weights[p]
                    } else {
                        grads.layers[layer_idx].bias[p]
                    };
                    let scale = fd.abs().max(ad.abs()).max(1e-2);
                    assert!(
                        (fd - ad).abs() / scale < 1e-4,
                        "layer {layer_idx} which {which} p {p}: {fd} vs {ad}"
                    );
                }
            }
        }
    }

    #[test]
    fn training_fits_constant_map() {
        let params: Vec<Vec<f64>> = (0..16).map(|i| vec![(i as f64 / 8.0) - 1.0]).collect();
        let targets: Vec<Vec<f64>> = params.iter().map(|_| vec![0.7, -0.3]).collect();
        let config = TrainConfig {
            lambda: 0.0,
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.01,
            epochs: 500,
            batch_size: 16,
            seed: 3,
            eta_star: None,
        };
        let net = init_mlp(
            1,
            2,
            &ArchTemplate {
                hidden_layers: 1,
                hidden_width: 8,
            },
            3,
        );
        let trained = run_training(net, &params, &targets, &config).unwrap();
        assert!(
            trained.best_total <= 1e-4,
            "final data fit {}",
            trained.best_total
        );
        // best-iterate bookkeeping: log at best epoch matches best_total
        assert_eq!(trained.log[trained.best_epoch].total, trained.best_total);
        let running_min: Vec<f64> = trained
            .log
            .iter()
            .scan(f64::INFINITY, |acc, r| {
                *acc = acc.min(r.total);
                Some(*acc)
            })
            .collect();
        for w in running_min.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn huge_lambda_drives_output_weights_to_zero() {
        let params: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 4.0 - 1.0]).collect();
        let targets: Vec<Vec<f64>> = params.iter().map(|mu| vec![mu[0], -mu[0]]).collect();
        let config = TrainConfig {
            lambda: 1e6,
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.005,
            epochs: 400,
            batch_size: 8,
            seed: 4,
            eta_star: None,
        };
        let net = init_mlp(
            1,
            2,
            &ArchTemplate {
                hidden_layers: 1,
                hidden_width: 4,
            },
            4,
        );
        let trained = run_training(net, &params, &targets, &config).unwrap();
        let w = trained.network.output_weight().unwrap();
        let max_w = w.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(max_w < 1e-2, "output weights not crushed: {max_w}");
    }

    #[test]
    fn training_is_deterministic() {
        let problem = toy_problem(2);
        let ds = make_dataset(
            &problem,
            Grid::new(5).unwrap(),
            1,
            2,
            12,
            99,
            "train",
            LatentEncoder::Quadrature,
        )
        .unwrap();
        let config = TrainConfig {
            lambda: 1e-4,
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.01,
            epochs: 30,
            batch_size: 4,
            seed: 17,
            eta_star: None,
        };
        let arch = ArchTemplate {
            hidden_layers: 2,
            hidden_width: 16,
        };
        let a = train_reduced(&ds, &arch, &config).unwrap();
        let b = train_reduced(&ds, &arch, &config).unwrap();
        assert_eq!(a.network, b.network);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn loss_is_zero_for_zero_weights_and_zero_targets() {
        // Positive lambda contributes nothing when the output weights vanish.
        let zero_layer = crate::neural::StandardLayer::new(
            Mat::zeros(3, 2),
            vec![0.0; 3],
            crate::neural::Activation::Identity,
        )
        .unwrap();
        let phi = Network::new(
            NetworkKind::ReluNet,
            vec![crate::neural::Layer::Standard(zero_layer)],
        )
        .unwrap();
        let params = vec![vec![0.4, -0.9]];
        let targets = vec![vec![0.0, 0.0, 0.0]];
        let parts = loss(&phi, &params, &targets, 1e6).unwrap();
        assert_eq!(parts.total, 0.0);
    }

    #[test]
    fn degenerate_zero_model_measures_solution_magnitude() {
        // phi outputting the zero latent through a bias-free linear decoder
        // gives E = sqrt(mean sup |u_mu|^2) exactly.
        let problem = toy_problem(1);
        let grid = Grid::new(5).unwrap();
        let (s, m) = (1usize, 2usize);
        let zero_phi = Network::new(
            NetworkKind::ReluNet,
            vec![crate::neural::Layer::Standard(
                crate::neural::StandardLayer::new(
                    Mat::zeros(2 * m + 1, 1),
                    vec![0.0; 2 * m + 1],
                    crate::neural::Activation::Identity,
                )
                .unwrap(),
            )],
        )
        .unwrap();
        let decoder = crate::constructor::linear_decoder(m, grid);
        let report = evaluate_rom(
            LatentSource::Reduced(&zero_phi),
            &decoder,
            &problem,
            grid,
            s,
            m,
            16,
            404,
        )
        .unwrap();
        let mut expected = 0.0;
        for mu in sample_params(1, 16, 404) {
            let u = solve_fom(&problem, &mu, grid).unwrap();
            let sup = u.values.iter().fold(0.0_f64, |mx, v| mx.max(v.abs()));
            expected += sup * sup;
        }
        expected = (expected / 16.0).sqrt();
        assert!(
            (report.e - expected).abs() < 1e-12,
            "{} vs {expected}",
            report.e
        );
    }

    #[test]
    fn encoder_training_reaches_modest_delta() {
        let problem = toy_problem(1);
        let ds = make_dataset(
            &problem,
            Grid::new(4).unwrap(),
            1,
            2,
            24,
            5,
            "train",
            LatentEncoder::Quadrature,
        )
        .unwrap();
        let config = TrainConfig {
            lambda: 0.0,
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.005,
            epochs: 800,
            batch_size: 24,
            seed: 8,
            eta_star: None,
        };
        let fit = train_encoder(
            &ds,
            &ArchTemplate {
                hidden_layers: 1,
                hidden_width: 32,
            },
            1e-3,
            &config,
        )
        .unwrap();
        // The measured error equals an independent recomputation.
        let again = encoder_max_error(&fit.model.network, &ds.snapshots, &ds.latents).unwrap();
        assert_eq!(fit.max_err, again);
        assert!(
            fit.converged,
            "encoder did not reach delta: {}",
            fit.max_err
        );
        // delta = infinity converges trivially (zero epochs of work needed).
        let trivially = train_encoder(
            &ds,
            &ArchTemplate {
                hidden_layers: 1,
                hidden_width: 4,
            },
            f64::INFINITY,
            &TrainConfig {
                epochs: 1,
                ..config
            },
        )
        .unwrap();
        assert!(trivially.converged);
    }

    #[test]
    fn evaluation_is_stable_under_test_set_doubling() {
        // The parameter stream is counter-based, so the first 32 test draws
        // of the doubled evaluation coincide with the smaller one; doubling
        // n_test moves the estimate by less than 3 standard errors.
        let problem = toy_problem(2);
        let grid = Grid::new(5).unwrap();
        let (s, m) = (1usize, 4usize);
        let ds = make_dataset(
            &problem,
            grid,
            s,
            m,
            16,
            31,
            "train",
            LatentEncoder::Quadrature,
        )
        .unwrap();
        let set = crate::constructor::CompactSampleSet::with_default_inflation(ds.latents).unwrap();
        let decoder = crate::constructor::build_decoder_cnn(m, grid, &set).unwrap();
        let small = evaluate_rom(
            LatentSource::ExactEncode,
            &decoder,
            &problem,
            grid,
            s,
            m,
            32,
            5_5_5,
        )
        .unwrap();
        let large = evaluate_rom(
            LatentSource::ExactEncode,
            &decoder,
            &problem,
            grid,
            s,
            m,
            64,
            5_5_5,
        )
        .unwrap();
        assert_eq!(
            &large.per_sample_sup[..32],
            &small.per_sample_sup[..],
            "shared prefix of the test stream"
        );
        let gap = (large.mean_sup_sq - small.mean_sup_sq).abs();
        assert!(
            gap <= 3.0 * small.se_mean_sup_sq,
            "gap {gap:.3e} vs 3 se {:.3e}",
            3.0 * small.se_mean_sup_sq
        );
    }

    #[test]
    fn zero_epochs_is_rejected() {
        let problem = toy_problem(1);
        let ds = make_dataset(
            &problem,
            Grid::new(4).unwrap(),
            1,
            2,
            4,
            3,
            "train",
            LatentEncoder::Quadrature,
        )
        .unwrap();
        let config = TrainConfig {
            lambda: 0.0,
            optimizer: OptimizerKind::Sgd,
            learning_rate: 0.1,
            epochs: 0,
            batch_size: 4,
            seed: 1,
            eta_star: None,
        };
        let arch = ArchTemplate {
            hidden_layers: 1,
            hidden_width: 4,
        };
        assert!(train_reduced(&ds, &arch, &config).is_err());
    }

    #[test]
    fn bound_rhs_cases() {
        // s = 1, m = 2: truncation term is exactly 1.
        let only_truncation = bound_rhs(2, 1e12, 1.0, 1, 1, 1.0, 1.0);
        assert!((only_truncation - 1.0).abs() < 1e-6);
        // decreasing in s
        let mut prev = f64::INFINITY;
        for s in 1..=4 {
            let v = bound_rhs(4, 100.0, 0.5, s, 2, 1.0, 1.0);
            assert!(v < prev);
            prev = v;
        }
        // doubling g_norm doubles the bound
        let a = bound_rhs(4, 100.0, 0.5, 2, 2, 1.0, 1.0);
        let b = bound_rhs(4, 100.0, 0.5, 2, 2, 2.0, 1.0);
        assert!((b - 2.0 * a).abs() < 1e-12);
    }

    #[test]
    fn eta_star_normalization_round_trips() {
        let problem = toy_problem(1);
        let ds = make_dataset(
            &problem,
            Grid::new(5).unwrap(),
            1,
            2,
            10,
            21,
            "train",
            LatentEncoder::Quadrature,
        )
        .unwrap();
        let base_config = TrainConfig {
            lambda: 0.0,
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.01,
            epochs: 60,
            batch_size: 10,
            seed: 30,
            eta_star: None,
        };
        let arch = ArchTemplate {
            hidden_layers: 1,
            hidden_width: 16,
        };
        let plain = train_reduced(&ds, &arch, &base_config).unwrap();
        let scaled = train_reduced(
            &ds,
            &arch,
            &TrainConfig {
                eta_star: Some(4.0),
                ..base_config
            },
        )
        .unwrap();
        // Both predict unscaled latents; quality should be comparable.
        let p_loss = loss(&plain.network, &ds.params, &ds.latents, 0.0).unwrap();
        let s_loss = loss(&scaled.network, &ds.params, &ds.latents, 0.0).unwrap();
        assert!(s_loss.data_fit < 10.0 * p_loss.data_fit + 1e-3);
    }
}
