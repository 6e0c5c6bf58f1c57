//! The six pipeline stages behind the subcommands.

use crate::config::LoadedConfig;
use crate::junit::junit_xml;
use dlrom_core::constructor::{
    build_decoder_cnn, compute_budget, linear_decoder, CompactSampleSet,
};
use dlrom_core::fom::{
    check_bernstein_condition, check_uniform_ellipticity, isotropic_rho, linf_solution_bound, Grid,
};
use dlrom_core::linalg::linear_fit;
use dlrom_core::neural::{accounting, json as netjson, Network};
use dlrom_core::training::container::{read_dataset, write_dataset};
use dlrom_core::training::{
    evaluate_rom, make_dataset, train_encoder, train_reduced, Dataset, LatentEncoder, LatentSource,
    TrainedModel,
};
use dlrom_core::verify::{run_all, Mutation};
use serde_json::json;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub struct StageError {
    pub stage: &'static str,
    pub message: String,
}

impl StageError {
    fn new(stage: &'static str, message: impl std::fmt::Display) -> Self {
        StageError {
            stage,
            message: message.to_string(),
        }
    }
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}", self.stage, self.message)
    }
}

fn write_json(
    stage: &'static str,
    path: &Path,
    value: &serde_json::Value,
) -> Result<(), StageError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| StageError::new(stage, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| StageError::new(stage, e))?;
    std::fs::write(path, text + "\n").map_err(|e| StageError::new(stage, e))
}

/// `verify`: run every property suite, print a summary, emit JUnit XML.
/// Returns the number of failed checks.
pub fn cmd_verify(cfg: &LoadedConfig, out: &Path) -> Result<usize, StageError> {
    let checks = run_all(Mutation::None);
    let failures = checks.iter().filter(|c| !c.passed).count();
    for check in &checks {
        let verdict = if check.passed { "PASS" } else { "FAIL" };
        println!(
            "[{verdict}] {}::{} - {}",
            check.suite, check.name, check.detail
        );
    }
    println!(
        "verify: {} checks, {} failures (config {})",
        checks.len(),
        failures,
        cfg.config_hash
    );
    let dir = out.join("verify");
    std::fs::create_dir_all(&dir).map_err(|e| StageError::new("verify", e))?;
    std::fs::write(
        dir.join("junit.xml"),
        junit_xml(&checks, &cfg.config_hash, cfg.raw.seed_train),
    )
    .map_err(|e| StageError::new("verify", e))?;
    Ok(failures)
}

fn dataset_dir(out: &Path) -> PathBuf {
    out.join("dataset")
}

fn build_training_dataset(cfg: &LoadedConfig, seed: u64, n: usize) -> Result<Dataset, StageError> {
    let grid = Grid::new(cfg.raw.grid_k).map_err(|e| StageError::new("make-data", e))?;
    let mut ds = make_dataset(
        &cfg.problem,
        grid,
        cfg.raw.smoothness,
        cfg.raw.bandwidth,
        n,
        seed,
        "train",
        LatentEncoder::Quadrature,
    )
    .map_err(|e| StageError::new("make-data", e))?;
    ds.meta.config_hash = Some(cfg.config_hash.clone());
    Ok(ds)
}

/// `make-data`: sample, solve, encode, and write the dataset container.
pub fn cmd_make_data(cfg: &LoadedConfig, out: &Path, seed: u64) -> Result<(), StageError> {
    let ds = build_training_dataset(cfg, seed, cfg.raw.n_train)?;
    write_dataset(&dataset_dir(out), &ds).map_err(|e| StageError::new("make-data", e))?;
    println!(
        "make-data: wrote {} samples (N_h = {}, m_tilde = {}) to {}",
        ds.meta.n,
        ds.meta.n_h,
        ds.meta.m_tilde,
        dataset_dir(out).display()
    );
    Ok(())
}

fn training_log_csv(model: &TrainedModel) -> String {
    let mut csv = String::from("epoch,data_fit,reg,total\n");
    for rec in &model.log {
        let _ = writeln!(
            csv,
            "{},{:.17e},{:.17e},{:.17e}",
            rec.epoch, rec.data_fit, rec.reg, rec.total
        );
    }
    csv
}

/// `train`: fit the reduced network against the stored dataset; write the
/// model, the training log, and the run metadata.
pub fn cmd_train(cfg: &LoadedConfig, out: &Path, seed: u64) -> Result<(), StageError> {
    let ds = read_dataset(&dataset_dir(out))
        .map_err(|e| StageError::new("train", format!("{e} (run make-data first?)")))?;
    let (lambda, lambda_source) = cfg.lambda_for(ds.meta.n);
    if lambda_source != "config" {
        eprintln!(
            "train: no lambda configured; using the placeholder default \
             n_tilde^-1/2 = {lambda:.6} (flagged in train_meta.json)"
        );
    }
    let grid = Grid::new(ds.meta.grid_k).map_err(|e| StageError::new("train", e))?;
    let eta_star = if cfg.raw.eta_star_normalization {
        let bound =
            linf_solution_bound(&cfg.problem, grid).map_err(|e| StageError::new("train", e))?;
        Some(1.0 / (4.0 * bound))
    } else {
        None
    };
    let config = cfg.train_config(ds.meta.n, eta_star, seed);
    let arch = cfg.arch();
    let trained = train_reduced(&ds, &arch, &config).map_err(|e| StageError::new("train", e))?;

    let model_dir = out.join("model");
    std::fs::create_dir_all(&model_dir).map_err(|e| StageError::new("train", e))?;
    let model_json = json!({
        "config_hash": cfg.config_hash,
        "seed": seed,
        "lambda": lambda,
        "lambda_source": lambda_source,
        "eta_star": eta_star,
        "best_epoch": trained.best_epoch,
        "best_total": trained.best_total,
        "network": netjson::to_json(&trained.network),
    });
    write_json("train", &model_dir.join("reduced.json"), &model_json)?;
    std::fs::write(
        model_dir.join("training_log.csv"),
        training_log_csv(&trained),
    )
    .map_err(|e| StageError::new("train", e))?;
    let meta = json!({
        "config_hash": cfg.config_hash,
        "seed": seed,
        "lambda": lambda,
        "lambda_source": lambda_source,
        "arch": { "hidden_layers": arch.hidden_layers, "hidden_width": arch.hidden_width },
        "optimizer": cfg.raw.optimizer,
        "learning_rate": cfg.raw.learning_rate,
        "epochs": cfg.raw.epochs,
        "batch_size": cfg.raw.batch_size,
        "eta_star_normalization": cfg.raw.eta_star_normalization,
    });
    write_json("train", &model_dir.join("train_meta.json"), &meta)?;
    println!(
        "train: best total {:.6e} at epoch {} -> {}",
        trained.best_total,
        trained.best_epoch,
        model_dir.join("reduced.json").display()
    );
    Ok(())
}

fn load_model(out: &Path) -> Result<Network, StageError> {
    let path = out.join("model").join("reduced.json");
    let text = std::fs::read_to_string(&path).map_err(|e| {
        StageError::new(
            "eval",
            format!("{}: {e} (run train first?)", path.display()),
        )
    })?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| StageError::new("eval", e))?;
    netjson::from_json(&value["network"]).map_err(|e| StageError::new("eval", e))
}

/// Decoder accounting plus the fitted depth-versus-level line, emitted as
/// the decoder build log.
fn decoder_build_log(
    cfg: &LoadedConfig,
    decoder: &Network,
    grid: Grid,
) -> Result<serde_json::Value, StageError> {
    let acc = accounting(decoder);
    let k_hi = grid.level();
    let k_lo = 3.max(k_hi.saturating_sub(3));
    let mut ks = Vec::new();
    let mut depths = Vec::new();
    for k in k_lo..=k_hi {
        let g = Grid::new(k).map_err(|e| StageError::new("eval", e))?;
        ks.push(k as f64);
        depths.push(accounting(&linear_decoder(cfg.raw.bandwidth, g)).depth as f64);
    }
    let (slope, intercept, r2) = linear_fit(&ks, &depths);
    Ok(json!({
        "config_hash": cfg.config_hash,
        "seed": cfg.raw.seed_train,
        "accounting": {
            "depth": acc.depth,
            "size": acc.size,
            "channels_max": acc.channels_max,
            "kernel_max": acc.kernel_max,
        },
        "depth_fit": {
            "levels": ks,
            "slope": slope,
            "intercept": intercept,
            "r_squared": r2,
        },
        "constraints": { "channels_max": 8 * cfg.raw.bandwidth, "kernel_max": 2 },
    }))
}

struct EvalOutcome {
    metrics: serde_json::Value,
    decoder_log: serde_json::Value,
    e: f64,
    n_tilde: f64,
    delta: f64,
    rhs: Option<f64>,
}

fn run_eval(
    cfg: &LoadedConfig,
    ds: &Dataset,
    phi: &Network,
    seed_test: u64,
) -> Result<EvalOutcome, StageError> {
    let grid = Grid::new(ds.meta.grid_k).map_err(|e| StageError::new("eval", e))?;
    let set = CompactSampleSet::with_default_inflation(ds.latents.clone())
        .map_err(|e| StageError::new("eval", e))?;
    let decoder =
        build_decoder_cnn(cfg.raw.bandwidth, grid, &set).map_err(|e| StageError::new("eval", e))?;
    let trained = evaluate_rom(
        LatentSource::Reduced(phi),
        &decoder,
        &cfg.problem,
        grid,
        ds.meta.smoothness,
        ds.meta.bandwidth,
        cfg.raw.n_test,
        seed_test,
    )
    .map_err(|e| StageError::new("eval", e))?;
    let oracle = evaluate_rom(
        LatentSource::ExactEncode,
        &decoder,
        &cfg.problem,
        grid,
        ds.meta.smoothness,
        ds.meta.bandwidth,
        cfg.raw.n_test,
        seed_test,
    )
    .map_err(|e| StageError::new("eval", e))?;
    let g_norm = linf_solution_bound(&cfg.problem, grid).ok();
    let budget = compute_budget(&cfg.budget_input(ds.meta.n, g_norm));
    let metrics = json!({
        "config_hash": cfg.config_hash,
        "seed_test": seed_test,
        "n_train": ds.meta.n,
        "n_test": cfg.raw.n_test,
        "e": trained.e,
        "oracle_e": oracle.e,
        "ratio_to_oracle": trained.e / oracle.e,
        "mean_sup_sq": trained.mean_sup_sq,
        "se_mean_sup_sq": trained.se_mean_sup_sq,
        "n_tilde": budget.n_tilde,
        "delta": budget.delta,
        "bound_rhs": budget.main_bound_rhs,
        "g_norm": g_norm,
    });
    let decoder_log = decoder_build_log(cfg, &decoder, grid)?;
    Ok(EvalOutcome {
        metrics,
        decoder_log,
        e: trained.e,
        n_tilde: budget.n_tilde,
        delta: budget.delta,
        rhs: budget.main_bound_rhs,
    })
}

/// `eval`: evaluate the trained model and the exact-latent oracle on a fresh
/// test draw; write metrics, the decoder, and the decoder build log.
pub fn cmd_eval(cfg: &LoadedConfig, out: &Path) -> Result<(), StageError> {
    let ds = read_dataset(&dataset_dir(out))
        .map_err(|e| StageError::new("eval", format!("{e} (run make-data first?)")))?;
    let phi = load_model(out)?;
    let outcome = run_eval(cfg, &ds, &phi, cfg.raw.seed_test)?;
    let dir = out.join("eval");
    write_json("eval", &dir.join("metrics.json"), &outcome.metrics)?;
    write_json(
        "eval",
        &dir.join("decoder_build.json"),
        &outcome.decoder_log,
    )?;
    // Persist the decoder itself in the network wire format.
    let grid = Grid::new(ds.meta.grid_k).map_err(|e| StageError::new("eval", e))?;
    let set = CompactSampleSet::with_default_inflation(ds.latents.clone())
        .map_err(|e| StageError::new("eval", e))?;
    let decoder =
        build_decoder_cnn(cfg.raw.bandwidth, grid, &set).map_err(|e| StageError::new("eval", e))?;
    let decoder_json = json!({
        "config_hash": cfg.config_hash,
        "seed": cfg.raw.seed_train,
        "network": netjson::to_json(&decoder),
    });
    write_json("eval", &dir.join("decoder.json"), &decoder_json)?;
    println!(
        "eval: E = {:.6e} -> {}",
        outcome.e,
        dir.join("metrics.json").display()
    );
    Ok(())
}

/// `sweep`: repeat make-data/train/eval over the configured training sizes
/// (shared test seed) and emit the trend CSV.
pub fn cmd_sweep(cfg: &LoadedConfig, out: &Path, seed: u64) -> Result<(), StageError> {
    let sizes: Vec<usize> = if cfg.raw.n_sweep.is_empty() {
        vec![cfg.raw.n_train]
    } else {
        cfg.raw.n_sweep.clone()
    };
    let mut csv = String::from("N,m,E,bound_rhs,N_tilde,Delta,config_hash,seed_train,seed_test\n");
    for &n in &sizes {
        let seed_n = seed.wrapping_add(n as u64);
        let ds = build_training_dataset(cfg, seed_n, n)?;
        let grid = Grid::new(ds.meta.grid_k).map_err(|e| StageError::new("sweep", e))?;
        let eta_star = if cfg.raw.eta_star_normalization {
            let bound =
                linf_solution_bound(&cfg.problem, grid).map_err(|e| StageError::new("sweep", e))?;
            Some(1.0 / (4.0 * bound))
        } else {
            None
        };
        let config = cfg.train_config(n, eta_star, seed_n);
        let trained =
            train_reduced(&ds, &cfg.arch(), &config).map_err(|e| StageError::new("sweep", e))?;
        let outcome = run_eval(cfg, &ds, &trained.network, cfg.raw.seed_test)?;
        let rhs = outcome
            .rhs
            .map(|v| format!("{v:.17e}"))
            .unwrap_or_else(|| "nan".into());
        let _ = writeln!(
            csv,
            "{n},{m},{e:.17e},{rhs},{nt:.17e},{delta:.17e},{hash},{seed_n},{seed_test}",
            m = cfg.raw.bandwidth,
            e = outcome.e,
            nt = outcome.n_tilde,
            delta = outcome.delta,
            hash = cfg.config_hash,
            seed_test = cfg.raw.seed_test,
        );
        println!("sweep: N = {n}: E = {:.6e}", outcome.e);
    }
    let dir = out.join("sweep");
    std::fs::create_dir_all(&dir).map_err(|e| StageError::new("sweep", e))?;
    std::fs::write(dir.join("sweep.csv"), csv).map_err(|e| StageError::new("sweep", e))?;
    println!("sweep: wrote {}", dir.join("sweep.csv").display());
    Ok(())
}

/// `bounds`: evaluate the budget formulas and the analytic condition
/// checkers; write the budget JSON.
pub fn cmd_bounds(cfg: &LoadedConfig, out: &Path) -> Result<(), StageError> {
    let grid = Grid::new(cfg.raw.grid_k).map_err(|e| StageError::new("bounds", e))?;
    let ellipticity = check_uniform_ellipticity(&cfg.problem);
    let rho = isotropic_rho(cfg.raw.gamma, cfg.raw.eps, cfg.problem.param_dim());
    let bernstein =
        check_bernstein_condition(&cfg.problem, &rho).map_err(|e| StageError::new("bounds", e))?;
    let g_norm = linf_solution_bound(&cfg.problem, grid).ok();
    let budget = compute_budget(&cfg.budget_input(cfg.raw.n_train, g_norm));
    let value = json!({
        "config_hash": cfg.config_hash,
        "seed": cfg.raw.seed_train,
        "n_train": cfg.raw.n_train,
        "failure_prob": cfg.raw.failure_prob,
        "budget": budget,
        "g_norm": g_norm,
        "checks": {
            "uniform_ellipticity": { "ok": ellipticity.ok, "margin": ellipticity.margin },
            "isotropic_rho": rho,
            "bernstein_at_isotropic_rho": { "ok": bernstein.ok, "slack": bernstein.margin },
        },
    });
    let dir = out.join("bounds");
    write_json("bounds", &dir.join("bounds.json"), &value)?;
    println!(
        "bounds: n_tilde = {:.6}, delta = {:.6} -> {}",
        budget.n_tilde,
        budget.delta,
        dir.join("bounds.json").display()
    );
    Ok(())
}

/// Distill an encoder network against the stored quadrature latents; an
/// optional stage exposed for the encoder-distillation workflow.
pub fn cmd_train_encoder(
    cfg: &LoadedConfig,
    out: &Path,
    seed: u64,
    delta: f64,
) -> Result<(), StageError> {
    let ds = read_dataset(&dataset_dir(out))
        .map_err(|e| StageError::new("train-encoder", format!("{e} (run make-data first?)")))?;
    let config = cfg.train_config(ds.meta.n, None, seed);
    let fit = train_encoder(&ds, &cfg.arch(), delta, &config)
        .map_err(|e| StageError::new("train-encoder", e))?;
    let dir = out.join("model");
    std::fs::create_dir_all(&dir).map_err(|e| StageError::new("train-encoder", e))?;
    let value = json!({
        "config_hash": cfg.config_hash,
        "seed": seed,
        "delta_target": delta,
        "max_err": fit.max_err,
        "converged": fit.converged,
        "network": netjson::to_json(&fit.model.network),
    });
    write_json("train-encoder", &dir.join("encoder.json"), &value)?;
    std::fs::write(dir.join("encoder_log.csv"), training_log_csv(&fit.model))
        .map_err(|e| StageError::new("train-encoder", e))?;
    println!(
        "train-encoder: max latent error {:.6e} (converged: {}) -> {}",
        fit.max_err,
        fit.converged,
        dir.join("encoder.json").display()
    );
    Ok(())
}
