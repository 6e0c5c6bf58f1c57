//! Acceptance suite: one test per exit criterion, each printing a single
//! PASS/FAIL line (run with `cargo test --test acceptance -- --nocapture`
//! to see the lines for passing criteria as well).

use dlrom_core::constructor::{
    build_decoder_cnn, capacity_delta, effective_sample_size, linear_to_relu, CompactSampleSet,
};
use dlrom_core::fom::{
    manufactured_variable_problem, solve_fom, Coefficient, DiffusionProblem, Grid, ParamPoint,
};
use dlrom_core::fourier::{
    apply_t, b_map, build_hermite_basis, poly_hs_norm, synthesize_dense,
    trig_poly_endpoint_derivatives, trig_poly_hs_norm, BoundaryFn, LatentCode, Poly,
};
use dlrom_core::linalg::{linear_fit, Mat};
use dlrom_core::neural::grad::backward;
use dlrom_core::neural::{
    accounting, conv_to_dense, cross_correlate, cross_correlate_transposed, forward, forward_trace,
    Activation, ConvBias, ConvLayer, Layer, Network, NetworkKind, StandardLayer, Tensor,
};
use dlrom_core::rng::Stream;
use dlrom_core::training::{
    evaluate_rom, loss, make_dataset, train_reduced, ArchTemplate, LatentEncoder, LatentSource,
    OptimizerKind, TrainConfig,
};
use std::f64::consts::PI;

fn gate(criterion: usize, name: &str, passed: bool, detail: String) {
    let verdict = if passed { "PASS" } else { "FAIL" };
    println!("[criterion {criterion:02}] {verdict} - {name}: {detail}");
    assert!(passed, "criterion {criterion} ({name}) failed: {detail}");
}

fn rand_vec(rng: &mut Stream, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.next_symmetric()).collect()
}

/// Numerically integrate f over [0,1] with composite 16-point Gauss rules,
/// independent of any coefficient-level formula.
fn integrate_numeric<F: FnMut(f64) -> f64>(panels: usize, f: F) -> f64 {
    dlrom_core::quad::integrate_panels(0.0, 1.0, panels, 16, f)
}

#[test]
fn c01_hermite_bounds() {
    let mut worst_norm_excess = f64::NEG_INFINITY;
    let mut worst_mean = 0.0_f64;
    let mut worst_reflect = 0.0_f64;
    for s in 1..=6usize {
        let basis = build_hermite_basis(s).unwrap();
        for j in 0..s {
            let p = basis.p[j].clone();
            let norm = integrate_numeric(8, |x| {
                let v = p.eval(x);
                v * v
            })
            .sqrt();
            let bound = 0.5_f64.powf((j as f64 + 1.0) / 2.0);
            worst_norm_excess = worst_norm_excess.max(norm - bound);

            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            for i in 0..=1000 {
                let x = i as f64 / 1000.0;
                worst_reflect =
                    worst_reflect.max((basis.q[j].eval(x) - sign * basis.p[j].eval(1.0 - x)).abs());
            }
        }
        let mean = integrate_numeric(8, |x| basis.p[0].eval(x));
        worst_mean = worst_mean.max((mean - 0.5).abs());
    }
    gate(
        1,
        "hermite norm/mean/reflection bounds",
        worst_norm_excess <= 1e-10 && worst_mean <= 1e-12 && worst_reflect <= 1e-10,
        format!(
            "max norm excess {worst_norm_excess:.2e}, max |mean - 1/2| {worst_mean:.2e}, \
             max reflection gap {worst_reflect:.2e}"
        ),
    );
}

#[test]
fn c02_operator_norm() {
    let mut rng = Stream::new(20_000);
    let mut worst_ratio = 0.0_f64;
    let mut count = 0usize;
    for s in 1..=3usize {
        for trial in 0..200 {
            let ratio = if trial % 2 == 0 {
                let n_modes = 1 + rng.next_index(5);
                let a0 = rng.next_symmetric();
                let cos = rand_vec(&mut rng, n_modes);
                let sin = rand_vec(&mut rng, n_modes);
                let norm = trig_poly_hs_norm(a0, &cos, &sin, s);
                let ends = trig_poly_endpoint_derivatives(a0, &cos, &sin, s);
                let (c2, s2) = (cos.clone(), sin.clone());
                let spec = apply_t(
                    BoundaryFn::new(
                        move |x| {
                            let mut acc = a0;
                            for (k, (&ak, &bk)) in c2.iter().zip(&s2).enumerate() {
                                let w = 2.0 * PI * (k + 1) as f64;
                                acc += ak * (w * x).cos() + bk * (w * x).sin();
                            }
                            acc
                        },
                        ends.clone(),
                        ends,
                    ),
                    s,
                    8,
                )
                .unwrap();
                spec.norm2() / norm
            } else {
                let degree = 1 + rng.next_index(6);
                let poly = Poly(rand_vec(&mut rng, degree + 1));
                let norm = poly_hs_norm(&poly, s);
                let left: Vec<f64> = (0..s).map(|j| poly.derivative_at(j, 0.0)).collect();
                let right: Vec<f64> = (0..s).map(|j| poly.derivative_at(j, 1.0)).collect();
                let p2 = poly.clone();
                let spec =
                    apply_t(BoundaryFn::new(move |x| p2.eval(x), left, right), s, 8).unwrap();
                spec.norm2() / norm
            };
            worst_ratio = worst_ratio.max(ratio);
            count += 1;
        }
    }
    gate(
        2,
        "lift operator norm ||T|| <= 2",
        worst_ratio <= 2.0 * (1.0 + 1e-6),
        format!("max ||Tf||_2 / ||f||_Hs over {count} draws: {worst_ratio:.8}"),
    );
}

#[test]
fn c03_reconstruction_bound() {
    let grid = Grid::new(9).unwrap();
    let s = 1usize;
    fn quadratic(x: f64) -> f64 {
        x * (1.0 - x) / 2.0
    }
    fn sine(x: f64) -> f64 {
        (PI * x).sin()
    }
    let cases: Vec<(&str, fn(f64) -> f64, f64)> = vec![
        (
            "x(1-x)/2",
            quadratic,
            poly_hs_norm(&Poly(vec![0.0, 0.5, -0.5]), 1),
        ),
        ("sin(pi x)", sine, (0.5 + PI * PI / 2.0).sqrt()),
    ];
    let mut detail = String::new();
    let mut ok = true;
    for (name, f, norm) in cases {
        let mut prev = f64::INFINITY;
        for &m in &[4usize, 8, 16, 32, 64, 128] {
            // s = 1: order-0 endpoint values, both zero for these functions.
            let spec = apply_t(BoundaryFn::new(f, vec![0.0], vec![0.0]), s, m).unwrap();
            let code = b_map(&spec).unwrap();
            let synth = synthesize_dense(&code, grid);
            let sup = synth
                .values
                .iter()
                .enumerate()
                .fold(0.0_f64, |mx, (j, &v)| {
                    mx.max((v - f(grid.node(j + 1))).abs())
                });
            let bound =
                (2.0 / (2.0 * s as f64 - 1.0)).sqrt() * (m as f64).powf(0.5 - s as f64) * norm;
            ok &= sup <= bound;
            ok &= sup <= prev + 1e-12;
            prev = sup;
            if m == 128 {
                detail.push_str(&format!("{name}: sup {sup:.2e} <= {bound:.2e} at m=128; "));
            }
        }
    }
    gate(3, "truncated synthesis reconstruction bound", ok, detail);
}

#[test]
fn c04_decoder_cnn_equivalence() {
    let mut rng = Stream::new(30_000);
    let mut worst_rel = 0.0_f64;
    let mut channels_ok = true;
    let mut kernel_ok = true;
    let mut depth_r2_min = f64::INFINITY;
    for &m in &[2usize, 4, 8] {
        let m_tilde = 2 * m + 1;
        let mut depths = Vec::new();
        let mut ks = Vec::new();
        for &k in &[5u32, 6, 7, 8] {
            let grid = Grid::new(k).unwrap();
            let points: Vec<Vec<f64>> = (0..40).map(|_| rand_vec(&mut rng, m_tilde)).collect();
            let set = CompactSampleSet::with_default_inflation(points).unwrap();
            let decoder = build_decoder_cnn(m, grid, &set).unwrap();
            let acc = accounting(&decoder);
            kernel_ok &= acc.kernel_max <= 2;
            channels_ok &= acc.channels_max <= 8 * m;
            depths.push(acc.depth as f64);
            ks.push(k as f64);
            let (lo, hi) = set.bounding_box();
            for _ in 0..100 {
                let latent: Vec<f64> = lo
                    .iter()
                    .zip(&hi)
                    .map(|(a, b)| rng.next_range(*a, *b))
                    .collect();
                let oracle = synthesize_dense(&LatentCode(latent.clone()), grid);
                let got = forward(&decoder, &Tensor::vector(latent)).unwrap();
                let scale = oracle
                    .values
                    .iter()
                    .fold(0.0_f64, |mx, v| mx.max(v.abs()))
                    .max(1e-9);
                for (a, b) in got.data.iter().zip(&oracle.values) {
                    worst_rel = worst_rel.max((a - b).abs() / scale);
                }
            }
        }
        let (_, _, r2) = linear_fit(&ks, &depths);
        depth_r2_min = depth_r2_min.min(r2);
    }
    gate(
        4,
        "decoder CNN equals dense synthesis",
        worst_rel <= 1e-9 && channels_ok && kernel_ok && depth_r2_min >= 0.99,
        format!(
            "max relative gap {worst_rel:.2e}, kernel<=2 {kernel_ok}, channels<=8m \
             {channels_ok}, depth-vs-k R^2 >= {depth_r2_min:.4}"
        ),
    );
}

#[test]
fn c05_linear_to_relu_conversion() {
    let mut rng = Stream::new(40_000);
    let mut worst_dev = 0.0_f64;
    let mut worst_pre = 0.0_f64;
    for _ in 0..12 {
        let n_layers = 2 + rng.next_index(3); // up to 4 weight layers
        let mut dims = vec![1 + rng.next_index(8)];
        for _ in 0..n_layers {
            dims.push(1 + rng.next_index(32));
        }
        let layers: Vec<Layer> = dims
            .windows(2)
            .map(|w| {
                let rows: Vec<Vec<f64>> = (0..w[1]).map(|_| rand_vec(&mut rng, w[0])).collect();
                Layer::Standard(
                    StandardLayer::new(
                        Mat::from_rows(&rows),
                        vec![0.0; w[1]],
                        Activation::Identity,
                    )
                    .unwrap(),
                )
            })
            .collect();
        let net = Network::new(NetworkKind::ReluNet, layers).unwrap();
        let n_points = 1 + rng.next_index(256);
        let points: Vec<Vec<f64>> = (0..n_points).map(|_| rand_vec(&mut rng, dims[0])).collect();
        let set = CompactSampleSet::with_default_inflation(points).unwrap();
        let relu = linear_to_relu(&net, &set).unwrap();
        for p in set.points() {
            let x = Tensor::vector(p.clone());
            let want = forward(&net, &x).unwrap();
            let got = forward(&relu, &x).unwrap();
            let scale = 1.0 + want.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            for (a, b) in got.data.iter().zip(&want.data) {
                worst_dev = worst_dev.max((a - b).abs() / scale);
            }
            let trace = forward_trace(&relu, &x).unwrap();
            for pre in &trace.pre_activations[..trace.pre_activations.len() - 1] {
                for &v in &pre.data {
                    worst_pre = worst_pre.max(-v);
                }
            }
        }
    }
    gate(
        5,
        "linear-to-ReLU conversion exactness",
        worst_dev <= 1e-10 && worst_pre <= 1e-12,
        format!("max deviation {worst_dev:.2e}, max pre-activation negativity {worst_pre:.2e}"),
    );
}

/// The adjoint transposed layer of a convolution (swapped channel counts,
/// shared per-pair kernels).
fn adjoint_tconv_of(conv: &ConvLayer) -> ConvLayer {
    let g = conv.groups;
    let in_per_group = conv.in_channels / g;
    let out_per_group = conv.out_channels / g;
    let mut weights = vec![0.0; conv.weights.len()];
    for gi in 0..g {
        for a in 0..out_per_group {
            let kp = gi * out_per_group + a;
            for b in 0..in_per_group {
                let k = gi * in_per_group + b;
                for tap in 0..conv.kernel_size {
                    weights[(a * conv.in_channels + k) * conv.kernel_size + tap] =
                        conv.w_conv(kp, b, tap);
                }
            }
        }
    }
    ConvLayer {
        in_channels: conv.out_channels,
        out_channels: conv.in_channels,
        groups: g,
        kernel_size: conv.kernel_size,
        stride: conv.stride,
        dilation: conv.dilation,
        weights,
        bias: ConvBias::PerChannel(vec![0.0; conv.in_channels]),
        activation: Activation::Identity,
    }
}

#[test]
fn c06_conv_semantics() {
    let mut rng = Stream::new(50_000);
    // Adjoint identity across a randomized (channels, groups, s, t, d) lattice.
    let mut worst_adjoint = 0.0_f64;
    for &(m_in, m_out, g) in &[
        (1usize, 1usize, 1usize),
        (2, 2, 2),
        (4, 2, 2),
        (2, 4, 2),
        (4, 4, 4),
        (3, 3, 3),
        (4, 4, 1),
    ] {
        for kernel in 1..=3usize {
            for stride in 1..=2usize {
                for dilation in 1..=2usize {
                    let n_out_len = 2 + rng.next_index(4);
                    let n_in = dilation * (kernel - 1) + 1 + stride * (n_out_len - 1);
                    let conv = ConvLayer {
                        in_channels: m_in,
                        out_channels: m_out,
                        groups: g,
                        kernel_size: kernel,
                        stride,
                        dilation,
                        weights: rand_vec(&mut rng, m_out * (m_in / g) * kernel),
                        bias: ConvBias::PerChannel(vec![0.0; m_out]),
                        activation: Activation::Identity,
                    };
                    let v = Tensor::new(m_in, n_in, rand_vec(&mut rng, m_in * n_in)).unwrap();
                    let cnet =
                        Network::new(NetworkKind::Cnn, vec![Layer::Conv(conv.clone())]).unwrap();
                    let cv = forward(&cnet, &v).unwrap();
                    let u = Tensor::new(m_out, cv.length, rand_vec(&mut rng, m_out * cv.length))
                        .unwrap();
                    let tnet = Network::new(
                        NetworkKind::Cnn,
                        vec![Layer::TConv(adjoint_tconv_of(&conv))],
                    )
                    .unwrap();
                    let tu = forward(&tnet, &u).unwrap();
                    let lhs: f64 = cv.data.iter().zip(&u.data).map(|(a, b)| a * b).sum();
                    let rhs: f64 = v.data.iter().zip(&tu.data).map(|(a, b)| a * b).sum();
                    worst_adjoint = worst_adjoint.max((lhs - rhs).abs());
                }
            }
        }
    }

    // conv_to_dense equivalence.
    let mut worst_dense = 0.0_f64;
    for _ in 0..60 {
        let g = [1usize, 2][rng.next_index(2)];
        let m_in = g * (1 + rng.next_index(2));
        let m_out = g * (1 + rng.next_index(2));
        let kernel = 1 + rng.next_index(3);
        let stride = 1 + rng.next_index(2);
        let dilation = 1 + rng.next_index(2);
        let n = dilation * (kernel - 1) + 1 + rng.next_index(5);
        let layer = ConvLayer {
            in_channels: m_in,
            out_channels: m_out,
            groups: g,
            kernel_size: kernel,
            stride,
            dilation,
            weights: rand_vec(&mut rng, m_out * (m_in / g) * kernel),
            bias: ConvBias::PerChannel(vec![0.0; m_out]),
            activation: Activation::Identity,
        };
        let dense = conv_to_dense(&layer, n).unwrap();
        let net = Network::new(NetworkKind::Cnn, vec![Layer::Conv(layer)]).unwrap();
        let x = Tensor::new(m_in, n, rand_vec(&mut rng, m_in * n)).unwrap();
        let a = forward(&net, &x).unwrap();
        let b = dense.matvec(&x.data);
        for (p, q) in a.data.iter().zip(&b) {
            worst_dense = worst_dense.max((p - q).abs());
        }
    }

    // Length formulas against a loop-nest reference on [1,8]^4.
    let mut lengths_ok = true;
    for n in 1..=8usize {
        for s in 1..=8usize {
            for t in 1..=8usize {
                for d in 1..=8usize {
                    let w: Vec<f64> = (1..=s).map(|i| i as f64).collect();
                    let v: Vec<f64> = (1..=n).map(|i| (i as f64).sin()).collect();
                    let got = cross_correlate(&w, &v, t, d);
                    let mut expect = 0usize;
                    let mut j = 0usize;
                    while j * t + (s - 1) * d < n {
                        expect += 1;
                        j += 1;
                    }
                    lengths_ok &= got.len() == expect;
                    if !got.is_empty() {
                        let span = d * (s - 1) + 1;
                        lengths_ok &= got.len() == (n - span) / t + 1;
                        let tl = cross_correlate_transposed(&w, &got, t, d).len();
                        lengths_ok &= tl == (got.len() - 1) * t + d * (s - 1) + 1;
                    }
                }
            }
        }
    }

    gate(
        6,
        "conv semantics (adjoint, dense unroll, lengths)",
        worst_adjoint <= 1e-12 && worst_dense <= 1e-12 && lengths_ok,
        format!(
            "adjoint gap {worst_adjoint:.2e}, dense gap {worst_dense:.2e}, lengths ok {lengths_ok}"
        ),
    );
}

#[test]
fn c07_gradients() {
    let mut worst = 0.0_f64;
    for seed in [1u64, 2, 3, 4] {
        let mut rng = Stream::new(60_000 + seed);
        let tconv = ConvLayer {
            in_channels: 2,
            out_channels: 4,
            groups: 2,
            kernel_size: 2,
            stride: 2,
            dilation: 1,
            weights: rand_vec(&mut rng, (2 / 2) * 4 * 2),
            bias: ConvBias::PerChannel(rand_vec(&mut rng, 4)),
            activation: Activation::Relu,
        };
        let conv = ConvLayer {
            in_channels: 4,
            out_channels: 2,
            groups: 2,
            kernel_size: 3,
            stride: 2,
            dilation: 1,
            weights: rand_vec(&mut rng, 2 * (4 / 2) * 3),
            bias: ConvBias::PerChannel(rand_vec(&mut rng, 2)),
            activation: Activation::Relu,
        };
        let dense = StandardLayer::new(
            Mat::from_rows(&[rand_vec(&mut rng, 4), rand_vec(&mut rng, 4)]),
            rand_vec(&mut rng, 2),
            Activation::Identity,
        )
        .unwrap();
        let net = Network::new(
            NetworkKind::Cnn,
            vec![
                Layer::Reshape {
                    channels: 2,
                    length: 3,
                    inverse: false,
                },
                Layer::TConv(tconv),
                Layer::Conv(conv),
                Layer::Reshape {
                    channels: 2,
                    length: 2,
                    inverse: true,
                },
                Layer::Standard(dense),
            ],
        )
        .unwrap();
        let x = Tensor::vector(rand_vec(&mut rng, 6));
        let out = forward(&net, &x).unwrap();
        let upstream =
            Tensor::new(out.channels, out.length, rand_vec(&mut rng, out.data.len())).unwrap();
        let (grads, _) = backward(&net, &x, &upstream).unwrap();
        let objective = |n: &Network| -> f64 {
            forward(n, &x)
                .unwrap()
                .data
                .iter()
                .zip(&upstream.data)
                .map(|(a, b)| a * b)
                .sum()
        };
        let step = 1e-5;
        for layer_idx in 0..net.layers.len() {
            for which in 0..2 {
                let len = if which == 0 {
                    grads.layers[layer_idx].weights.len()
                } else {
                    grads.layers[layer_idx].bias.len()
                };
                for p in 0..len {
                    let mut plus = net.clone();
                    {
                        let mut sl = plus.param_slices_mut();
                        if which == 0 {
                            sl[layer_idx].0[p] += step;
                        } else {
                            sl[layer_idx].1[p] += step;
                        }
                    }
                    let mut minus = net.clone();
                    {
                        let mut sl = minus.param_slices_mut();
                        if which == 0 {
                            sl[layer_idx].0[p] -= step;
                        } else {
                            sl[layer_idx].1[p] -= step;
                        }
                    }
                    let fd = (objective(&plus) - objective(&minus)) / (2.0 * step);
                    let ad = if which == 0 {
                        grads.layers[layer_idx].weights[p]
                    } else {
                        grads.layers[layer_idx].bias[p]
                    };
                    worst = worst.max((fd - ad).abs() / fd.abs().max(ad.abs()).max(1e-3));
                }
            }
        }
    }
    gate(
        7,
        "reverse-mode gradients vs finite differences",
        worst <= 1e-6,
        format!("max relative gap {worst:.2e}"),
    );
}

#[test]
fn c08_fom_convergence_order() {
    let problem = manufactured_variable_problem();
    let mu = ParamPoint::new(vec![]).unwrap();
    let mut ks = Vec::new();
    let mut logs = Vec::new();
    for k in 4..=9u32 {
        let grid = Grid::new(k).unwrap();
        let u = solve_fom(&problem, &mu, grid).unwrap();
        let sup = u.values.iter().enumerate().fold(0.0_f64, |mx, (j, &v)| {
            mx.max((v - (PI * grid.node(j + 1)).sin()).abs())
        });
        ks.push(k as f64);
        logs.push(sup.log2());
    }
    let (slope, _, _) = linear_fit(&ks, &logs);
    gate(
        8,
        "finite element nodal convergence order",
        (-slope - 2.0).abs() <= 0.2,
        format!("observed log2 slope {:.3}", -slope),
    );
}

#[test]
fn c09_loss_homogeneity() {
    let arch = ArchTemplate {
        hidden_layers: 2,
        hidden_width: 16,
    };
    let net = dlrom_core::training::init_mlp(3, 5, &arch, 99);
    let mut rng = Stream::new(70_000);
    let params: Vec<Vec<f64>> = (0..8).map(|_| rand_vec(&mut rng, 3)).collect();
    let targets: Vec<Vec<f64>> = (0..8).map(|_| rand_vec(&mut rng, 5)).collect();
    let lambda = 0.03;
    let base = loss(&net, &params, &targets, lambda).unwrap();
    let mut worst = 0.0_f64;
    for &eta in &[0.5, 2.0, 10.0] {
        let mut scaled = net.clone();
        scaled.scale_output_layer(eta);
        let st: Vec<Vec<f64>> = targets
            .iter()
            .map(|r| r.iter().map(|v| v * eta).collect())
            .collect();
        let s = loss(&scaled, &params, &st, lambda).unwrap();
        worst = worst.max((s.total - eta * base.total).abs() / (eta * base.total));
    }
    gate(
        9,
        "loss positive homogeneity",
        worst <= 1e-12,
        format!("max relative gap over eta in {{0.5, 2, 10}}: {worst:.2e}"),
    );
}

#[test]
fn c10_budget_formulas() {
    // Hand-computed capacity value: p = 1, effective size 8 gives
    // min{2^{3/2} 8^{3/2}, 4 e^2, sqrt(2) sqrt(8)} = min{64, 29.56, 4} = 4.
    let delta = capacity_delta(8.0, 1);
    let delta_ok = (delta - 4.0).abs() <= 1e-10;

    // Independent recomputation of the effective sample size.
    let (n, p, failure) = (800usize, 2usize, 0.1f64);
    let nf = n as f64;
    let l = (2.0 * nf).ln();
    let inner = (l + p as f64).min(l * (2.0 * p as f64).ln());
    let expected = nf / (1.0 * l * (l * inner) + (1.0 / failure).ln());
    let got = effective_sample_size(n, p, failure, 1.0);
    let n_tilde_ok = (got - expected).abs() <= 1e-10;

    gate(
        10,
        "sample budget formulas",
        delta_ok && n_tilde_ok,
        format!("delta(8, p=1) = {delta}, n_tilde(800, 2, 0.1) = {got:.6}"),
    );
}

#[test]
fn c11_end_to_end_sweep() {
    // Property-based end-to-end check of the error-decay structure; the
    // source theory reports no numerical experiments to compare against.
    let problem = DiffusionProblem {
        a0: Coefficient::Constant { value: 2.0 },
        psis: vec![
            Coefficient::Sine {
                amplitude: 0.3,
                mode: 2,
            },
            Coefficient::Cosine {
                amplitude: 0.3,
                mode: 2,
            },
        ],
        forcing: Coefficient::Constant { value: 1.0 },
        r: 1.0,
        xi: 0.3,
        gamma: 0.5,
        eps: 0.5,
    };
    let grid = Grid::new(7).unwrap();
    let (s, m) = (1usize, 8usize);
    let test_seed = 777_777u64;
    let n_test = 256usize;
    let mut rows: Vec<(usize, f64, f64, f64)> = Vec::new(); // (N, E, mean_sq, se)
    let mut oracle_e = f64::NAN;
    for &n in &[50usize, 100, 200, 400, 800] {
        let ds = make_dataset(
            &problem,
            grid,
            s,
            m,
            n,
            11_000 + n as u64,
            "train",
            LatentEncoder::Quadrature,
        )
        .unwrap();
        let set = CompactSampleSet::with_default_inflation(ds.latents.clone()).unwrap();
        let decoder = build_decoder_cnn(m, grid, &set).unwrap();
        let config = TrainConfig {
            lambda: 1e-6,
            optimizer: OptimizerKind::Adam,
            learning_rate: 3e-3,
            epochs: 800,
            batch_size: 100,
            seed: 4242,
            eta_star: None,
        };
        let arch = ArchTemplate {
            hidden_layers: 2,
            hidden_width: 64,
        };
        let trained = train_reduced(&ds, &arch, &config).unwrap();
        let ev = evaluate_rom(
            LatentSource::Reduced(&trained.network),
            &decoder,
            &problem,
            grid,
            s,
            m,
            n_test,
            test_seed,
        )
        .unwrap();
        if n == 800 {
            let oracle = evaluate_rom(
                LatentSource::ExactEncode,
                &decoder,
                &problem,
                grid,
                s,
                m,
                n_test,
                test_seed,
            )
            .unwrap();
            oracle_e = oracle.e;
        }
        rows.push((n, ev.e, ev.mean_sup_sq, ev.se_mean_sup_sq));
    }
    let mut monotone = true;
    for w in rows.windows(2) {
        monotone &= w[1].2 <= w[0].2 + 3.0 * w[0].3;
    }
    let final_e = rows.last().unwrap().1;
    let within_floor = final_e <= 2.0 * oracle_e;
    let table: Vec<String> = rows
        .iter()
        .map(|(n, e, _, _)| format!("E({n}) = {e:.3e}"))
        .collect();
    gate(
        11,
        "end-to-end error decay and oracle floor",
        monotone && within_floor,
        format!(
            "{}; oracle floor {oracle_e:.3e}, ratio {:.2}",
            table.join(", "),
            final_e / oracle_e
        ),
    );
}
