//! Runnable property suites.
//!
//! Every module's invariants are packaged as [`Check`]s so the command line
//! `verify` stage can execute them all, print a human summary, and emit
//! JUnit XML. The checks are self-contained (fixed seeds, desk-scale sizes)
//! and are the same assertions exercised by the test suite.

use crate::constructor::{
    build_decoder_cnn, capacity_delta, linear_decoder, linear_to_relu, CompactSampleSet,
};
use crate::fom::{
    check_uniform_ellipticity, discrete_hs_norm, isotropic_rho, isotropic_rho_residual,
    linf_solution_bound, manufactured_variable_problem, sample_params, solve_fom, Coefficient,
    DiffusionProblem, Grid, GridFunction, ParamPoint,
};
use crate::fourier::{
    apply_t, b_map, build_hermite_basis, encode_grid, poly_hs_norm, synthesize_dense,
    trig_poly_endpoint_derivatives, trig_poly_hs_norm, BoundaryFn, Poly,
};
use crate::linalg::{linear_fit, Mat};
use crate::neural::grad::backward;
use crate::neural::{
    accounting, conv_to_dense, cross_correlate, cross_correlate_transposed, forward, forward_trace,
    Activation, ConvBias, ConvLayer, Layer, Network, NetworkKind, StandardLayer, Tensor,
};
use crate::rng::Stream;
use crate::training::{
    evaluate_rom, l21_norm, loss, make_dataset, train_reduced, ArchTemplate, LatentEncoder,
    LatentSource, OptimizerKind, TrainConfig,
};
use std::f64::consts::PI;

/// Outcome of one property check.
#[derive(Clone, Debug)]
pub struct Check {
    pub suite: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn pass(suite: &'static str, name: &'static str, detail: String) -> Self {
        Check {
            suite,
            name,
            passed: true,
            detail,
        }
    }

    fn fail(suite: &'static str, name: &'static str, detail: String) -> Self {
        Check {
            suite,
            name,
            passed: false,
            detail,
        }
    }

    fn from_bound(
        suite: &'static str,
        name: &'static str,
        observed: f64,
        limit: f64,
        detail: String,
    ) -> Self {
        if observed <= limit {
            Check::pass(suite, name, detail)
        } else {
            Check::fail(suite, name, format!("{detail}; {observed:e} > {limit:e}"))
        }
    }
}

/// Test-fixture mutations used to demonstrate that the suites catch injected
/// defects. `TconvSignFlip` flips the sign of the transposed-correlation
/// result inside the adjoint check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mutation {
    None,
    TconvSignFlip,
}

fn standard_test_problem() -> DiffusionProblem {
    DiffusionProblem {
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
    }
}

pub fn fom_suite() -> Vec<Check> {
    const SUITE: &str = "fom";
    let mut checks = Vec::new();

    // FEM convergence order 2 +- 0.2 on the manufactured variable problem.
    {
        let problem = manufactured_variable_problem();
        let mu = ParamPoint::new(vec![]).unwrap();
        let mut ks = Vec::new();
        let mut logs = Vec::new();
        for k in 4..=9 {
            let grid = Grid::new(k).unwrap();
            let u = solve_fom(&problem, &mu, grid).unwrap();
            let sup = u.values.iter().enumerate().fold(0.0_f64, |m, (j, &v)| {
                m.max((v - (PI * grid.node(j + 1)).sin()).abs())
            });
            ks.push(k as f64);
            logs.push(sup.log2());
        }
        let (slope, _, _) = linear_fit(&ks, &logs);
        checks.push(Check::from_bound(
            SUITE,
            "fem_convergence_order",
            (-slope - 2.0).abs(),
            0.2,
            format!("observed order {:.3}", -slope),
        ));
    }

    // Parametric continuity: shrinking parameter gaps shrink solution gaps.
    {
        let problem = standard_test_problem();
        let grid = Grid::new(6).unwrap();
        let base = solve_fom(&problem, &ParamPoint::new(vec![0.2, -0.5]).unwrap(), grid).unwrap();
        let mut prev = f64::INFINITY;
        let mut ok = true;
        let mut last = 0.0;
        for &d in &[0.1, 0.01, 0.001] {
            let near = solve_fom(
                &problem,
                &ParamPoint::new(vec![0.2 + d, -0.5 + d]).unwrap(),
                grid,
            )
            .unwrap();
            let gap = base
                .values
                .iter()
                .zip(&near.values)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            ok &= gap < prev;
            prev = gap;
            last = gap;
        }
        ok &= last < 1e-3;
        checks.push(if ok {
            Check::pass(
                SUITE,
                "parametric_continuity",
                format!("final gap {last:.2e}"),
            )
        } else {
            Check::fail(
                SUITE,
                "parametric_continuity",
                format!("final gap {last:.2e}"),
            )
        });
    }

    // Solution bound with 5% discretization slack.
    {
        let problem = standard_test_problem();
        let grid = Grid::new(7).unwrap();
        let bound = linf_solution_bound(&problem, grid).unwrap();
        let ell = check_uniform_ellipticity(&problem);
        let mut worst: f64 = 0.0;
        for mu in sample_params(2, 16, 314) {
            let u = solve_fom(&problem, &mu, grid).unwrap();
            let norm = discrete_hs_norm(&u, 1).unwrap();
            worst = worst.max(norm);
        }
        let ok = ell.ok && worst <= bound * 1.05;
        checks.push(if ok {
            Check::pass(
                SUITE,
                "solution_norm_bound",
                format!("max ||u||_H1 {worst:.4} <= {:.4}", bound * 1.05),
            )
        } else {
            Check::fail(
                SUITE,
                "solution_norm_bound",
                format!("max ||u||_H1 {worst:.4} vs bound {:.4}", bound * 1.05),
            )
        });
    }

    // Isotropic rho satisfies its defining condition to 1e-12 relative.
    {
        let mut worst: f64 = 0.0;
        for p in 1..=6 {
            for &(gamma, eps) in &[(0.3, 0.1), (0.7, 0.5), (1.5, 1.0)] {
                let rho = isotropic_rho(gamma, eps, p)[0];
                worst = worst.max(isotropic_rho_residual(gamma, eps, p, rho).abs());
            }
        }
        checks.push(Check::from_bound(
            SUITE,
            "isotropic_rho_residual",
            worst,
            1e-12,
            format!("max relative residual {worst:.2e}"),
        ));
    }

    checks
}

pub fn fourier_suite() -> Vec<Check> {
    const SUITE: &str = "fourier";
    let mut checks = Vec::new();

    // Hermite basis invariants for s = 1..6.
    {
        let mut worst_interp: f64 = 0.0;
        let mut worst_reflect: f64 = 0.0;
        let mut worst_norm: f64 = f64::NEG_INFINITY;
        let mut worst_mean: f64 = 0.0;
        let mut worst_pos: f64 = 0.0;
        let mut monotone_ok = true;
        for s in 1..=6usize {
            let basis = build_hermite_basis(s).unwrap();
            for j in 0..s {
                for k in 0..s {
                    let d = if j == k { 1.0 } else { 0.0 };
                    worst_interp = worst_interp
                        .max((basis.p[j].derivative_at(k, 0.0) - d).abs())
                        .max(basis.p[j].derivative_at(k, 1.0).abs())
                        .max(basis.q[j].derivative_at(k, 0.0).abs())
                        .max((basis.q[j].derivative_at(k, 1.0) - d).abs());
                }
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                for i in 0..=1000 {
                    let x = i as f64 / 1000.0;
                    worst_reflect = worst_reflect
                        .max((basis.q[j].eval(x) - sign * basis.p[j].eval(1.0 - x)).abs());
                    worst_pos = worst_pos.max(-basis.p[j].eval(x));
                }
                let bound = 0.5_f64.powf((j as f64 + 1.0) / 2.0);
                worst_norm = worst_norm.max(basis.p[j].l2_norm() - bound);
            }
            worst_mean = worst_mean.max((basis.p[0].integral() - 0.5).abs());
            let mut prev = f64::INFINITY;
            for i in 0..=1000 {
                let v = basis.p[0].eval(i as f64 / 1000.0);
                monotone_ok &= v <= prev + 1e-10;
                prev = v;
            }
        }
        checks.push(Check::from_bound(
            SUITE,
            "hermite_endpoint_conditions",
            worst_interp,
            1e-10,
            format!("max violation {worst_interp:.2e}"),
        ));
        checks.push(Check::from_bound(
            SUITE,
            "hermite_reflection_identity",
            worst_reflect,
            1e-10,
            format!("max violation {worst_reflect:.2e}"),
        ));
        checks.push(Check::from_bound(
            SUITE,
            "hermite_l2_norm_bound",
            worst_norm,
            1e-10,
            format!("max excess over (1/2)^((j+1)/2): {worst_norm:.2e}"),
        ));
        checks.push(Check::from_bound(
            SUITE,
            "hermite_mean_one_half",
            worst_mean,
            1e-12,
            format!("max |mean - 1/2| = {worst_mean:.2e}"),
        ));
        checks.push(Check::from_bound(
            SUITE,
            "hermite_positivity",
            worst_pos,
            1e-10,
            format!("max negativity {worst_pos:.2e}"),
        ));
        checks.push(if monotone_ok {
            Check::pass(
                SUITE,
                "hermite_p0_monotone",
                "nonincreasing on audit grid".into(),
            )
        } else {
            Check::fail(SUITE, "hermite_p0_monotone", "increase detected".into())
        });
    }

    // Linearity of T.
    {
        let m = 6;
        let za = apply_t(BoundaryFn::new(|x| x * x, vec![0.0], vec![1.0]), 1, m).unwrap();
        let zb = apply_t(
            BoundaryFn::new(|x| (2.0 * PI * x).cos(), vec![1.0], vec![1.0]),
            1,
            m,
        )
        .unwrap();
        let zc = apply_t(
            BoundaryFn::new(
                |x| 1.5 * x * x + 2.5 * (2.0 * PI * x).cos(),
                vec![2.5],
                vec![1.5 + 2.5],
            ),
            1,
            m,
        )
        .unwrap();
        let mut worst: f64 = 0.0;
        for k in -(m as isize)..=(m as isize) {
            worst = worst.max((zc.at(k) - (za.at(k) * 1.5 + zb.at(k) * 2.5)).norm());
        }
        checks.push(Check::from_bound(
            SUITE,
            "lift_operator_linearity",
            worst,
            1e-10,
            format!("max coefficient gap {worst:.2e}"),
        ));
    }

    // Operator norm audit on randomized inputs with analytic H^s norms.
    {
        let mut rng = Stream::new(271);
        let mut worst_ratio: f64 = 0.0;
        for s in 1..=3usize {
            for _ in 0..60 {
                if rng.next_unit() < 0.5 {
                    let n_modes = 1 + rng.next_index(4);
                    let a0 = rng.next_symmetric();
                    let cos: Vec<f64> = (0..n_modes).map(|_| rng.next_symmetric()).collect();
                    let sin: Vec<f64> = (0..n_modes).map(|_| rng.next_symmetric()).collect();
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
                    worst_ratio = worst_ratio.max(spec.norm2() / norm);
                } else {
                    let degree = 1 + rng.next_index(5);
                    let poly = Poly((0..=degree).map(|_| rng.next_symmetric()).collect());
                    let norm = poly_hs_norm(&poly, s);
                    let left: Vec<f64> = (0..s).map(|j| poly.derivative_at(j, 0.0)).collect();
                    let right: Vec<f64> = (0..s).map(|j| poly.derivative_at(j, 1.0)).collect();
                    let p2 = poly.clone();
                    let spec =
                        apply_t(BoundaryFn::new(move |x| p2.eval(x), left, right), s, 8).unwrap();
                    worst_ratio = worst_ratio.max(spec.norm2() / norm);
                }
            }
        }
        checks.push(Check::from_bound(
            SUITE,
            "lift_operator_norm_le_2",
            worst_ratio,
            2.0 * (1.0 + 1e-6),
            format!("max ||Tf||/||f||_Hs = {worst_ratio:.6}"),
        ));
    }

    // Reconstruction error non-increasing in bandwidth.
    {
        let grid = Grid::new(8).unwrap();
        let u = GridFunction::sample(grid, |x| (PI * x).sin() + 0.2 * x * x);
        let mut prev = f64::INFINITY;
        let mut ok = true;
        for &m in &[2usize, 4, 8, 16, 32] {
            let code = encode_grid(&u, 1, m).unwrap();
            let synth = synthesize_dense(&code, grid);
            let sup = synth
                .values
                .iter()
                .zip(&u.values)
                .fold(0.0_f64, |mx, (a, b)| mx.max((a - b).abs()));
            ok &= sup <= prev + 1e-8;
            prev = sup;
        }
        checks.push(if ok {
            Check::pass(
                SUITE,
                "reconstruction_monotone_in_bandwidth",
                format!("error at m=32: {prev:.2e}"),
            )
        } else {
            Check::fail(
                SUITE,
                "reconstruction_monotone_in_bandwidth",
                "increase".into(),
            )
        });
    }

    checks
}

pub fn neural_suite(mutation: Mutation) -> Vec<Check> {
    const SUITE: &str = "neural";
    let mut checks = Vec::new();
    let mut rng = Stream::new(999);
    let rand_vec =
        |rng: &mut Stream, n: usize| -> Vec<f64> { (0..n).map(|_| rng.next_symmetric()).collect() };

    // Adjoint identity over a randomized (s, t, d) lattice, scalar form.
    {
        let mut worst: f64 = 0.0;
        for s in 1..=4usize {
            for t in 1..=3usize {
                for d in 1..=3usize {
                    let n_out = 2 + rng.next_index(4);
                    let n = d * (s - 1) + 1 + t * (n_out - 1);
                    let w = rand_vec(&mut rng, s);
                    let v = rand_vec(&mut rng, n);
                    let cv = cross_correlate(&w, &v, t, d);
                    let u = rand_vec(&mut rng, cv.len());
                    let mut tu = cross_correlate_transposed(&w, &u, t, d);
                    if mutation == Mutation::TconvSignFlip {
                        tu.iter_mut().for_each(|x| *x = -*x);
                    }
                    let lhs: f64 = cv.iter().zip(&u).map(|(a, b)| a * b).sum();
                    let rhs: f64 = v.iter().zip(&tu).map(|(a, b)| a * b).sum();
                    worst = worst.max((lhs - rhs).abs());
                }
            }
        }
        checks.push(Check::from_bound(
            SUITE,
            "transposed_correlation_adjoint",
            worst,
            1e-12,
            format!("max |<wv,u> - <v,w'u>| = {worst:.2e}"),
        ));
    }

    // Length formulas against the loop-nest reference on the full lattice.
    {
        let mut ok = true;
        for n in 1..=8usize {
            for s in 1..=8usize {
                for t in 1..=8usize {
                    for d in 1..=8usize {
                        let w: Vec<f64> = (1..=s).map(|i| i as f64).collect();
                        let v: Vec<f64> = (1..=n).map(|i| (i as f64).cos()).collect();
                        let got = cross_correlate(&w, &v, t, d).len();
                        let mut expect = 0;
                        let mut j = 0;
                        while j * t + (s - 1) * d < n {
                            expect += 1;
                            j += 1;
                        }
                        ok &= got == expect;
                        if got > 0 {
                            let span = d * (s - 1) + 1;
                            ok &= got == (n - span) / t + 1;
                            let tl = cross_correlate_transposed(&w, &vec![1.0; got], t, d).len();
                            ok &= tl == (got - 1) * t + d * (s - 1) + 1;
                        }
                    }
                }
            }
        }
        checks.push(if ok {
            Check::pass(
                SUITE,
                "length_formulas_lattice",
                "all (n,s,t,d) in [1,8]^4".into(),
            )
        } else {
            Check::fail(SUITE, "length_formulas_lattice", "mismatch".into())
        });
    }

    // Grouping isolation with g = m = m'.
    {
        let m = 4;
        let layer = ConvLayer {
            in_channels: m,
            out_channels: m,
            groups: m,
            kernel_size: 2,
            stride: 1,
            dilation: 1,
            weights: rand_vec(&mut rng, m * 2),
            bias: ConvBias::PerChannel(vec![0.0; m]),
            activation: Activation::Identity,
        };
        let net = Network::new(NetworkKind::Cnn, vec![Layer::Conv(layer)]).unwrap();
        let x = Tensor::new(m, 6, rand_vec(&mut rng, m * 6)).unwrap();
        let base = forward(&net, &x).unwrap();
        let mut ok = true;
        for perturb in 0..m {
            let mut x2 = x.clone();
            for i in 0..6 {
                *x2.at_mut(perturb, i) += 5.0;
            }
            let out = forward(&net, &x2).unwrap();
            for c in 0..m {
                if c == perturb {
                    continue;
                }
                for i in 0..base.length {
                    ok &= out.at(c, i) == base.at(c, i);
                }
            }
        }
        checks.push(if ok {
            Check::pass(SUITE, "group_channel_isolation", "exact".into())
        } else {
            Check::fail(
                SUITE,
                "group_channel_isolation",
                "cross-talk detected".into(),
            )
        });
    }

    // Exact positive homogeneity of the output layer.
    {
        let l1 = StandardLayer::new(
            Mat::from_rows(&[rand_vec(&mut rng, 3), rand_vec(&mut rng, 3)]),
            rand_vec(&mut rng, 2),
            Activation::Relu,
        )
        .unwrap();
        let l2 = StandardLayer::new(
            Mat::from_rows(&[rand_vec(&mut rng, 2)]),
            rand_vec(&mut rng, 1),
            Activation::Identity,
        )
        .unwrap();
        let net = Network::new(
            NetworkKind::ReluNet,
            vec![Layer::Standard(l1), Layer::Standard(l2)],
        )
        .unwrap();
        let x = Tensor::vector(rand_vec(&mut rng, 3));
        let base = forward(&net, &x).unwrap();
        let mut ok = true;
        // Powers of two so the scaling is exact in floating point.
        for &eta in &[0.5, 2.0, 16.0] {
            let mut scaled = net.clone();
            scaled.scale_output_layer(eta);
            let out = forward(&scaled, &x).unwrap();
            ok &= out.data.iter().zip(&base.data).all(|(a, b)| *a == eta * b);
        }
        checks.push(if ok {
            Check::pass(SUITE, "output_layer_homogeneity", "exact equality".into())
        } else {
            Check::fail(SUITE, "output_layer_homogeneity", "mismatch".into())
        });
    }

    // conv_to_dense equivalence on randomized layers.
    {
        let mut worst: f64 = 0.0;
        for _ in 0..40 {
            let g = [1usize, 2][rng.next_index(2)];
            let m_in = g * (1 + rng.next_index(2));
            let m_out = g * (1 + rng.next_index(2));
            let kernel = 1 + rng.next_index(3);
            let stride = 1 + rng.next_index(2);
            let dilation = 1 + rng.next_index(2);
            let span = dilation * (kernel - 1) + 1;
            let n = span + rng.next_index(4);
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
                worst = worst.max((p - q).abs());
            }
        }
        checks.push(Check::from_bound(
            SUITE,
            "conv_to_dense_equivalence",
            worst,
            1e-12,
            format!("max entry gap {worst:.2e}"),
        ));
    }

    // Reverse-mode gradients against central finite differences.
    {
        let tconv = ConvLayer {
            in_channels: 2,
            out_channels: 2,
            groups: 1,
            kernel_size: 2,
            stride: 2,
            dilation: 1,
            weights: rand_vec(&mut rng, 2 * 2 * 2),
            bias: ConvBias::PerChannel(rand_vec(&mut rng, 2)),
            activation: Activation::Relu,
        };
        let conv = ConvLayer {
            in_channels: 2,
            out_channels: 2,
            groups: 1,
            kernel_size: 2,
            stride: 1,
            dilation: 2,
            weights: rand_vec(&mut rng, 2 * 2 * 2),
            bias: ConvBias::PerChannel(rand_vec(&mut rng, 2)),
            activation: Activation::Identity,
        };
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
        let mut worst: f64 = 0.0;
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
        checks.push(Check::from_bound(
            SUITE,
            "gradients_match_finite_differences",
            worst,
            1e-6,
            format!("max relative gap {worst:.2e}"),
        ));
    }

    checks
}

pub fn constructor_suite() -> Vec<Check> {
    const SUITE: &str = "constructor";
    let mut checks = Vec::new();
    let mut rng = Stream::new(4242);
    let rand_vec =
        |rng: &mut Stream, n: usize| -> Vec<f64> { (0..n).map(|_| rng.next_symmetric()).collect() };

    // ReLU conversion: weights preserved bit-for-bit, exact on the samples.
    {
        let dims = [3usize, 8, 6, 2];
        let mut layers = Vec::new();
        for w in dims.windows(2) {
            let rows: Vec<Vec<f64>> = (0..w[1]).map(|_| rand_vec(&mut rng, w[0])).collect();
            layers.push(Layer::Standard(
                StandardLayer::new(Mat::from_rows(&rows), vec![0.0; w[1]], Activation::Identity)
                    .unwrap(),
            ));
        }
        let net = Network::new(NetworkKind::ReluNet, layers).unwrap();
        let points: Vec<Vec<f64>> = (0..64).map(|_| rand_vec(&mut rng, 3)).collect();
        let set = CompactSampleSet::with_default_inflation(points).unwrap();
        let relu = linear_to_relu(&net, &set).unwrap();
        let mut weights_identical = true;
        for (a, b) in net.layers.iter().zip(&relu.layers) {
            if let (Layer::Standard(x), Layer::Standard(y)) = (a, b) {
                weights_identical &= x.weight == y.weight;
            }
        }
        let mut worst: f64 = 0.0;
        let mut worst_pre: f64 = 0.0;
        for p in set.points() {
            let want = forward(&net, &Tensor::vector(p.clone())).unwrap();
            let got = forward(&relu, &Tensor::vector(p.clone())).unwrap();
            let scale = 1.0 + want.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            for (a, b) in got.data.iter().zip(&want.data) {
                worst = worst.max((a - b).abs() / scale);
            }
            let trace = forward_trace(&relu, &Tensor::vector(p.clone())).unwrap();
            for pre in &trace.pre_activations[..trace.pre_activations.len() - 1] {
                for &v in &pre.data {
                    worst_pre = worst_pre.max(-v);
                }
            }
        }
        checks.push(if weights_identical {
            Check::pass(SUITE, "conversion_preserves_weights", "bit-for-bit".into())
        } else {
            Check::fail(
                SUITE,
                "conversion_preserves_weights",
                "weights changed".into(),
            )
        });
        checks.push(Check::from_bound(
            SUITE,
            "conversion_exact_on_samples",
            worst,
            1e-10,
            format!("max relative deviation {worst:.2e}"),
        ));
        checks.push(Check::from_bound(
            SUITE,
            "conversion_preactivations_nonnegative",
            worst_pre,
            1e-12,
            format!("max negativity {worst_pre:.2e}"),
        ));

        // Negative control: outputs must differ somewhere outside the box.
        let far = Tensor::vector(vec![50.0, -50.0, 50.0]);
        let lin = forward(&net, &far).unwrap();
        let cvt = forward(&relu, &far).unwrap();
        let gap = lin
            .data
            .iter()
            .zip(&cvt.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        checks.push(if gap > 1e-6 {
            Check::pass(
                SUITE,
                "conversion_differs_off_sample_hull",
                format!("gap {gap:.2e} at a far point"),
            )
        } else {
            Check::fail(
                SUITE,
                "conversion_differs_off_sample_hull",
                "no divergence found (compactness hypothesis untested)".into(),
            )
        });
    }

    // Linear decoder is linear.
    {
        let grid = Grid::new(6).unwrap();
        let m = 4;
        let net = linear_decoder(m, grid);
        let a = rand_vec(&mut rng, 2 * m + 1);
        let b = rand_vec(&mut rng, 2 * m + 1);
        let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 1.3 * x - 0.7 * y).collect();
        let fa = forward(&net, &Tensor::vector(a)).unwrap();
        let fb = forward(&net, &Tensor::vector(b)).unwrap();
        let fc = forward(&net, &Tensor::vector(combo)).unwrap();
        let mut worst: f64 = 0.0;
        for ((x, y), z) in fa.data.iter().zip(&fb.data).zip(&fc.data) {
            worst = worst.max((1.3 * x - 0.7 * y - z).abs());
        }
        checks.push(Check::from_bound(
            SUITE,
            "decoder_prelu_linearity",
            worst,
            1e-10,
            format!("max additivity gap {worst:.2e}"),
        ));
    }

    // Reconstruction through the built ReLU CNN obeys the truncation bound.
    {
        let grid = Grid::new(7).unwrap();
        let quadratic = |x: f64| x * (1.0 - x) / 2.0;
        let norm_quadratic = poly_hs_norm(&Poly(vec![0.0, 0.5, -0.5]), 1);
        let norm_sine = trig_poly_hs_norm_for_sine_pi();
        let mut ok = true;
        let mut detail = String::new();
        for &m in &[4usize, 8] {
            let codes: Vec<Vec<f64>> = vec![
                b_map(&apply_t(BoundaryFn::new(quadratic, vec![0.0], vec![0.0]), 1, m).unwrap())
                    .unwrap()
                    .0,
                b_map(
                    &apply_t(
                        // s = 1 wants order-0 endpoint values: sin vanishes.
                        BoundaryFn::new(|x| (PI * x).sin(), vec![0.0], vec![0.0]),
                        1,
                        m,
                    )
                    .unwrap(),
                )
                .unwrap()
                .0,
            ];
            let set = CompactSampleSet::with_default_inflation(codes.clone()).unwrap();
            let decoder = build_decoder_cnn(m, grid, &set).unwrap();
            for (idx, code) in codes.iter().enumerate() {
                let out = forward(&decoder, &Tensor::vector(code.clone())).unwrap();
                let (f, norm): (Box<dyn Fn(f64) -> f64>, f64) = if idx == 0 {
                    (Box::new(quadratic), norm_quadratic)
                } else {
                    (Box::new(|x: f64| (PI * x).sin()), norm_sine)
                };
                let sup = out.data.iter().enumerate().fold(0.0_f64, |mx, (j, &v)| {
                    mx.max((v - f(grid.node(j + 1))).abs())
                });
                let bound = 2.0_f64.sqrt() * (m as f64).powf(-0.5) * norm;
                ok &= sup <= bound;
                detail = format!("m={m}: sup {sup:.3e} <= bound {bound:.3e}");
            }
        }
        checks.push(if ok {
            Check::pass(SUITE, "decoder_truncation_bound", detail)
        } else {
            Check::fail(SUITE, "decoder_truncation_bound", detail)
        });
    }

    // Decoder depth grows affinely in the grid level.
    {
        let m = 4;
        let ks: Vec<f64> = (4..=8).map(|k| k as f64).collect();
        let depths: Vec<f64> = (4..=8)
            .map(|k| accounting(&linear_decoder(m, Grid::new(k).unwrap())).depth as f64)
            .collect();
        let (slope, intercept, r2) = linear_fit(&ks, &depths);
        checks.push(if r2 >= 0.99 {
            Check::pass(
                SUITE,
                "decoder_depth_affine_in_level",
                format!("depth = {slope:.2} k + {intercept:.2}, R^2 = {r2:.4}"),
            )
        } else {
            Check::fail(
                SUITE,
                "decoder_depth_affine_in_level",
                format!("R^2 = {r2:.4}"),
            )
        });
    }

    // Capacity formula spot value.
    {
        let delta = capacity_delta(8.0, 1);
        checks.push(Check::from_bound(
            SUITE,
            "capacity_delta_hand_value",
            (delta - 4.0).abs(),
            1e-10,
            format!("delta(8, p=1) = {delta}"),
        ));
    }

    checks
}

fn trig_poly_hs_norm_for_sine_pi() -> f64 {
    // ||sin(pi x)||_{H^1(0,1)} = sqrt(1/2 + pi^2/2).
    (0.5 + PI * PI / 2.0).sqrt()
}

pub fn training_suite() -> Vec<Check> {
    const SUITE: &str = "training";
    let mut checks = Vec::new();

    // Loss homogeneity to 1e-12 relative.
    {
        let arch = ArchTemplate {
            hidden_layers: 1,
            hidden_width: 12,
        };
        let net = crate::training::init_mlp(2, 5, &arch, 17);
        let params: Vec<Vec<f64>> = vec![vec![0.2, -0.6], vec![-0.1, 0.8], vec![0.9, 0.4]];
        let targets: Vec<Vec<f64>> = params
            .iter()
            .map(|mu| vec![mu[0], mu[1], 0.1, -0.2, 0.3])
            .collect();
        let lambda = 0.07;
        let base = loss(&net, &params, &targets, lambda).unwrap();
        let mut worst: f64 = 0.0;
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
        checks.push(Check::from_bound(
            SUITE,
            "loss_positive_homogeneity",
            worst,
            1e-12,
            format!("max relative gap {worst:.2e}"),
        ));
    }

    // Regularizer equals a loop-nest l2,1 reference.
    {
        let mut rng = Stream::new(51);
        let w = Mat::from_rows(
            &(0..5)
                .map(|_| (0..7).map(|_| rng.next_symmetric()).collect::<Vec<f64>>())
                .collect::<Vec<_>>(),
        );
        let mut reference = 0.0;
        for j in 0..w.cols {
            let mut acc = 0.0;
            for i in 0..w.rows {
                acc += w[(i, j)] * w[(i, j)];
            }
            reference += acc.sqrt();
        }
        let gap = (l21_norm(&w) - reference).abs();
        checks.push(Check::from_bound(
            SUITE,
            "l21_matches_loop_reference",
            gap,
            1e-14,
            format!("gap {gap:.2e}"),
        ));
    }

    // Dataset determinism and training-log determinism; best-iterate
    // bookkeeping; oracle-vs-trained comparison at small scale.
    {
        let problem = standard_test_problem();
        let grid = Grid::new(5).unwrap();
        let (s, m) = (1usize, 4usize);
        let ds1 = make_dataset(
            &problem,
            grid,
            s,
            m,
            24,
            2024,
            "train",
            LatentEncoder::Quadrature,
        )
        .unwrap();
        let ds2 = make_dataset(
            &problem,
            grid,
            s,
            m,
            24,
            2024,
            "train",
            LatentEncoder::Quadrature,
        )
        .unwrap();
        checks.push(if ds1 == ds2 {
            Check::pass(SUITE, "dataset_determinism", "bit-identical rebuild".into())
        } else {
            Check::fail(SUITE, "dataset_determinism", "rebuild differs".into())
        });

        let config = TrainConfig {
            lambda: 1e-5,
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.01,
            epochs: 150,
            batch_size: 24,
            seed: 5,
            eta_star: None,
        };
        let arch = ArchTemplate {
            hidden_layers: 2,
            hidden_width: 32,
        };
        let t1 = train_reduced(&ds1, &arch, &config).unwrap();
        let t2 = train_reduced(&ds2, &arch, &config).unwrap();
        checks.push(if t1.log == t2.log && t1.network == t2.network {
            Check::pass(
                SUITE,
                "training_determinism",
                "identical logs and weights".into(),
            )
        } else {
            Check::fail(SUITE, "training_determinism", "runs diverged".into())
        });

        let mut ok = true;
        let mut best_so_far = f64::INFINITY;
        for rec in &t1.log {
            best_so_far = best_so_far.min(rec.total);
        }
        ok &= (best_so_far - t1.best_total).abs() < 1e-15;
        checks.push(if ok {
            Check::pass(
                SUITE,
                "best_iterate_bookkeeping",
                format!(
                    "best total {:.3e} at epoch {}",
                    t1.best_total, t1.best_epoch
                ),
            )
        } else {
            Check::fail(SUITE, "best_iterate_bookkeeping", "best mismatch".into())
        });

        // Oracle floor never exceeds the trained model by more than noise.
        let codes: Vec<Vec<f64>> = ds1.latents.clone();
        let set = CompactSampleSet::with_default_inflation(codes).unwrap();
        let decoder = build_decoder_cnn(m, grid, &set).unwrap();
        let oracle = evaluate_rom(
            LatentSource::ExactEncode,
            &decoder,
            &problem,
            grid,
            s,
            m,
            64,
            909_090,
        )
        .unwrap();
        let trained = evaluate_rom(
            LatentSource::Reduced(&t1.network),
            &decoder,
            &problem,
            grid,
            s,
            m,
            64,
            909_090,
        )
        .unwrap();
        let slack = 3.0 * oracle.se_mean_sup_sq;
        let ok = oracle.mean_sup_sq <= trained.mean_sup_sq + slack;
        checks.push(if ok {
            Check::pass(
                SUITE,
                "oracle_floor_below_trained",
                format!(
                    "E_oracle {:.3e} <= E_trained {:.3e} + noise",
                    oracle.e, trained.e
                ),
            )
        } else {
            Check::fail(
                SUITE,
                "oracle_floor_below_trained",
                format!(
                    "E_oracle {:.3e} > E_trained {:.3e} + {slack:.1e}",
                    oracle.e, trained.e
                ),
            )
        });
    }

    checks
}

/// Run every suite. The mutation parameter exists for fixture tests that
/// prove the suites catch injected defects; production callers pass
/// [`Mutation::None`].
pub fn run_all(mutation: Mutation) -> Vec<Check> {
    let mut checks = Vec::new();
    checks.extend(fom_suite());
    checks.extend(fourier_suite());
    checks.extend(neural_suite(mutation));
    checks.extend(constructor_suite());
    checks.extend(training_suite());
    checks
}
