//! Periodicization and Fourier lifting.
//!
//! A function f in H^s(0,1) is turned into a C^{s-1} periodic signal by
//! squeezing it into the right half period and prepending a copy corrected
//! with a two-point Hermite polynomial that cancels the endpoint jumps of f
//! and its derivatives:
//!
//!   f~(x) = f(2x) + p_f(2x) on [0, 1/2],   f~(x) = f(2x - 1) on (1/2, 1].
//!
//! The lifting operator T maps f to the 2m+1 central Fourier coefficients of
//! f~, and the real reparametrization B packs the Hermitian-symmetric
//! spectrum into a real vector [a0, a1, b1, ..., am, bm]. The dense decoder
//! [`synthesize_dense`] evaluates the truncated series back on the grid and
//! serves as the ground truth the convolutional decoder is held to.

use crate::fom::{FomError, Grid, GridFunction};
use crate::linalg::{lu_solve, lu_solve_refined, solve_rational_system, Mat, Ratio};
use crate::quad::gauss_legendre;
use num_complex::Complex64;
use thiserror::Error;

use std::f64::consts::PI;

#[derive(Debug, Error)]
pub enum FourierError {
    #[error("smoothness index s = {s} outside supported range 1..=8")]
    SmoothnessOutOfRange { s: usize },
    #[error("Hermite interpolation system is ill-conditioned at s = {s} (residual {residual:e})")]
    IllConditioned { s: usize, residual: f64 },
    #[error("spectrum is not Hermitian-symmetric (max asymmetry {asymmetry:e})")]
    NotHermitian { asymmetry: f64 },
    #[error("latent code length {len} is not odd")]
    BadCodeLength { len: usize },
    #[error(
        "grid too coarse for encoding: N_h = {n_h} but need N_h >= 4m = {need_m} and N_h >= {need_s}"
    )]
    GridTooCoarse {
        n_h: usize,
        need_m: usize,
        need_s: usize,
    },
    #[error("endpoint derivatives up to order {need} required, got {got}")]
    MissingDerivatives { need: usize, got: usize },
    #[error(transparent)]
    Fom(#[from] FomError),
}

/// A polynomial in monomial form, low degree first.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn scale(&self, factor: f64) -> Poly {
        Poly(self.0.iter().map(|c| c * factor).collect())
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.0.len().max(other.0.len());
        let mut out = vec![0.0; n];
        for (i, c) in self.0.iter().enumerate() {
            out[i] += c;
        }
        for (i, c) in other.0.iter().enumerate() {
            out[i] += c;
        }
        Poly(out)
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    /// Exact L^2(0,1) norm from the coefficient Gram sums.
    pub fn l2_norm(&self) -> f64 {
        let mut acc = 0.0;
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in self.0.iter().enumerate() {
                acc += a * b / (i + j + 1) as f64;
            }
        }
        acc.max(0.0).sqrt()
    }

    /// Integral over [0,1], with compensated summation and exact recovery of
    /// the division remainders so large-coefficient polynomials (s = 8 has
    /// entries near 2e5) still integrate to full precision.
    pub fn integral(&self) -> f64 {
        let mut sum = 0.0_f64;
        let mut comp = 0.0_f64;
        for (i, &c) in self.0.iter().enumerate() {
            let den = (i + 1) as f64;
            let term = c / den;
            let term_err = (-term).mul_add(den, c) / den;
            let t = sum + term;
            let s_err = if sum.abs() >= term.abs() {
                (sum - t) + term
            } else {
                (term - t) + sum
            };
            sum = t;
            comp += term_err + s_err;
        }
        sum + comp
    }

    /// k-th derivative value at x.
    pub fn derivative_at(&self, k: usize, x: f64) -> f64 {
        let mut acc = 0.0;
        for (i, c) in self.0.iter().enumerate().skip(k) {
            let mut fall = 1.0;
            for d in 0..k {
                fall *= (i - d) as f64;
            }
            acc += c * fall * x.powi((i - k) as i32);
        }
        acc
    }
}

/// The two-point Hermite polynomials p_{s,j}, q_{s,j} of degree 2s-1:
/// p_{s,j} matches the j-th derivative at 0 (all others zero) and vanishes to
/// order s at 1; q_{s,j} mirrors the roles of the endpoints.
#[derive(Clone, Debug)]
pub struct HermiteBasis {
    pub s: usize,
    pub p: Vec<Poly>,
    pub q: Vec<Poly>,
}

/// Maximum supported smoothness; the monomial-basis interpolation systems
/// degrade beyond this.
pub const MAX_SMOOTHNESS: usize = 8;

pub fn build_hermite_basis(s: usize) -> Result<HermiteBasis, FourierError> {
    if s < 1 || s > MAX_SMOOTHNESS {
        return Err(FourierError::SmoothnessOutOfRange { s });
    }
    let degree = 2 * s;
    let mut p = Vec::with_capacity(s);
    let mut q = Vec::with_capacity(s);
    // Row layout: derivative orders 0..s-1 at x = 0, then at x = 1. The
    // entries are falling factorials, so the system is integer and is solved
    // exactly over rationals where i128 arithmetic allows; the float fallback
    // (equilibrated rows, refined LU) covers the rest behind the residual
    // gate.
    let mut fall = vec![vec![0_i128; degree]; s];
    for k in 0..s {
        for (i, f) in fall[k].iter_mut().enumerate().skip(k) {
            let mut acc = 1_i128;
            for d in 0..k {
                acc *= (i - d) as i128;
            }
            *f = acc;
        }
    }
    let rational_matrix: Vec<Vec<Ratio>> = (0..degree)
        .map(|row| {
            (0..degree)
                .map(|col| {
                    let k = row % s;
                    if row < s {
                        Ratio::from_int(if col == k { fall[k][col] } else { 0 })
                    } else {
                        Ratio::from_int(fall[k][col])
                    }
                })
                .collect()
        })
        .collect();

    let mut a = Mat::zeros(degree, degree);
    let mut row_scale = vec![1.0; degree];
    for row in 0..degree {
        for col in 0..degree {
            a[(row, col)] = rational_matrix[row][col].to_f64();
        }
        let max = (0..degree).fold(0.0_f64, |m, col| m.max(a[(row, col)].abs()));
        if max > 0.0 {
            row_scale[row] = 1.0 / max;
            for col in 0..degree {
                a[(row, col)] *= row_scale[row];
            }
        }
    }

    let solve_column = |unit: usize| -> Result<Poly, FourierError> {
        let rational_rhs: Vec<Ratio> = (0..degree)
            .map(|r| Ratio::from_int(if r == unit { 1 } else { 0 }))
            .collect();
        if let Some(exact) = solve_rational_system(&rational_matrix, &rational_rhs) {
            return Ok(Poly(exact.into_iter().map(Ratio::to_f64).collect()));
        }
        let mut rhs = vec![0.0; degree];
        rhs[unit] = row_scale[unit];
        let coeffs = lu_solve_refined(&a, &rhs).ok_or(FourierError::IllConditioned {
            s,
            residual: f64::INFINITY,
        })?;
        check_residual(&a, &coeffs, &rhs, s)?;
        Ok(Poly(coeffs))
    };

    for j in 0..s {
        p.push(solve_column(j)?);
        q.push(solve_column(s + j)?);
    }
    Ok(HermiteBasis { s, p, q })
}

fn check_residual(a: &Mat, x: &[f64], rhs: &[f64], s: usize) -> Result<(), FourierError> {
    let r = a.matvec(x);
    let residual = r
        .iter()
        .zip(rhs)
        .fold(0.0_f64, |m, (got, want)| m.max((got - want).abs()));
    if residual > 1e-8 {
        return Err(FourierError::IllConditioned { s, residual });
    }
    Ok(())
}

/// A scalar function on [0,1] packaged with one-sided endpoint derivatives
/// f^(j)(0), f^(j)(1) for j = 0..derivative count - 1.
pub struct BoundaryFn {
    f: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl BoundaryFn {
    pub fn new(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        left: Vec<f64>,
        right: Vec<f64>,
    ) -> Self {
        assert_eq!(left.len(), right.len());
        BoundaryFn {
            f: Box::new(f),
            left,
            right,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn derivative_orders(&self) -> usize {
        self.left.len()
    }
}

/// The periodicized version of a function: evaluator, endpoint jumps, and the
/// Hermite correction polynomial.
pub struct Periodicized {
    base: BoundaryFn,
    pub jumps: Vec<f64>,
    pub correction: Poly,
    pub s: usize,
}

impl Periodicized {
    /// Two-branch evaluator: f(2x) + p_f(2x) on [0,1/2], f(2x-1) on (1/2,1].
    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.5 {
            self.base.eval(2.0 * x) + self.correction.eval(2.0 * x)
        } else {
            self.base.eval(2.0 * x - 1.0)
        }
    }
}

/// Build the periodicization f~ of f for smoothness s.
///
/// Requires endpoint derivatives of orders 0..s-1; the correction polynomial
/// is p_f = sum_j [f^(j)(1) - f^(j)(0)] (p_{s,j} - q_{s,j}).
pub fn periodicize(f: BoundaryFn, s: usize) -> Result<Periodicized, FourierError> {
    if f.derivative_orders() < s {
        return Err(FourierError::MissingDerivatives {
            need: s,
            got: f.derivative_orders(),
        });
    }
    let basis = build_hermite_basis(s)?;
    let mut correction = Poly(vec![0.0]);
    let mut jumps = Vec::with_capacity(s);
    for j in 0..s {
        let jump = f.right[j] - f.left[j];
        jumps.push(jump);
        correction = correction.add(&basis.p[j].sub(&basis.q[j]).scale(jump));
    }
    Ok(Periodicized {
        base: f,
        jumps,
        correction,
        s,
    })
}

/// Truncated Fourier data of a periodicized signal: z_k for k = -m..m in
/// ascending order, z_k = int_0^1 f~(x) e^{-2 pi i k x} dx.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub z: Vec<Complex64>,
}

impl Spectrum {
    pub fn bandwidth(&self) -> usize {
        debug_assert!(self.z.len() % 2 == 1);
        self.z.len() / 2
    }

    /// Coefficient z_k for k in -m..=m.
    pub fn at(&self, k: isize) -> Complex64 {
        let m = self.bandwidth() as isize;
        debug_assert!(-m <= k && k <= m);
        self.z[(k + m) as usize]
    }

    pub fn norm2(&self) -> f64 {
        self.z.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest violation of z_{-k} = conj(z_k) (includes |Im z_0|).
    pub fn hermitian_asymmetry(&self) -> f64 {
        let m = self.bandwidth() as isize;
        let mut worst = self.at(0).im.abs();
        for k in 1..=m {
            worst = worst.max((self.at(-k) - self.at(k).conj()).norm());
        }
        worst
    }
}

/// Real latent vector [a0, a1, b1, ..., am, bm] with z_k = a_k + i b_k.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode(pub Vec<f64>);

impl LatentCode {
    pub fn bandwidth(&self) -> usize {
        debug_assert!(self.0.len() % 2 == 1);
        self.0.len() / 2
    }

    pub fn norm2(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Apply the lifting operator T: periodicize then integrate against the
/// Fourier modes e^{-2 pi i k x} for k = -m..m.
///
/// Quadrature is composite Gauss-Legendre with at least 8(m+1) panels of 8
/// points, split at x = 1/2 where the two-branch definition has a kink, so
/// the quadrature error sits far below the truncation error.
pub fn apply_t(f: BoundaryFn, s: usize, m: usize) -> Result<Spectrum, FourierError> {
    let periodic = periodicize(f, s)?;
    Ok(spectrum_of_periodicized(&periodic, m))
}

/// The quadrature half of [`apply_t`], reusable when the periodicization is
/// already at hand.
pub fn spectrum_of_periodicized(periodic: &Periodicized, m: usize) -> Spectrum {
    let panels_per_half = 4 * (m + 1);
    let points = 8;
    let (nodes, weights) = gauss_legendre(points);
    let mut z = vec![Complex64::new(0.0, 0.0); 2 * m + 1];
    for half in 0..2 {
        let a = 0.5 * half as f64;
        let width = 0.5 / panels_per_half as f64;
        for panel in 0..panels_per_half {
            let lo = a + panel as f64 * width;
            let mid = lo + 0.5 * width;
            let hw = 0.5 * width;
            for (&t, &w) in nodes.iter().zip(&weights) {
                let x = mid + hw * t;
                let fx = periodic.eval(x) * w * hw;
                for (idx, zk) in z.iter_mut().enumerate() {
                    let k = idx as f64 - m as f64;
                    let phase = -2.0 * PI * k * x;
                    *zk += Complex64::from_polar(fx, phase);
                }
            }
        }
    }
    Spectrum { z }
}

/// Pack a Hermitian-symmetric spectrum into the real latent ordering.
pub fn b_map(spec: &Spectrum) -> Result<LatentCode, FourierError> {
    let asym = spec.hermitian_asymmetry();
    if asym > 1e-8 {
        return Err(FourierError::NotHermitian { asymmetry: asym });
    }
    let m = spec.bandwidth() as isize;
    let mut v = Vec::with_capacity(2 * m as usize + 1);
    v.push(spec.at(0).re);
    for k in 1..=m {
        v.push(spec.at(k).re);
        v.push(spec.at(k).im);
    }
    Ok(LatentCode(v))
}

/// Reconstruct the Hermitian spectrum from a latent code (pseudo-inverse of
/// [`b_map`]).
pub fn b_pinv(code: &LatentCode) -> Result<Spectrum, FourierError> {
    if code.0.len() % 2 != 1 {
        return Err(FourierError::BadCodeLength { len: code.0.len() });
    }
    let m = code.bandwidth();
    let mut z = vec![Complex64::new(0.0, 0.0); 2 * m + 1];
    z[m] = Complex64::new(code.0[0], 0.0);
    for k in 1..=m {
        let zk = Complex64::new(code.0[2 * k - 1], code.0[2 * k]);
        z[m + k] = zk;
        z[m - k] = zk.conj();
    }
    Ok(Spectrum { z })
}

/// Dense decoder oracle: evaluate the truncated series of the periodicized
/// signal at the points (x_j + 1)/2, which is where the original f lives.
///
/// Returns [Re sum_k z_k e^{2 pi i k (x_j + 1)/2}]_j as a grid function.
pub fn synthesize_dense(code: &LatentCode, grid: Grid) -> GridFunction {
    let spec = b_pinv(code).expect("latent codes have odd length by construction");
    let m = spec.bandwidth() as isize;
    let values: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&xj| {
            let t = (xj + 1.0) / 2.0;
            let mut acc = spec.at(0).re;
            for k in 1..=m {
                let phase = 2.0 * PI * k as f64 * t;
                let zk = spec.at(k);
                // z_k e^{i phase} + conj pair contributes twice the real part.
                acc += 2.0 * (zk.re * phase.cos() - zk.im * phase.sin());
            }
            acc
        })
        .collect();
    GridFunction { grid, values }
}

/// One-sided endpoint derivative recovery: fit a polynomial through the `w`
/// nodes nearest the endpoint and differentiate it there. The stencil width
/// w = max(s+2, 2s) keeps the consistency order of every recovered
/// derivative j <= s-1 at s+1 or better.
fn endpoint_derivatives(u: &GridFunction, s: usize) -> Result<(Vec<f64>, Vec<f64>), FourierError> {
    let n_h = u.grid.node_count();
    let h = u.grid.h();
    let w = (s + 2).max(2 * s);
    if n_h < w {
        return Err(FourierError::GridTooCoarse {
            n_h,
            need_m: 0,
            need_s: w,
        });
    }
    // Left end: nodes x_1..x_w, local coordinate t = x/h in 1..=w, so the
    // fitted polynomial c(t) gives f^(j)(0) = j! c_j / h^j.
    let fit = |points: &[(f64, f64)]| -> Result<Vec<f64>, FourierError> {
        let n = points.len();
        let mut a = Mat::zeros(n, n);
        let mut rhs = vec![0.0; n];
        for (row, &(t, y)) in points.iter().enumerate() {
            let mut pw = 1.0;
            for col in 0..n {
                a[(row, col)] = pw;
                pw *= t;
            }
            rhs[row] = y;
        }
        lu_solve(&a, &rhs).ok_or(FourierError::IllConditioned {
            s,
            residual: f64::INFINITY,
        })
    };
    let left_pts: Vec<(f64, f64)> = (0..w).map(|i| ((i + 1) as f64, u.values[i])).collect();
    let cl = fit(&left_pts)?;
    let right_pts: Vec<(f64, f64)> = (0..w)
        .map(|i| {
            let j = n_h - w + i;
            (((j + 1) as f64) - n_h as f64, u.values[j]) // t = (x - 1)/h
        })
        .collect();
    let cr = fit(&right_pts)?;
    let mut left = Vec::with_capacity(s);
    let mut right = Vec::with_capacity(s);
    let mut factorial = 1.0;
    for j in 0..s {
        if j > 0 {
            factorial *= j as f64;
        }
        left.push(cl[j] * factorial / h.powi(j as i32));
        right.push(cr[j] * factorial / h.powi(j as i32));
    }
    Ok((left, right))
}

/// Discrete surrogate of the encoder T o P^{-1}: recover endpoint jumps from
/// grid data, build the periodicized sample sequence on the dyadic grid of
/// level k+1, and take its discrete Fourier sum.
///
/// The trapezoidal sum over the 2 N_h periodic samples is exact for
/// bandlimited sequences; for smooth u the result converges to b_map(T u) at
/// rate h^2 or better.
pub fn encode_grid(u: &GridFunction, s: usize, m: usize) -> Result<LatentCode, FourierError> {
    let n_h = u.grid.node_count();
    if n_h < 4 * m || n_h < (1 << (s + 1)) {
        return Err(FourierError::GridTooCoarse {
            n_h,
            need_m: 4 * m,
            need_s: 1 << (s + 1),
        });
    }
    let (left, right) = endpoint_derivatives(u, s)?;
    let basis = build_hermite_basis(s)?;
    let mut correction = Poly(vec![0.0]);
    for j in 0..s {
        correction = correction.add(&basis.p[j].sub(&basis.q[j]).scale(right[j] - left[j]));
    }

    // Samples of f~ at t_i = i / (2 N_h), i = 1..2N_h. The first half is
    // u + p_f on the original nodes, the second half is u itself.
    let big_n = 2 * n_h;
    let mut samples = Vec::with_capacity(big_n);
    for (j, &v) in u.values.iter().enumerate() {
        samples.push(v + correction.eval(u.grid.node(j + 1)));
    }
    samples.extend_from_slice(&u.values);

    let mut z = vec![Complex64::new(0.0, 0.0); 2 * m + 1];
    let scale = 1.0 / big_n as f64;
    for (i, &g) in samples.iter().enumerate() {
        let t = (i + 1) as f64 * scale;
        for (idx, zk) in z.iter_mut().enumerate() {
            let k = idx as f64 - m as f64;
            *zk += Complex64::from_polar(g * scale, -2.0 * PI * k * t);
        }
    }
    b_map(&Spectrum { z })
}

/// Endpoint derivative values (orders 0..s-1, identical at both ends by
/// periodicity) of the trigonometric polynomial
/// a0 + sum_k (a_k cos(2 pi k x) + b_k sin(2 pi k x)).
pub fn trig_poly_endpoint_derivatives(a0: f64, cos: &[f64], sin: &[f64], s: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(s);
    for order in 0..s {
        let mut v = if order == 0 { a0 } else { 0.0 };
        for (k, (&a, &b)) in cos.iter().zip(sin).enumerate() {
            let w = 2.0 * PI * (k + 1) as f64;
            // Differentiation rotates (a, b) -> (w b, -w a).
            let (mut ca, mut cb) = (a, b);
            for _ in 0..order {
                let (na, nb) = (w * cb, -w * ca);
                ca = na;
                cb = nb;
            }
            v += ca; // at integer x: cos term is 1, sin term is 0
        }
        out.push(v);
    }
    out
}

/// H^s energy norm of a trigonometric polynomial
/// a0 + sum_k (a_k cos(2 pi k x) + b_k sin(2 pi k x)), in closed form.
pub fn trig_poly_hs_norm(a0: f64, cos_coeffs: &[f64], sin_coeffs: &[f64], s: usize) -> f64 {
    let mut total = a0 * a0;
    for k in 1..=cos_coeffs.len().max(sin_coeffs.len()) {
        let a = cos_coeffs.get(k - 1).copied().unwrap_or(0.0);
        let b = sin_coeffs.get(k - 1).copied().unwrap_or(0.0);
        let omega = 2.0 * PI * k as f64;
        let mut deriv_sum = 0.0;
        let mut pw = 1.0;
        for _ in 0..=s {
            deriv_sum += pw;
            pw *= omega * omega;
        }
        total += 0.5 * (a * a + b * b) * deriv_sum;
    }
    total.sqrt()
}

/// H^s energy norm of a polynomial on (0,1), via exact coefficient integrals.
pub fn poly_hs_norm(p: &Poly, s: usize) -> f64 {
    let mut total = 0.0;
    let mut current = p.clone();
    for _ in 0..=s {
        total += current.l2_norm().powi(2);
        let next: Vec<f64> = current
            .0
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, c)| c * i as f64)
            .collect();
        current = Poly(next);
    }
    total.sqrt()
}
