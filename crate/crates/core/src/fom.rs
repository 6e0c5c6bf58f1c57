//! Full order model for the 1D affine parametric diffusion equation
//!
//!   -(a_mu(x) u')' = F(x)  on (0,1),   u(0) = u(1) = 0,
//!   a_mu(x) = a0(x) + sum_j mu_j psi_j(x),   mu in [-1,1]^p,
//!
//! together with the analytic condition checkers (uniform ellipticity,
//! Bernstein budget, anisotropy radii), parameter sampling, and discrete
//! Sobolev norms.

use crate::linalg::{stable_hash_hex, thomas_solve};
use crate::quad::gauss_legendre;
use crate::rng::Stream;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of points of the audit grid used for essential sup/inf estimates.
pub const AUDIT_POINTS: usize = (1 << 12) + 1;

#[derive(Debug, Error)]
pub enum FomError {
    #[error("dyadic level k = {k} outside the supported range 1..=30")]
    InvalidLevel { k: u32 },
    #[error("diffusion coefficient is not positive at x = {x} (value {value})")]
    NonElliptic { x: f64, value: f64 },
    #[error("tridiagonal solve failed: zero pivot")]
    SingularSystem,
    #[error("rho entries must exceed 1 (got {value})")]
    InvalidRho { value: f64 },
    #[error("ellipticity margin r = {r} must exceed the Bernstein budget xi = {xi}")]
    MarginViolation { r: f64, xi: f64 },
    #[error("smoothness index {s} is not supported here (max 2)")]
    UnsupportedSmoothness { s: usize },
    #[error("grid with {n_h} nodes is too coarse: {need}")]
    GridTooCoarse { n_h: usize, need: String },
    #[error("parameter entry {value} lies outside [-1, 1]")]
    ParamOutOfRange { value: f64 },
    #[error("parameter dimension mismatch: problem has p = {expected}, point has {got}")]
    ParamDimension { expected: usize, got: usize },
    #[error("invalid coefficient table: {0}")]
    BadTable(String),
    #[error("cannot parse coefficient spec {spec:?}: {reason}")]
    BadCoefficientSpec { spec: String, reason: String },
}

/// Equispaced dyadic grid: nodes x_j = j * 2^-k for j = 1..2^k.
///
/// The origin is not a node but x = 1 is; with this convention the decoder's
/// evaluation points (x_j + 1)/2 land on the uniform dyadic grid of level
/// k + 1, which the convolutional synthesis relies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    k: u32,
}

impl Grid {
    pub fn new(k: u32) -> Result<Self, FomError> {
        if k < 1 || k > 30 {
            return Err(FomError::InvalidLevel { k });
        }
        Ok(Grid { k })
    }

    pub fn level(&self) -> u32 {
        self.k
    }

    /// Stepsize h = 2^-k, exactly representable.
    pub fn h(&self) -> f64 {
        0.5_f64.powi(self.k as i32)
    }

    /// Node count N_h = 2^k.
    pub fn node_count(&self) -> usize {
        1usize << self.k
    }

    /// Node x_j for 1-based j in 1..=N_h.
    pub fn node(&self, j: usize) -> f64 {
        debug_assert!(j >= 1 && j <= self.node_count());
        j as f64 * self.h()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (1..=self.node_count()).map(|j| self.node(j)).collect()
    }
}

/// A coefficient function on [0,1]: a named built-in family or a tabulation
/// with linear interpolation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coefficient {
    Constant {
        value: f64,
    },
    /// amplitude * sin(mode * pi * x)
    Sine {
        amplitude: f64,
        mode: u32,
    },
    /// amplitude * cos(mode * pi * x)
    Cosine {
        amplitude: f64,
        mode: u32,
    },
    /// Monomial coefficients, low degree first.
    Polynomial {
        coeffs: Vec<f64>,
    },
    /// Tabulated on an increasing abscissa; evaluated by linear interpolation
    /// and clamped outside the table range.
    Table {
        x: Vec<f64>,
        y: Vec<f64>,
    },
}

impl Coefficient {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Coefficient::Constant { value } => *value,
            Coefficient::Sine { amplitude, mode } => {
                amplitude * (*mode as f64 * std::f64::consts::PI * x).sin()
            }
            Coefficient::Cosine { amplitude, mode } => {
                amplitude * (*mode as f64 * std::f64::consts::PI * x).cos()
            }
            Coefficient::Polynomial { coeffs } => {
                coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
            }
            Coefficient::Table { x: xs, y: ys } => {
                if xs.is_empty() {
                    return 0.0;
                }
                if x <= xs[0] {
                    return ys[0];
                }
                if x >= xs[xs.len() - 1] {
                    return ys[ys.len() - 1];
                }
                let idx = xs.partition_point(|&t| t <= x) - 1;
                let (x0, x1) = (xs[idx], xs[idx + 1]);
                let t = (x - x0) / (x1 - x0);
                ys[idx] * (1.0 - t) + ys[idx + 1] * t
            }
        }
    }

    /// Build a tabulation from CSV text with a header row and two columns
    /// `x,value`.
    pub fn from_csv_text(text: &str) -> Result<Self, FomError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| FomError::BadTable("empty file".into()))?;
        if header
            .split(',')
            .next()
            .map(|c| c.trim().parse::<f64>().is_ok())
            .unwrap_or(false)
        {
            return Err(FomError::BadTable(
                "header row required (first line looks numeric)".into(),
            ));
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let mut cols = line.split(',');
            let x: f64 = cols
                .next()
                .and_then(|c| c.trim().parse().ok())
                .ok_or_else(|| FomError::BadTable(format!("bad x on data row {}", lineno + 1)))?;
            let y: f64 = cols
                .next()
                .and_then(|c| c.trim().parse().ok())
                .ok_or_else(|| {
                    FomError::BadTable(format!("bad value on data row {}", lineno + 1))
                })?;
            xs.push(x);
            ys.push(y);
        }
        if xs.len() < 2 {
            return Err(FomError::BadTable("need at least two data rows".into()));
        }
        if !xs.windows(2).all(|w| w[0] < w[1]) {
            return Err(FomError::BadTable("x column must be increasing".into()));
        }
        Ok(Coefficient::Table { x: xs, y: ys })
    }

    /// Parse the compact string form used by configuration files:
    /// `constant:V`, `sin:AMP:MODE`, `cos:AMP:MODE`, `poly:C0,C1,...`.
    pub fn parse_spec(spec: &str) -> Result<Self, FomError> {
        let err = |reason: &str| FomError::BadCoefficientSpec {
            spec: spec.to_string(),
            reason: reason.to_string(),
        };
        let mut parts = spec.split(':');
        let kind = parts.next().unwrap_or("");
        match kind {
            "constant" => {
                let v: f64 = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err("expected constant:VALUE"))?;
                Ok(Coefficient::Constant { value: v })
            }
            "sin" | "cos" => {
                let amplitude: f64 = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err("expected AMP"))?;
                let mode: u32 = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err("expected MODE"))?;
                Ok(if kind == "sin" {
                    Coefficient::Sine { amplitude, mode }
                } else {
                    Coefficient::Cosine { amplitude, mode }
                })
            }
            "poly" => {
                let coeffs: Result<Vec<f64>, _> = parts
                    .next()
                    .ok_or_else(|| err("expected coefficient list"))?
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect();
                Ok(Coefficient::Polynomial {
                    coeffs: coeffs.map_err(|_| err("bad coefficient list"))?,
                })
            }
            _ => Err(err("unknown kind (constant | sin | cos | poly)")),
        }
    }
}

/// The affine parametric diffusion problem of the workbench.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionProblem {
    pub a0: Coefficient,
    pub psis: Vec<Coefficient>,
    pub forcing: Coefficient,
    /// Ellipticity margin r > 0.
    pub r: f64,
    /// Bernstein budget xi >= 0.
    pub xi: f64,
    /// Anisotropy rate gamma > 0.
    pub gamma: f64,
    /// Anisotropy slack eps > 0.
    pub eps: f64,
}

impl DiffusionProblem {
    pub fn param_dim(&self) -> usize {
        self.psis.len()
    }

    pub fn diffusion_at(&self, x: f64, mu: &[f64]) -> f64 {
        let mut a = self.a0.eval(x);
        for (psi, m) in self.psis.iter().zip(mu) {
            a += m * psi.eval(x);
        }
        a
    }

    /// Stable fingerprint of the problem definition for artifact metadata.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("problem serializes");
        stable_hash_hex(json.as_bytes())
    }
}

/// A point of the parameter space [-1,1]^p.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint(Vec<f64>);

impl ParamPoint {
    pub fn new(mu: Vec<f64>) -> Result<Self, FomError> {
        for &v in &mu {
            if !(-1.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(FomError::ParamOutOfRange { value: v });
            }
        }
        Ok(ParamPoint(mu))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Values of a function on the nodes of a [`Grid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, FomError> {
        if values.len() != grid.node_count() {
            return Err(FomError::GridTooCoarse {
                n_h: grid.node_count(),
                need: format!("values length {} != node count", values.len()),
            });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(FomError::BadTable("non-finite grid value".into()));
        }
        Ok(GridFunction { grid, values })
    }

    /// Sample an arbitrary function on the grid nodes.
    pub fn sample<F: Fn(f64) -> f64>(grid: Grid, f: F) -> Self {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        GridFunction { grid, values }
    }
}

fn audit_grid() -> impl Iterator<Item = f64> {
    (0..AUDIT_POINTS).map(|i| i as f64 / (AUDIT_POINTS - 1) as f64)
}

/// Sup norm on the audit grid (an approximation of the essential sup).
pub fn sup_norm_audit(c: &Coefficient) -> f64 {
    audit_grid().fold(0.0, |m, x| m.max(c.eval(x).abs()))
}

/// Outcome of a pure condition check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub ok: bool,
    /// For ellipticity: min over the audit grid of a0 - r - sum |psi_k|.
    /// For the Bernstein check: xi - sum_k ((rho_k + 1/rho_k)/2 - 1)||psi_k||.
    pub margin: f64,
}

/// Uniform ellipticity check: sum_k |psi_k(x)| <= a0(x) - r on the audit grid.
pub fn check_uniform_ellipticity(problem: &DiffusionProblem) -> CheckOutcome {
    let mut min_margin = f64::INFINITY;
    for x in audit_grid() {
        let mut m = problem.a0.eval(x) - problem.r;
        for psi in &problem.psis {
            m -= psi.eval(x).abs();
        }
        min_margin = min_margin.min(m);
    }
    CheckOutcome {
        ok: min_margin >= 0.0,
        margin: min_margin,
    }
}

/// Bernstein budget check: sum_k ((rho_k + rho_k^-1)/2 - 1) ||psi_k||_inf <= xi.
pub fn check_bernstein_condition(
    problem: &DiffusionProblem,
    rho: &[f64],
) -> Result<CheckOutcome, FomError> {
    if rho.len() != problem.param_dim() {
        return Err(FomError::ParamDimension {
            expected: problem.param_dim(),
            got: rho.len(),
        });
    }
    for &r in rho {
        if !(r > 1.0) {
            return Err(FomError::InvalidRho { value: r });
        }
    }
    let mut sum = 0.0;
    for (psi, &r) in problem.psis.iter().zip(rho) {
        sum += ((r + 1.0 / r) / 2.0 - 1.0) * sup_norm_audit(psi);
    }
    Ok(CheckOutcome {
        ok: sum <= problem.xi,
        margin: problem.xi - sum,
    })
}

/// The smallest isotropic rho = (rho*, ..., rho*) satisfying the anisotropy
/// condition p! (log rho*)^p >= gamma^p (p+1)^p (1+eps)^-1, i.e.
///
///   log rho* = gamma (p+1) (1+eps)^{-1/p} / (p!)^{1/p}.
pub fn isotropic_rho(gamma: f64, eps: f64, p: usize) -> Vec<f64> {
    assert!(gamma > 0.0 && eps >= 0.0 && p >= 1);
    let pf = p as f64;
    let ln_factorial: f64 = (1..=p).map(|i| (i as f64).ln()).sum();
    let log_rho = gamma * (pf + 1.0) * (-((1.0 + eps).ln()) / pf).exp() / (ln_factorial / pf).exp();
    vec![log_rho.exp(); p]
}

/// Relative residual of the anisotropy condition for an isotropic rho:
/// p! (log rho)^p / (gamma^p (p+1)^p (1+eps)^-1) - 1, evaluated in logs so
/// large p cannot overflow.
pub fn isotropic_rho_residual(gamma: f64, eps: f64, p: usize, rho: f64) -> f64 {
    let pf = p as f64;
    let ln_factorial: f64 = (1..=p).map(|i| (i as f64).ln()).sum();
    let log_lhs = ln_factorial + pf * rho.ln().ln();
    let log_rhs = pf * gamma.ln() + pf * (pf + 1.0).ln() - (1.0 + eps).ln();
    (log_lhs - log_rhs).exp() - 1.0
}

/// Finite element solve of the parametric diffusion problem.
///
/// Piecewise-linear elements on the uniform mesh of width h with homogeneous
/// Dirichlet conditions; stiffness and load integrals use 3-point Gauss
/// quadrature per element. Returns nodal values on the grid (the value at
/// x = 1 is exactly zero).
pub fn solve_fom(
    problem: &DiffusionProblem,
    mu: &ParamPoint,
    grid: Grid,
) -> Result<GridFunction, FomError> {
    if mu.dim() != problem.param_dim() {
        return Err(FomError::ParamDimension {
            expected: problem.param_dim(),
            got: mu.dim(),
        });
    }
    let n_h = grid.node_count();
    let h = grid.h();
    let n_int = n_h - 1; // unknowns at x_1 .. x_{N_h - 1}
    let (gl_nodes, gl_weights) = gauss_legendre(3);

    // Element e spans [e*h, (e+1)*h] for e = 0..N_h. Basis gradients are
    // +-1/h, so the element stiffness entry is (int a_mu) / h^2 in magnitude.
    let mut diag = vec![0.0; n_int];
    let mut off = vec![0.0; n_int]; // off[i] couples unknowns i and i+1
    let mut rhs = vec![0.0; n_int];
    for e in 0..n_h {
        let x_left = e as f64 * h;
        let mid = x_left + 0.5 * h;
        let half = 0.5 * h;
        let mut a_int = 0.0;
        let mut load_left = 0.0;
        let mut load_right = 0.0;
        for (&t, &w) in gl_nodes.iter().zip(&gl_weights) {
            let x = mid + half * t;
            let a = problem.diffusion_at(x, mu.coords());
            if a <= 0.0 {
                return Err(FomError::NonElliptic { x, value: a });
            }
            a_int += w * a * half;
            let f = problem.forcing.eval(x);
            let s = (x - x_left) / h; // local coordinate in [0,1]
            load_left += w * f * (1.0 - s) * half;
            load_right += w * f * s * half;
        }
        let k_elem = a_int / (h * h);
        // Global node indices of this element are e and e+1 (0 = boundary x=0,
        // N_h = boundary x=1); unknown index = node index - 1.
        if e >= 1 {
            diag[e - 1] += k_elem;
            rhs[e - 1] += load_left;
        }
        if e + 1 <= n_int {
            diag[e] += k_elem;
            rhs[e] += load_right;
        }
        if e >= 1 && e + 1 <= n_int {
            off[e - 1] -= k_elem;
        }
    }

    let sub: Vec<f64> = std::iter::once(0.0)
        .chain(off.iter().take(n_int - 1).copied())
        .collect();
    let mut sup = off;
    sup[n_int - 1] = 0.0;
    let interior = thomas_solve(&sub, &diag, &sup, &rhs).ok_or(FomError::SingularSystem)?;

    let mut values = interior;
    values.push(0.0); // boundary node x_{N_h} = 1
    GridFunction::new(grid, values)
}

/// H^{-1} norm of the forcing term, computed as the H^1_0 energy norm of the
/// auxiliary Poisson solution -w'' = F on a mesh 8x finer than `grid`.
pub fn forcing_h_minus_one_norm(problem: &DiffusionProblem, grid: Grid) -> Result<f64, FomError> {
    let fine = Grid::new((grid.level() + 3).min(30))?;
    let aux = DiffusionProblem {
        a0: Coefficient::Constant { value: 1.0 },
        psis: vec![],
        forcing: problem.forcing.clone(),
        r: 0.5,
        xi: 0.0,
        gamma: 1.0,
        eps: 1.0,
    };
    let w = solve_fom(&aux, &ParamPoint::new(vec![])?, fine)?;
    // |w|_{H^1_0}^2 for a P1 function is exactly sum_e h * slope_e^2.
    let h = fine.h();
    let mut prev = 0.0;
    let mut energy = 0.0;
    for &v in &w.values {
        let slope = (v - prev) / h;
        energy += h * slope * slope;
        prev = v;
    }
    Ok(energy.sqrt())
}

/// Upper bound sqrt(1 + 1/pi^2) ||F||_{H^-1} / (r - xi) on the sup of
/// ||u_mu||_{H^1} over the polyellipse.
pub fn linf_solution_bound(problem: &DiffusionProblem, grid: Grid) -> Result<f64, FomError> {
    if problem.r <= problem.xi {
        return Err(FomError::MarginViolation {
            r: problem.r,
            xi: problem.xi,
        });
    }
    let f_norm = forcing_h_minus_one_norm(problem, grid)?;
    let pi = std::f64::consts::PI;
    Ok((1.0 + 1.0 / (pi * pi)).sqrt() * f_norm / (problem.r - problem.xi))
}

/// N i.i.d. uniform draws from [-1,1]^p.
///
/// The stream is the documented counter-based generator of [`crate::rng`];
/// the j-th coordinate of the i-th point uses counter i*p + j, so the output
/// is a pure function of (p, n, seed).
pub fn sample_params(p: usize, n: usize, seed: u64) -> Vec<ParamPoint> {
    let mut stream = Stream::new(seed);
    (0..n)
        .map(|_| {
            let mu: Vec<f64> = (0..p).map(|_| stream.next_symmetric()).collect();
            ParamPoint(mu)
        })
        .collect()
}

/// A non-parametric problem with variable diffusion a(x) = 1 + x/2 whose
/// exact solution is u(x) = sin(pi x); the matching forcing term is
/// tabulated on a fine grid. Constant-coefficient problems are nodally
/// superconvergent for P1 elements, so convergence-order audits use this one.
pub fn manufactured_variable_problem() -> DiffusionProblem {
    let pi = std::f64::consts::PI;
    let n_tab = 1 << 15;
    let xs: Vec<f64> = (0..=n_tab).map(|i| i as f64 / n_tab as f64).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| (1.0 + 0.5 * x) * pi * pi * (pi * x).sin() - 0.5 * pi * (pi * x).cos())
        .collect();
    DiffusionProblem {
        a0: Coefficient::Polynomial {
            coeffs: vec![1.0, 0.5],
        },
        psis: vec![],
        forcing: Coefficient::Table { x: xs, y: ys },
        r: 0.5,
        xi: 0.1,
        gamma: 0.5,
        eps: 0.5,
    }
}

/// Trapezoidal approximation of the H^s energy norm
/// sqrt(sum_{d=0}^{s} int |u^(d)|^2) from grid samples.
///
/// The grid excludes x = 0, so a virtual node value is extrapolated there
/// (quadratically when enough nodes exist); derivatives use centered
/// differences with one-sided stencils at the ends. Supported for s <= 2;
/// higher discrete derivative orders are not trusted at these resolutions.
pub fn discrete_hs_norm(u: &GridFunction, s: usize) -> Result<f64, FomError> {
    if s > 2 {
        return Err(FomError::UnsupportedSmoothness { s });
    }
    let n_h = u.grid.node_count();
    if n_h < (1 << (s + 1)) {
        return Err(FomError::GridTooCoarse {
            n_h,
            need: format!("need at least 2^{} nodes for s = {s}", s + 1),
        });
    }
    let h = u.grid.h();
    // Extended samples on 0, h, ..., 1.
    let mut f = Vec::with_capacity(n_h + 1);
    let v = &u.values;
    let v0 = if v.len() >= 3 {
        3.0 * v[0] - 3.0 * v[1] + v[2]
    } else {
        2.0 * v[0] - v[1]
    };
    f.push(v0);
    f.extend_from_slice(v);

    let trapezoid = |g: &[f64]| -> f64 {
        let inner: f64 = g[1..g.len() - 1].iter().map(|x| x * x).sum();
        h * (0.5 * g[0] * g[0] + inner + 0.5 * g[g.len() - 1] * g[g.len() - 1])
    };

    let mut total = trapezoid(&f);
    let mut current = f;
    for _ in 1..=s {
        let n = current.len();
        let mut d = vec![0.0; n];
        d[0] = (-3.0 * current[0] + 4.0 * current[1] - current[2]) / (2.0 * h);
        for i in 1..n - 1 {
            d[i] = (current[i + 1] - current[i - 1]) / (2.0 * h);
        }
        d[n - 1] = (3.0 * current[n - 1] - 4.0 * current[n - 2] + current[n - 3]) / (2.0 * h);
        total += trapezoid(&d);
        current = d;
    }
    Ok(total.sqrt())
}
