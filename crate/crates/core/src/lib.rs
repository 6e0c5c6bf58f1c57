//! Workbench for building, training, and verifying convolutional-autoencoder
//! reduced order models of 1D parametric PDEs.
//!
//! The pipeline mirrors the DL-ROM decomposition `Phi = Psi o phi`:
//!
//! * [`fom`] solves the affine parametric diffusion equation with P1 finite
//!   elements and audits the analytic conditions (uniform ellipticity,
//!   Bernstein budget, anisotropy radii) under which the parameter-to-solution
//!   map is well behaved.
//! * [`fourier`] hosts the compression machinery: Hermite two-point
//!   polynomials, signal periodicization, the lifting operator `T` onto
//!   truncated Fourier data, the real reparametrization `B`, and dense
//!   encode/decode oracles.
//! * [`neural`] implements exact layer semantics (standard, 1D convolution,
//!   1D transposed convolution, reshape) with forward evaluation,
//!   depth/size/channel accounting, and reverse-mode gradients.
//! * [`constructor`] builds networks: the bias scheme that converts linear
//!   networks to ReLU networks exactly on a compact set, the convolutional
//!   decoder that reproduces the dense Fourier synthesis, and the sample
//!   budget calculator.
//! * [`training`] generates datasets, trains the reduced network with the
//!   l2,1-regularized loss, optionally distills an encoder network, and
//!   evaluates the resulting surrogate by Monte Carlo.
//! * [`verify`] bundles the invariant suites behind a single runner used by
//!   the command line `verify` stage.

pub mod constructor;
pub mod fom;
pub mod fourier;
pub mod linalg;
pub mod neural;
pub mod quad;
pub mod rng;
pub mod training;
pub mod verify;
