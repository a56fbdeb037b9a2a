//! Greedy conditioning of Gaussian random variables on 1-D grids.
//!
//! Given a centered, jointly Gaussian pair `(X, Y)` described by covariance
//! kernels on finite grids, this crate selects informative point evaluations
//! of `Y` with the weak P-greedy algorithm, conditions `X` on them, and
//! measures how fast the conditional covariance converges. The convergence
//! statements are transferred from `Y` to `X` through an explicit operator
//! `M` with `M Y = E(X|Y)`, realized in closed form for the worked models
//! (Brownian restriction with and without an observation offset, invertible
//! observations, eigenbasis truncations).
//!
//! Every conditioning result is double-checked: a Cholesky solve, an
//! incremental Newton-basis accumulation, an SVD Schur-complement oracle and
//! a seeded Monte-Carlo estimate all compute the same residual kernels
//! through different routes.
//!
//! The `ggcond` binary drives experiments from JSON configs; see the crate
//! README for the file formats and the `runner` module for the subcommand
//! implementations.

// validation guards use negated comparisons on purpose: `!(x >= 0.0)`
// rejects NaN where `x < 0.0` would let it through
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditioning;
pub mod config;
pub mod error;
pub mod greedy;
pub mod grid;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod rates;
pub mod runner;
pub mod transfer;

pub use conditioning::{
    conditional_cov_via_m, monte_carlo_oracle, posterior_kernel, residual_opnorm, schur_oracle,
    IncrementalPosterior, MonteCarloReport, OperatorNormReport, PosteriorKernel,
};
pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use greedy::{GreedyState, HistoryEntry, Selection, SelectionRule};
pub use grid::Grid;
pub use kernel::{assemble_gram, h1_inner_product, GramMatrix, JitterPolicy, Kernel, KernelFamily};
pub use model::JointGaussianModel;
pub use rates::{DecayCurve, DecayTarget, RateFit};
pub use transfer::{PenroseReport, TransferOperator, TransferVariant};
