//! Posterior covariance kernels and residual operator norms.
//!
//! Conditioning a centered Gaussian pair `(X, Y)` on finitely many point
//! evaluations of `Y` projects the covariance kernel of `X` onto the span of
//! the selected kernel translates. On grids this is Gram-matrix algebra: the
//! conditional covariance is `K_xy,sel (K_yy,sel)^-1 K_xy,sel^T` and the
//! residual kernel is its complement in `K_xx`. The residual is positive
//! semidefinite, so its operator norm over point evaluations is the largest
//! diagonal entry.
//!
//! Three routes compute the same residual and check each other: a Cholesky
//! solve ([`PosteriorKernel`]), an incremental Newton-basis accumulation
//! driven by a greedy trace ([`IncrementalPosterior`]), and an SVD
//! pseudo-inverse dense oracle ([`schur_oracle`]). A seeded Monte-Carlo
//! estimate ([`monte_carlo_oracle`]) provides a statistical cross-check.
//!
//! Everything here is relative to the finite grids: conditioning on "all of
//! `Y`" means all grid coordinates, and statements about continuum
//! observations carry a discretization gap that is not certified by this
//! module.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::greedy::GreedyState;
use crate::kernel::{gram_from_matrix, JitterPolicy};
use crate::linalg;
use crate::model::JointGaussianModel;
use crate::transfer::TransferOperator;

/// Sup of the residual diagonal over the grid: the operator norm of the
/// residual covariance restricted to point evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatorNormReport {
    pub value: f64,
    pub argmax_point: f64,
    pub grid_size: usize,
}

/// The posterior kernel of `X` after conditioning on selected coordinates of
/// `Y`, backed by a Cholesky factorization of the selected block.
#[derive(Debug, Clone)]
pub struct PosteriorKernel {
    model: JointGaussianModel,
    selected: Vec<usize>,
    /// `K_yy[sel,sel]^-1 K_xy[:,sel]^T`, precomputed; empty when nothing is
    /// selected.
    weights: DMatrix<f64>,
    cross: DMatrix<f64>,
    jitter: f64,
}

impl PosteriorKernel {
    pub fn model(&self) -> &JointGaussianModel {
        &self.model
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    /// Jitter applied to factorize the selected block.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Conditional covariance `k_Z(s_i, s_j)` of the posterior mean process.
    pub fn conditional_at(&self, i: usize, j: usize) -> f64 {
        if self.selected.is_empty() {
            return 0.0;
        }
        (self.cross.row(i) * self.weights.column(j))[0]
    }

    /// Residual kernel `k_xx(s_i, s_j) - k_Z(s_i, s_j)`.
    pub fn residual_at(&self, i: usize, j: usize) -> f64 {
        self.model.k_xx_at(i, j) - self.conditional_at(i, j)
    }

    pub fn conditional_matrix(&self) -> DMatrix<f64> {
        if self.selected.is_empty() {
            return DMatrix::zeros(self.model.nx(), self.model.nx());
        }
        let m = &self.cross * &self.weights;
        0.5 * (&m + m.transpose())
    }

    pub fn residual_matrix(&self) -> DMatrix<f64> {
        self.model.k_xx_matrix() - self.conditional_matrix()
    }
}

/// Condition `model`'s `X` on the selected coordinates of `Y`.
pub fn posterior_kernel(model: &JointGaussianModel, selected: &[usize]) -> Result<PosteriorKernel> {
    validate_selection(model, selected)?;
    if selected.is_empty() {
        return Ok(PosteriorKernel {
            model: model.clone(),
            selected: Vec::new(),
            weights: DMatrix::zeros(0, 0),
            cross: DMatrix::zeros(model.nx(), 0),
            jitter: 0.0,
        });
    }
    let m = selected.len();
    let k_sel = DMatrix::from_fn(m, m, |a, b| model.k_yy_at(selected[a], selected[b]));
    let gram = gram_from_matrix(k_sel, JitterPolicy::Escalate)?;
    let cross = DMatrix::from_fn(model.nx(), m, |i, a| model.k_xy_at(i, selected[a]));
    let weights = gram.cholesky().solve(&cross.transpose());
    Ok(PosteriorKernel {
        model: model.clone(),
        selected: selected.to_vec(),
        weights,
        cross,
        jitter: gram.jitter(),
    })
}

/// Operator norm of the posterior residual over the grid.
pub fn residual_opnorm(pk: &PosteriorKernel) -> OperatorNormReport {
    let grid = pk.model().grid_x();
    let mut value = f64::NEG_INFINITY;
    let mut argmax = 0;
    for i in 0..grid.len() {
        let d = pk.residual_at(i, i);
        if d > value {
            value = d;
            argmax = i;
        }
    }
    OperatorNormReport {
        value: value.max(0.0),
        argmax_point: grid.points()[argmax],
        grid_size: grid.len(),
    }
}

/// Operator-norm report for an explicitly given residual matrix.
pub fn opnorm_of_residual(residual: &DMatrix<f64>, points: &[f64]) -> OperatorNormReport {
    let mut value = f64::NEG_INFINITY;
    let mut argmax = 0;
    for i in 0..residual.nrows() {
        let d = residual[(i, i)];
        if d > value {
            value = d;
            argmax = i;
        }
    }
    OperatorNormReport {
        value: value.max(0.0),
        argmax_point: points[argmax],
        grid_size: residual.nrows(),
    }
}

/// Residual kernel computed through the transfer operator:
/// `k_xx - (M k_yy M')`, with `M` applied to each argument of `k_yy`.
pub fn conditional_cov_via_m(
    model: &JointGaussianModel,
    m_op: &TransferOperator,
) -> Result<DMatrix<f64>> {
    if m_op.input_len() != model.ny() || m_op.output_len() != model.nx() {
        return Err(Error::domain(format!(
            "transfer operator maps {} -> {} values but the model has ny = {}, nx = {}",
            m_op.input_len(),
            m_op.output_len(),
            model.ny(),
            model.nx()
        )));
    }
    let k_yy = model.k_yy_matrix();
    let (nx, ny) = (model.nx(), model.ny());
    // apply M to the first argument of k_yy, column by column
    let mut half = DMatrix::zeros(nx, ny);
    for j in 0..ny {
        let col: Vec<f64> = (0..ny).map(|i| k_yy[(i, j)]).collect();
        let mapped = m_op.apply(&col)?;
        for i in 0..nx {
            half[(i, j)] = mapped[i];
        }
    }
    // then to the second argument, row by row
    let mut conditional = DMatrix::zeros(nx, nx);
    for i in 0..nx {
        let row: Vec<f64> = (0..ny).map(|j| half[(i, j)]).collect();
        let mapped = m_op.apply(&row)?;
        for j in 0..nx {
            conditional[(i, j)] = mapped[j];
        }
    }
    let conditional = 0.5 * (&conditional + conditional.transpose());
    Ok(model.k_xx_matrix() - conditional)
}

/// Dense residual oracle: `K_xx - K_xy,sel (K_yy,sel)^+ K_xy,sel^T` with an
/// SVD pseudo-inverse. Independent of the Cholesky and Newton routes.
pub fn schur_oracle(model: &JointGaussianModel, selected: &[usize]) -> Result<DMatrix<f64>> {
    validate_selection(model, selected)?;
    let k_xx = model.k_xx_matrix();
    if selected.is_empty() {
        return Ok(k_xx);
    }
    let m = selected.len();
    let k_sel = DMatrix::from_fn(m, m, |a, b| model.k_yy_at(selected[a], selected[b]));
    let cross = DMatrix::from_fn(model.nx(), m, |i, a| model.k_xy_at(i, selected[a]));
    let inv = linalg::pinv(&k_sel, linalg::PINV_CUTOFF_REL);
    Ok(k_xx - &cross * inv * cross.transpose())
}

fn validate_selection(model: &JointGaussianModel, selected: &[usize]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for &idx in selected {
        if idx >= model.ny() {
            return Err(Error::domain(format!(
                "selected index {idx} out of range for {} observation coordinates",
                model.ny()
            )));
        }
        if !seen.insert(idx) {
            return Err(Error::domain(format!("selected index {idx} is duplicated")));
        }
    }
    Ok(())
}

/// Posterior residuals accumulated incrementally along a greedy trace.
///
/// The greedy state provides the Newton basis on the observation grid; this
/// struct extends each basis column to `grid_x` through the cross covariance
/// and accumulates the conditional kernel as a sum of rank-one terms. After
/// `n` steps the residual equals the one obtained by conditioning on the
/// first `n` selected points.
#[derive(Debug, Clone)]
pub struct IncrementalPosterior {
    model: JointGaussianModel,
    /// Cross Newton columns on `grid_x`, one per consumed step.
    x_columns: Vec<Vec<f64>>,
    conditional: DMatrix<f64>,
}

impl IncrementalPosterior {
    pub fn new(model: &JointGaussianModel) -> Self {
        IncrementalPosterior {
            model: model.clone(),
            x_columns: Vec::new(),
            conditional: DMatrix::zeros(model.nx(), model.nx()),
        }
    }

    /// Number of steps consumed so far.
    pub fn steps(&self) -> usize {
        self.x_columns.len()
    }

    /// Consume the next selection from `greedy`, which must run on the
    /// model's observation coordinates. Returns `false` when the trace is
    /// exhausted.
    pub fn advance(&mut self, greedy: &GreedyState) -> Result<bool> {
        let step = self.x_columns.len();
        if step >= greedy.selected().len() {
            return Ok(false);
        }
        if greedy.candidates().len() != self.model.ny() {
            return Err(Error::domain(format!(
                "greedy trace has {} candidates but the model has {} observation coordinates",
                greedy.candidates().len(),
                self.model.ny()
            )));
        }
        let sel = greedy.selected()[step];
        let p_sel = greedy.selected_power(step);
        if !(p_sel > 0.0) {
            return Err(Error::numerical(format!(
                "cannot extend step {step}: selected power {p_sel} is not positive"
            )));
        }
        let nx = self.model.nx();
        let mut column = Vec::with_capacity(nx);
        for i in 0..nx {
            let mut v = self.model.k_xy_at(i, sel);
            for (j, col) in self.x_columns.iter().enumerate() {
                v -= col[i] * greedy.newton_value(sel, j);
            }
            column.push(v / p_sel);
        }
        for i in 0..nx {
            for j in 0..nx {
                self.conditional[(i, j)] += column[i] * column[j];
            }
        }
        self.x_columns.push(column);
        Ok(true)
    }

    pub fn conditional_matrix(&self) -> &DMatrix<f64> {
        &self.conditional
    }

    pub fn residual_matrix(&self) -> DMatrix<f64> {
        self.model.k_xx_matrix() - &self.conditional
    }
}

/// Empirical residual covariance from joint sampling, with per-entry
/// standard errors.
#[derive(Debug, Clone)]
pub struct MonteCarloReport {
    pub residual: DMatrix<f64>,
    /// Standard error of each empirical entry, derived from the analytic
    /// residual: `sqrt((r_ii r_jj + r_ij^2) / samples)`, with the sampling
    /// jitter folded into the variances.
    pub std_err: DMatrix<f64>,
    pub samples: usize,
}

impl MonteCarloReport {
    /// Fraction of entries whose empirical value is within `k` standard
    /// errors of `reference` (adjusted for the sampling jitter).
    pub fn fraction_within(&self, reference: &DMatrix<f64>, k: f64) -> f64 {
        let n = self.residual.nrows();
        let mut ok = 0usize;
        for i in 0..n {
            for j in 0..n {
                if self.se_multiple(reference, i, j) <= k {
                    ok += 1;
                }
            }
        }
        ok as f64 / (n * n) as f64
    }

    /// How many standard errors the empirical entry `(i, j)` sits away from
    /// the reference, with an absolute floor of 1e-12 on the tolerance.
    pub fn se_multiple(&self, reference: &DMatrix<f64>, i: usize, j: usize) -> f64 {
        let diff = (self.residual[(i, j)] - reference[(i, j)]).abs();
        diff / self.std_err[(i, j)].max(1e-12)
    }
}

/// Estimate the conditional covariance by sampling the joint distribution of
/// `(X, Y_sel)` and regressing `X` on the selected coordinates.
///
/// Raw second moments are used throughout (the model is centered), so the
/// empirical residual is the Schur complement of the empirical moment
/// matrix. Fixed seeds give bitwise-reproducible output.
pub fn monte_carlo_oracle(
    model: &JointGaussianModel,
    selected: &[usize],
    samples: usize,
    seed: u64,
) -> Result<MonteCarloReport> {
    validate_selection(model, selected)?;
    if samples < 1_000 {
        return Err(Error::domain(format!(
            "Monte-Carlo oracle needs at least 1000 samples, got {samples}"
        )));
    }
    let nx = model.nx();
    let m = selected.len();
    let dim = nx + m;
    // covariance of (X, Y_sel)
    let mut cov = DMatrix::zeros(dim, dim);
    cov.view_mut((0, 0), (nx, nx)).copy_from(&model.k_xx_matrix());
    for (a, &ja) in selected.iter().enumerate() {
        for i in 0..nx {
            let v = model.k_xy_at(i, ja);
            cov[(i, nx + a)] = v;
            cov[(nx + a, i)] = v;
        }
        for (b, &jb) in selected.iter().enumerate() {
            cov[(nx + a, nx + b)] = model.k_yy_at(ja, jb);
        }
    }
    // a semidefinite factorization: exact linear dependencies between X and
    // the selected coordinates survive into the samples, so determined
    // entries of the empirical residual vanish by algebra rather than
    // drowning in regularization noise
    let factor = linalg::psd_cholesky(&cov, 1e-12).map_err(|e| {
        Error::numerical(format!("stacked covariance is not factorizable: {e}"))
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = 512usize;
    let mut moments = DMatrix::<f64>::zeros(dim, dim);
    let mut remaining = samples;
    while remaining > 0 {
        let b = batch.min(remaining);
        let z = DMatrix::from_fn(dim, b, |_, _| standard_normal(&mut rng));
        let draws = &factor * z;
        moments.gemm(1.0, &draws, &draws.transpose(), 1.0);
        remaining -= b;
    }
    moments /= samples as f64;

    let sxx = moments.view((0, 0), (nx, nx)).into_owned();
    let residual = if m == 0 {
        sxx
    } else {
        let sxy = moments.view((0, nx), (nx, m)).into_owned();
        let syy = moments.view((nx, nx), (m, m)).into_owned();
        let inv = linalg::pinv(&syy, linalg::PINV_CUTOFF_REL);
        sxx - &sxy * inv * sxy.transpose()
    };

    let analytic = schur_oracle(model, selected)?;
    let std_err = DMatrix::from_fn(nx, nx, |i, j| {
        let vii = analytic[(i, i)].max(0.0);
        let vjj = analytic[(j, j)].max(0.0);
        ((vii * vjj + analytic[(i, j)].powi(2)) / samples as f64).sqrt()
    });
    Ok(MonteCarloReport { residual, std_err, samples })
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller on (0,1] x [0,1)
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
