//! Transfer operators mapping observed functions to conditional-mean
//! functions.
//!
//! A transfer operator `M` is a bounded linear map with `M Y = E(X|Y)`; it
//! carries approximation rates for `Y` over to the conditional covariance of
//! `X`. Each worked model has a closed-form or grid-matrix realization:
//!
//! * restriction of Brownian motion to `[1/2,1]`:
//!   `(Mv)(s) = 2 v(1/2) s` on `[0,1/2]` and `v(s)` beyond,
//! * the same observation through a constant offset of variance `s2`:
//!   `(Mv)(s) = v(1/2) s / (1/2 + s2)` on `[0,1/2]` and
//!   `v(s) - s2 v(1/2) / (1/2 + s2)` beyond,
//! * invertible observations `Y = LX`: `M = L^-1`,
//! * general grid observations: the minimum-norm right inverse of `L` in the
//!   geometry induced by the covariance of `X` (a weighted Moore-Penrose
//!   inverse),
//! * eigenbasis truncations: coefficients embed back along the basis.
//!
//! Not every conditional-mean map extends to a bounded operator between the
//! ambient sup-norm spaces. Observing a continuously differentiable field
//! through the embedding into continuous functions is the standard
//! counterexample: the inverse is unbounded in the sup norms, and the
//! conditional-mean map blows up with it. In such cases one can renorm the
//! target space to recover an isometric extension, at the price of changing
//! which space the conditional covariance acts on. This module only ships
//! operators whose extensions are bounded as stated; the norm bound each
//! variant carries is the certificate.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernel::GramMatrix;
use crate::linalg;
use crate::model::JointGaussianModel;

/// Feasibility tolerance for the minimum-norm solve: `|L(Mv) - v|` must stay
/// below this multiple of the data scale.
const PENROSE_FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
enum Realization {
    /// Closed-form restriction branches; `half` is the index of `1/2` in the
    /// observation coordinates and `x_to_y[i]` locates grid-x points beyond
    /// `1/2` among them.
    Restriction {
        noise_variance: f64,
        half: usize,
        x_to_y: Vec<Option<usize>>,
        x_points: Vec<f64>,
    },
    /// Dense matrix applied by multiplication.
    Matrix { matrix: DMatrix<f64>, check_feasibility: Option<DMatrix<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferVariant {
    RestrictionBm,
    NoisyRestrictionBm,
    InverseMap,
    MoorePenroseGrid,
    EigenTruncation,
}

/// A concrete transfer operator between grid functions.
#[derive(Debug, Clone)]
pub struct TransferOperator {
    variant: TransferVariant,
    realization: Realization,
    norm_bound: f64,
    input_len: usize,
    output_len: usize,
}

/// Residuals of the defining identities of a Moore-Penrose inverse, as
/// max-abs numbers. The symmetry residuals are taken in the whitened
/// coordinates in which the weighted geometries become Euclidean.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct PenroseReport {
    pub lml: f64,
    pub mlm: f64,
    pub lm_symmetry: f64,
    pub ml_symmetry: f64,
}

impl PenroseReport {
    pub fn max(&self) -> f64 {
        self.lml.max(self.mlm).max(self.lm_symmetry).max(self.ml_symmetry)
    }
}

impl TransferOperator {
    /// Restriction of Brownian motion: exact conditional-mean extension.
    pub fn restriction_bm(grid_x: &Grid, y_points: &[f64]) -> Result<Self> {
        Self::restriction(0.0, grid_x, y_points)
    }

    /// Restriction observed through an independent constant offset of
    /// variance `noise_variance`.
    pub fn noisy_restriction_bm(
        noise_variance: f64,
        grid_x: &Grid,
        y_points: &[f64],
    ) -> Result<Self> {
        if !(noise_variance > 0.0) {
            return Err(Error::domain(format!(
                "noisy restriction needs a positive noise variance, got {noise_variance}"
            )));
        }
        Self::restriction(noise_variance, grid_x, y_points)
    }

    fn restriction(noise_variance: f64, grid_x: &Grid, y_points: &[f64]) -> Result<Self> {
        let span = (y_points[y_points.len() - 1] - y_points[0]).abs().max(1.0);
        let tol = 1e-9 * span;
        let half = y_points
            .iter()
            .position(|&p| (p - 0.5).abs() <= tol)
            .ok_or_else(|| {
                Error::config("restriction transfer needs the point 1/2 in the observation grid")
            })?;
        let mut x_to_y = Vec::with_capacity(grid_x.len());
        for &s in grid_x.points() {
            if s <= 0.5 + tol {
                x_to_y.push(None);
            } else {
                let j = y_points.iter().position(|&p| (p - s).abs() <= tol).ok_or_else(
                    || {
                        Error::config(format!(
                            "grid point {s} beyond 1/2 has no matching observation coordinate"
                        ))
                    },
                )?;
                x_to_y.push(Some(j));
            }
        }
        let norm_bound = if noise_variance == 0.0 {
            1.0
        } else {
            1.0 + noise_variance / (0.5 + noise_variance)
        };
        Ok(TransferOperator {
            variant: if noise_variance == 0.0 {
                TransferVariant::RestrictionBm
            } else {
                TransferVariant::NoisyRestrictionBm
            },
            realization: Realization::Restriction {
                noise_variance,
                half,
                x_to_y,
                x_points: grid_x.points().to_vec(),
            },
            norm_bound,
            input_len: y_points.len(),
            output_len: grid_x.len(),
        })
    }

    /// `M = L^-1` for an invertible observation matrix.
    pub fn inverse_map(map: &DMatrix<f64>) -> Result<Self> {
        let inv = linalg::checked_inverse(map)?;
        let norm_bound = linalg::row_sum_norm(&inv);
        Ok(TransferOperator {
            variant: TransferVariant::InverseMap,
            input_len: inv.ncols(),
            output_len: inv.nrows(),
            realization: Realization::Matrix { matrix: inv, check_feasibility: None },
            norm_bound,
        })
    }

    /// Minimum-norm right inverse of `observation` in the geometry of
    /// `gram_x`: whitening with the Cholesky factor `R` of `gram_x` turns the
    /// weighted minimization into an ordinary least-norm problem, so
    /// `M = R (L R)^+`.
    pub fn moore_penrose_grid(observation: &DMatrix<f64>, gram_x: &GramMatrix) -> Result<Self> {
        if observation.ncols() != gram_x.size() {
            return Err(Error::domain(format!(
                "observation matrix has {} columns but the Gram matrix is {}x{}",
                observation.ncols(),
                gram_x.size(),
                gram_x.size()
            )));
        }
        let r = gram_x.cholesky().l();
        let whitened = observation * &r;
        let matrix = &r * linalg::pinv(&whitened, linalg::PINV_CUTOFF_REL);
        let norm_bound = linalg::row_sum_norm(&matrix);
        Ok(TransferOperator {
            variant: TransferVariant::MoorePenroseGrid,
            input_len: observation.nrows(),
            output_len: observation.ncols(),
            realization: Realization::Matrix {
                matrix,
                check_feasibility: Some(observation.clone()),
            },
            norm_bound,
        })
    }

    /// Coefficient embedding `M w = sum_j w_j phi_j` for an eigenbasis model.
    pub fn eigen_truncation(basis_columns: DMatrix<f64>) -> Result<Self> {
        if basis_columns.ncols() == 0 {
            return Err(Error::domain("eigen truncation needs at least one column"));
        }
        let norm_bound = linalg::row_sum_norm(&basis_columns);
        Ok(TransferOperator {
            variant: TransferVariant::EigenTruncation,
            input_len: basis_columns.ncols(),
            output_len: basis_columns.nrows(),
            realization: Realization::Matrix { matrix: basis_columns, check_feasibility: None },
            norm_bound,
        })
    }

    /// The exact transfer operator for one of the worked models.
    pub fn for_model(model: &JointGaussianModel) -> Result<Self> {
        if let Some(map) = model.observation_map() {
            return Self::inverse_map(map);
        }
        if let Some(noise) = model.noise_variance() {
            return if noise == 0.0 {
                Self::restriction_bm(model.grid_x(), model.y_points())
            } else {
                Self::noisy_restriction_bm(noise, model.grid_x(), model.y_points())
            };
        }
        // eigenbasis model: columns phi_j(s_i) for the kept indices, read off
        // the cross block through k_xy(s, j) = lambda_j phi_j(s)
        let nx = model.nx();
        let m = model.ny();
        let basis = DMatrix::from_fn(nx, m, |i, j| model.k_xy_at(i, j) / model.k_yy_at(j, j));
        Self::eigen_truncation(basis)
    }

    pub fn variant(&self) -> TransferVariant {
        self.variant
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn output_len(&self) -> usize {
        self.output_len
    }

    /// Apply the operator to values of a function on the observation
    /// coordinates, producing values on the target grid.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.input_len {
            return Err(Error::domain(format!(
                "expected {} input values, got {}",
                self.input_len,
                v.len()
            )));
        }
        match &self.realization {
            Realization::Restriction { noise_variance, half, x_to_y, x_points } => {
                let v_half = v[*half];
                let s2 = *noise_variance;
                let out = x_points
                    .iter()
                    .zip(x_to_y)
                    .map(|(&s, idx)| match idx {
                        None => {
                            if s2 == 0.0 {
                                2.0 * v_half * s
                            } else {
                                v_half * s / (0.5 + s2)
                            }
                        }
                        Some(j) => {
                            if s2 == 0.0 {
                                v[*j]
                            } else {
                                v[*j] - s2 * v_half / (0.5 + s2)
                            }
                        }
                    })
                    .collect();
                Ok(out)
            }
            Realization::Matrix { matrix, check_feasibility } => {
                let x = nalgebra::DVector::from_column_slice(v);
                let out = matrix * &x;
                if let Some(l) = check_feasibility {
                    let back = l * &out;
                    let scale = x.amax().max(1.0);
                    let infeas = (&back - &x).amax();
                    if infeas > PENROSE_FEASIBILITY_TOL * scale {
                        return Err(Error::numerical(format!(
                            "minimum-norm solve infeasible: |L(Mv) - v| = {infeas:.3e} \
                             exceeds {PENROSE_FEASIBILITY_TOL:.1e} x {scale:.3e}"
                        )));
                    }
                }
                Ok(out.iter().cloned().collect())
            }
        }
    }

    /// Certified upper bound on the sup-norm operator norm: analytic for the
    /// restriction variants, the maximum absolute row sum for matrix
    /// variants (exact for grid operators under the sup norm).
    pub fn operator_norm(&self) -> f64 {
        self.norm_bound
    }

    /// Lower estimate of the operator norm from random sign probes plus the
    /// canonical basis.
    pub fn probe_operator_norm(&self, n_probes: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best: f64 = 0.0;
        let push = |v: &[f64], best: &mut f64| {
            if let Ok(out) = self.apply(v) {
                let norm_in = v.iter().cloned().fold(0.0_f64, |a, b| a.max(b.abs()));
                if norm_in > 0.0 {
                    let norm_out = out.iter().cloned().fold(0.0_f64, |a, b| a.max(b.abs()));
                    *best = best.max(norm_out / norm_in);
                }
            }
        };
        for j in 0..self.input_len {
            let mut e = vec![0.0; self.input_len];
            e[j] = 1.0;
            push(&e, &mut best);
        }
        for _ in 0..n_probes {
            let v: Vec<f64> = (0..self.input_len)
                .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
                .collect();
            push(&v, &mut best);
        }
        best
    }

    /// Residuals of the four defining identities of the weighted
    /// Moore-Penrose inverse. Only available for the minimum-norm variant.
    pub fn penrose_check(&self, gram_x: &GramMatrix) -> Result<PenroseReport> {
        let (matrix, observation) = match &self.realization {
            Realization::Matrix { matrix, check_feasibility: Some(l) } => (matrix, l),
            _ => {
                return Err(Error::domain(
                    "Penrose identities apply to the minimum-norm grid variant only",
                ))
            }
        };
        let l = observation;
        let m = matrix;
        let lml = linalg::max_abs_diff(&(l * m * l), l);
        let mlm = linalg::max_abs_diff(&(m * l * m), m);
        // Whitened products: with B = L R, M = R B^+ the weighted
        // self-adjointness of LM and ML is Euclidean symmetry of B B^+ and
        // B^+ B.
        let r = gram_x.cholesky().l();
        let b = l * &r;
        let b_pinv = linalg::pinv(&b, linalg::PINV_CUTOFF_REL);
        let bb = &b * &b_pinv;
        let bb_t = bb.transpose();
        let lm_symmetry = linalg::max_abs_diff(&bb, &bb_t);
        let pb = &b_pinv * &b;
        let pb_t = pb.transpose();
        let ml_symmetry = linalg::max_abs_diff(&pb, &pb_t);
        Ok(PenroseReport { lml, mlm, lm_symmetry, ml_symmetry })
    }
}
