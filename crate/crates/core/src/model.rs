//! Jointly Gaussian pairs `(X, Y)` on finite grids, described by their
//! covariance blocks.
//!
//! Every model is centered. `X` lives on `grid_x`; the observed variable `Y`
//! lives on a finite set of observation coordinates, which are spatial points
//! for the restriction models and coefficient indices for the eigenbasis
//! model. All conditioning downstream reduces to Gram-matrix algebra on the
//! blocks `K_xx`, `K_xy`, `K_yy`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernel::{Kernel, PSD_TOL_REL};
use crate::linalg;

#[derive(Debug, Clone)]
enum ModelKind {
    /// `X` is Brownian motion on `[0,1]`, `Y` its restriction to `[1/2,1]`
    /// plus an independent constant offset of variance `noise_variance`.
    BrownianRestriction { noise_variance: f64 },
    /// `X` has covariance `sum_i lambda_i phi_i(s) phi_i(t)` for the cosine
    /// family `phi_0 = 1`, `phi_j = sqrt(2) cos(j pi t)`; `Y` collects the
    /// coefficients `<X, e_j>` for the kept indices.
    EigenTruncation {
        eigenvalues: Vec<f64>,
        kept: Vec<usize>,
        /// `basis[(i, j)] = phi_j(s_i)` on `grid_x`.
        basis: DMatrix<f64>,
    },
    /// `Y = L X` for an invertible matrix `L` acting on grid functions.
    InvertibleMap {
        map: DMatrix<f64>,
        k_xx: DMatrix<f64>,
        k_xy: DMatrix<f64>,
        k_yy: DMatrix<f64>,
    },
}

/// A centered, jointly Gaussian pair `(X, Y)` realized on finite grids.
#[derive(Debug, Clone)]
pub struct JointGaussianModel {
    label: String,
    grid_x: Grid,
    y_points: Vec<f64>,
    kind: ModelKind,
}

impl JointGaussianModel {
    /// Brownian motion on `[0,1]` observed on `[1/2,1]`, optionally through a
    /// fully correlated offset of variance `noise_variance`.
    ///
    /// The covariance blocks are `k_xx = min(s,t)`,
    /// `k_yy = noise_variance + min(s,t)` and `k_xy = min(s,t)`; the offset is
    /// independent of `X` and therefore leaves the cross block untouched.
    pub fn brownian_restriction(
        noise_variance: f64,
        grid_x: Grid,
        grid_y: Grid,
    ) -> Result<Self> {
        if !(noise_variance >= 0.0) {
            return Err(Error::domain(format!(
                "noise variance must be nonnegative, got {noise_variance}"
            )));
        }
        let bounds_ok = |g: &Grid, lo: f64, hi: f64| {
            (g.lower() - lo).abs() < 1e-12 && (g.upper() - hi).abs() < 1e-12
        };
        if !bounds_ok(&grid_x, 0.0, 1.0) {
            return Err(Error::domain(format!(
                "grid_x must span [0,1], got [{}, {}]",
                grid_x.lower(),
                grid_x.upper()
            )));
        }
        if !bounds_ok(&grid_y, 0.5, 1.0) {
            return Err(Error::domain(format!(
                "grid_y must span [1/2,1], got [{}, {}]",
                grid_y.lower(),
                grid_y.upper()
            )));
        }
        let label = if noise_variance == 0.0 {
            "brownian_restriction".to_string()
        } else {
            format!("brownian_restriction(noise={noise_variance})")
        };
        let model = JointGaussianModel {
            label,
            grid_x,
            y_points: grid_y.points().to_vec(),
            kind: ModelKind::BrownianRestriction { noise_variance },
        };
        model.check_stacked_psd()?;
        Ok(model)
    }

    /// Hilbert-space model: `X` has the given covariance eigenvalues in a
    /// fixed orthonormal function family; `Y` observes the coefficients
    /// indexed by `kept`.
    ///
    /// The family is `phi_0 = 1`, `phi_j(t) = sqrt(2) cos(j pi t)`,
    /// discretized on `grid`. It is one concrete orthonormal choice; any
    /// other orthonormal family gives an equivalent model, since all
    /// conditioning happens in the coefficient algebra. The observation
    /// coordinates of `Y` are the kept indices themselves.
    pub fn eigen_truncation(
        eigenvalues: Vec<f64>,
        kept: Vec<usize>,
        grid: Grid,
    ) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::domain("eigenvalue list must be nonempty"));
        }
        if eigenvalues.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::domain("all eigenvalues must be positive"));
        }
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::domain("eigenvalues must be sorted descending"));
        }
        if kept.is_empty() {
            return Err(Error::domain("kept index set must be nonempty"));
        }
        let mut sorted = kept.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != kept.len() {
            return Err(Error::domain("kept indices must be distinct"));
        }
        if let Some(&max) = sorted.last() {
            if max >= eigenvalues.len() {
                return Err(Error::domain(format!(
                    "kept index {max} exceeds the {} available eigenvalues",
                    eigenvalues.len()
                )));
            }
        }
        let n = grid.len();
        let m = eigenvalues.len();
        let basis = DMatrix::from_fn(n, m, |i, j| {
            let t = grid.points()[i];
            if j == 0 {
                1.0
            } else {
                std::f64::consts::SQRT_2 * (j as f64 * std::f64::consts::PI * t).cos()
            }
        });
        let y_points = sorted.iter().map(|&j| j as f64).collect();
        let model = JointGaussianModel {
            label: format!("eigen_truncation(kept={}/{m})", sorted.len()),
            grid_x: grid,
            y_points,
            kind: ModelKind::EigenTruncation { eigenvalues, kept: sorted, basis },
        };
        model.check_stacked_psd()?;
        Ok(model)
    }

    /// `Y = L X` for an invertible grid operator `L`, so `K_yy = L K_xx L^T`
    /// and `K_xy = K_xx L^T`.
    pub fn invertible_map(base: &Kernel, grid: Grid, map: DMatrix<f64>) -> Result<Self> {
        let n = grid.len();
        if map.nrows() != n || map.ncols() != n {
            return Err(Error::domain(format!(
                "map is {}x{} but the grid has {n} points",
                map.nrows(),
                map.ncols()
            )));
        }
        let cond = linalg::condition_number(&map);
        if !(cond <= linalg::COND_MAX) {
            return Err(Error::numerical(format!(
                "map condition number {cond:.3e} exceeds {:.1e}",
                linalg::COND_MAX
            )));
        }
        let pts = grid.points();
        let mut k_xx = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = base.eval(pts[i], pts[j])?;
                k_xx[(i, j)] = v;
                k_xx[(j, i)] = v;
            }
        }
        let k_xy = &k_xx * map.transpose();
        let k_yy = &map * &k_xx * map.transpose();
        let k_yy = 0.5 * (&k_yy + k_yy.transpose());
        let model = JointGaussianModel {
            label: "invertible_map".to_string(),
            y_points: pts.to_vec(),
            grid_x: grid,
            kind: ModelKind::InvertibleMap { map, k_xx, k_xy, k_yy },
        };
        model.check_stacked_psd()?;
        Ok(model)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn grid_x(&self) -> &Grid {
        &self.grid_x
    }

    /// Observation coordinates of `Y`: spatial points for restriction models,
    /// coefficient indices (as reals) for the eigenbasis model.
    pub fn y_points(&self) -> &[f64] {
        &self.y_points
    }

    pub fn nx(&self) -> usize {
        self.grid_x.len()
    }

    pub fn ny(&self) -> usize {
        self.y_points.len()
    }

    /// `cov(X(s_i), X(s_j))` by grid index.
    pub fn k_xx_at(&self, i: usize, j: usize) -> f64 {
        match &self.kind {
            ModelKind::BrownianRestriction { .. } => {
                self.grid_x.points()[i].min(self.grid_x.points()[j])
            }
            ModelKind::EigenTruncation { eigenvalues, basis, .. } => eigenvalues
                .iter()
                .enumerate()
                .map(|(k, &l)| l * basis[(i, k)] * basis[(j, k)])
                .sum(),
            ModelKind::InvertibleMap { k_xx, .. } => k_xx[(i, j)],
        }
    }

    /// `cov(X(s_i), Y_j)` by indices.
    pub fn k_xy_at(&self, i: usize, j: usize) -> f64 {
        match &self.kind {
            ModelKind::BrownianRestriction { .. } => {
                self.grid_x.points()[i].min(self.y_points[j])
            }
            ModelKind::EigenTruncation { eigenvalues, kept, basis } => {
                let idx = kept[j];
                eigenvalues[idx] * basis[(i, idx)]
            }
            ModelKind::InvertibleMap { k_xy, .. } => k_xy[(i, j)],
        }
    }

    /// `cov(Y_i, Y_j)` by indices.
    pub fn k_yy_at(&self, i: usize, j: usize) -> f64 {
        match &self.kind {
            ModelKind::BrownianRestriction { noise_variance } => {
                noise_variance + self.y_points[i].min(self.y_points[j])
            }
            ModelKind::EigenTruncation { eigenvalues, kept, .. } => {
                if i == j {
                    eigenvalues[kept[i]]
                } else {
                    0.0
                }
            }
            ModelKind::InvertibleMap { k_yy, .. } => k_yy[(i, j)],
        }
    }

    pub fn k_xx_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.nx(), self.nx(), |i, j| self.k_xx_at(i, j))
    }

    pub fn k_xy_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.nx(), self.ny(), |i, j| self.k_xy_at(i, j))
    }

    pub fn k_yy_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.ny(), self.ny(), |i, j| self.k_yy_at(i, j))
    }

    /// The covariance of the stacked vector `(X, Y)`.
    pub fn stacked_covariance(&self) -> DMatrix<f64> {
        let (nx, ny) = (self.nx(), self.ny());
        let mut s = DMatrix::zeros(nx + ny, nx + ny);
        s.view_mut((0, 0), (nx, nx)).copy_from(&self.k_xx_matrix());
        let k_xy = self.k_xy_matrix();
        s.view_mut((0, nx), (nx, ny)).copy_from(&k_xy);
        s.view_mut((nx, 0), (ny, nx)).copy_from(&k_xy.transpose());
        s.view_mut((nx, nx), (ny, ny)).copy_from(&self.k_yy_matrix());
        s
    }

    /// The kernel of `Y` over its observation coordinates, for driving the
    /// greedy selection.
    pub fn y_kernel(&self) -> Result<Kernel> {
        match &self.kind {
            ModelKind::BrownianRestriction { noise_variance } => {
                let lo = self.y_points[0];
                let hi = *self.y_points.last().unwrap();
                if *noise_variance == 0.0 {
                    Kernel::brownian_min(lo, hi)
                } else {
                    Kernel::shifted_min(noise_variance.sqrt(), lo, hi)
                }
            }
            _ => Kernel::tabulated(self.y_points.clone(), self.k_yy_matrix()),
        }
    }

    /// The observation matrix `L`, for models defined through one.
    pub fn observation_map(&self) -> Option<&DMatrix<f64>> {
        match &self.kind {
            ModelKind::InvertibleMap { map, .. } => Some(map),
            _ => None,
        }
    }

    /// Noise variance of the observation, when the model has one.
    pub fn noise_variance(&self) -> Option<f64> {
        match &self.kind {
            ModelKind::BrownianRestriction { noise_variance } => Some(*noise_variance),
            _ => None,
        }
    }

    /// Observation coordinates of `Y` as a [`Grid`], when there are enough of
    /// them to form one.
    pub fn y_grid(&self) -> Result<Grid> {
        let lo = self.y_points[0];
        let hi = *self.y_points.last().unwrap();
        Grid::new(self.y_points.clone(), lo, hi)
    }

    fn check_stacked_psd(&self) -> Result<()> {
        let s = self.stacked_covariance();
        let max_diag = (0..s.nrows()).map(|i| s[(i, i)]).fold(0.0_f64, f64::max);
        let min_eig = linalg::smallest_eigenvalue(&s);
        if min_eig < -PSD_TOL_REL * max_diag.max(1.0) {
            return Err(Error::numerical(format!(
                "stacked covariance is not positive semidefinite: smallest eigenvalue {min_eig:.6e}"
            )));
        }
        Ok(())
    }
}

/// Lower-triangular cumulative-sum matrix, a convenient invertible test map.
pub fn cumsum_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if j <= i { 1.0 } else { 0.0 })
}
