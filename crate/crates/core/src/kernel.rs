//! Covariance kernels on 1-D intervals and their Gram matrices.
//!
//! A kernel here is a symmetric positive-semidefinite bivariate function;
//! restricted to a finite grid it becomes the covariance matrix of the point
//! evaluations of a centered Gaussian random variable. The built-in families
//! are the Brownian-motion kernel `min(s,t)`, its shifted variant
//! `c^2 + min(s,t)` (the covariance of a Brownian path plus an independent
//! constant offset), the Gaussian RBF, and matrices tabulated on a fixed grid.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg;

/// Clamp for tiny negative residuals produced by floating-point cancellation.
pub const NUM_TOL: f64 = 1e-10;

/// Relative positive-semidefiniteness tolerance: a Gram matrix is accepted
/// when its smallest eigenvalue is at least `-PSD_TOL_REL * max_diagonal`.
pub const PSD_TOL_REL: f64 = 1e-9;

/// Diagonal regularization ladder, relative to the largest diagonal entry.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

#[derive(Debug, Clone, PartialEq)]
pub enum KernelFamily {
    /// `k(s,t) = min(s,t)`; requires a nonnegative domain.
    BrownianMin,
    /// `k(s,t) = c^2 + min(s,t)`; requires `c^2 + lower > 0`.
    ShiftedMin { c: f64 },
    /// `k(s,t) = exp(-(s-t)^2 / (2 l^2))`.
    GaussianRbf { lengthscale: f64 },
    /// Values tabulated on a fixed set of points; only grid points are evaluable.
    Tabulated { points: Vec<f64>, values: DMatrix<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    family: KernelFamily,
    lower: f64,
    upper: f64,
}

impl Kernel {
    pub fn brownian_min(lower: f64, upper: f64) -> Result<Self> {
        if lower < 0.0 {
            return Err(Error::domain(format!(
                "min kernel needs a nonnegative domain, got lower = {lower}"
            )));
        }
        Self::with_bounds(KernelFamily::BrownianMin, lower, upper)
    }

    pub fn shifted_min(c: f64, lower: f64, upper: f64) -> Result<Self> {
        if c * c + lower <= 0.0 {
            return Err(Error::domain(format!(
                "shifted min kernel needs c^2 + lower > 0, got c = {c}, lower = {lower}"
            )));
        }
        Self::with_bounds(KernelFamily::ShiftedMin { c }, lower, upper)
    }

    pub fn gaussian_rbf(lengthscale: f64, lower: f64, upper: f64) -> Result<Self> {
        if !(lengthscale > 0.0) {
            return Err(Error::domain(format!(
                "RBF lengthscale must be positive, got {lengthscale}"
            )));
        }
        Self::with_bounds(KernelFamily::GaussianRbf { lengthscale }, lower, upper)
    }

    /// Kernel given by a symmetric matrix of values over `points`.
    pub fn tabulated(points: Vec<f64>, values: DMatrix<f64>) -> Result<Self> {
        let n = points.len();
        if n < 1 {
            return Err(Error::domain("tabulated kernel needs at least one point"));
        }
        if values.nrows() != n || values.ncols() != n {
            return Err(Error::domain(format!(
                "tabulated kernel matrix is {}x{} but there are {} points",
                values.nrows(),
                values.ncols(),
                n
            )));
        }
        for w in points.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::domain(
                    "tabulated kernel points must be strictly increasing",
                ));
            }
        }
        let scale = values.amax().max(1.0);
        let mut sym = values.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let d = (values[(i, j)] - values[(j, i)]).abs();
                if d > 1e-12 * scale {
                    return Err(Error::domain(format!(
                        "tabulated kernel is asymmetric at ({i},{j}): |{} - {}| = {d}",
                        values[(i, j)],
                        values[(j, i)]
                    )));
                }
                let v = 0.5 * (values[(i, j)] + values[(j, i)]);
                sym[(i, j)] = v;
                sym[(j, i)] = v;
            }
        }
        let lower = points[0];
        let upper = *points.last().unwrap();
        Ok(Kernel {
            family: KernelFamily::Tabulated { points, values: sym },
            lower,
            upper: if upper > lower { upper } else { lower + 1.0 },
        })
    }

    fn with_bounds(family: KernelFamily, lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
            return Err(Error::domain(format!(
                "kernel domain must satisfy lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Kernel { family, lower, upper })
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    /// Compact human-readable name of the kernel.
    pub fn label(&self) -> String {
        match &self.family {
            KernelFamily::BrownianMin => "brownian_min".to_string(),
            KernelFamily::ShiftedMin { c } => format!("shifted_min(c={c})"),
            KernelFamily::GaussianRbf { lengthscale } => {
                format!("gaussian_rbf(lengthscale={lengthscale})")
            }
            KernelFamily::Tabulated { points, .. } => {
                format!("tabulated({} points)", points.len())
            }
        }
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    fn check_in_domain(&self, x: f64) -> Result<()> {
        let tol = 1e-9 * (self.upper - self.lower).abs().max(1.0);
        if x < self.lower - tol || x > self.upper + tol {
            return Err(Error::domain(format!(
                "argument {x} outside kernel domain [{}, {}]",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    /// Evaluate `k(s, t)`. Symmetric in its arguments by construction.
    pub fn eval(&self, s: f64, t: f64) -> Result<f64> {
        self.check_in_domain(s)?;
        self.check_in_domain(t)?;
        Ok(match &self.family {
            KernelFamily::BrownianMin => s.min(t),
            KernelFamily::ShiftedMin { c } => c * c + s.min(t),
            KernelFamily::GaussianRbf { lengthscale } => {
                let d = s - t;
                (-d * d / (2.0 * lengthscale * lengthscale)).exp()
            }
            KernelFamily::Tabulated { points, values } => {
                let i = lookup(points, s).ok_or_else(|| {
                    Error::domain(format!("{s} is not a tabulated kernel point"))
                })?;
                let j = lookup(points, t).ok_or_else(|| {
                    Error::domain(format!("{t} is not a tabulated kernel point"))
                })?;
                values[(i, j)]
            }
        })
    }
}

fn lookup(points: &[f64], x: f64) -> Option<usize> {
    let span = (points[points.len() - 1] - points[0]).abs().max(1.0);
    let tol = 1e-9 * span;
    points.iter().position(|&p| (p - x).abs() <= tol)
}

/// A kernel matrix over a grid, with the diagonal regularization that was
/// actually applied and a cached Cholesky factorization.
#[derive(Clone)]
pub struct GramMatrix {
    values: DMatrix<f64>,
    jitter: f64,
    chol: Cholesky<f64, Dyn>,
}

impl std::fmt::Debug for GramMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GramMatrix")
            .field("size", &self.values.nrows())
            .field("jitter", &self.jitter)
            .finish()
    }
}

impl GramMatrix {
    /// Values including the applied jitter on the diagonal.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    pub fn size(&self) -> usize {
        self.values.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JitterPolicy {
    /// Fail on the first Cholesky breakdown.
    None,
    /// Escalate through `JITTER_LADDER` (relative to the max diagonal entry).
    Escalate,
}

/// Assemble the kernel matrix of `kernel` over `grid`, regularizing the
/// diagonal per `policy` until a Cholesky factorization succeeds.
pub fn assemble_gram(kernel: &Kernel, grid: &Grid, policy: JitterPolicy) -> Result<GramMatrix> {
    let pts = grid.points();
    let n = pts.len();
    let mut values = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(pts[i], pts[j])?;
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    gram_from_matrix(values, policy)
}

/// Factorize an explicitly assembled symmetric matrix with the jitter ladder.
pub fn gram_from_matrix(values: DMatrix<f64>, policy: JitterPolicy) -> Result<GramMatrix> {
    let n = values.nrows();
    let max_diag = (0..n).map(|i| values[(i, i)]).fold(0.0_f64, f64::max).max(0.0);
    let scale = if max_diag > 0.0 { max_diag } else { 1.0 };
    let ladder: &[f64] = match policy {
        JitterPolicy::None => &JITTER_LADDER[..1],
        JitterPolicy::Escalate => &JITTER_LADDER,
    };
    for &rel in ladder {
        let jitter = rel * scale;
        let mut jittered = values.clone();
        for i in 0..n {
            jittered[(i, i)] += jitter;
        }
        if let Some(chol) = jittered.clone().cholesky() {
            return Ok(GramMatrix { values: jittered, jitter, chol });
        }
    }
    let min_eig = linalg::smallest_eigenvalue(&values);
    Err(Error::numerical(format!(
        "Gram matrix is not positive semidefinite within tolerance even after \
         maximum jitter {:.3e}; smallest eigenvalue = {:.6e} (psd_tol = {:.3e})",
        JITTER_LADDER[JITTER_LADDER.len() - 1] * scale,
        min_eig,
        PSD_TOL_REL * scale,
    )))
}

/// The native-space inner product of the shifted min kernel `c^2 + min(s,t)`
/// on `[a, b]`:
///
/// `<f, g> = f(a) g(a) / (c^2 + a) + integral_a^b f'(t) g'(t) dt`,
///
/// with the integral approximated by the trapezoidal rule on `quadrature`.
/// `f` and `g` are supplied as values and derivatives on the quadrature grid.
pub fn h1_inner_product(
    kernel: &Kernel,
    f_values: &[f64],
    f_derivative: &[f64],
    g_values: &[f64],
    g_derivative: &[f64],
    quadrature: &Grid,
) -> Result<f64> {
    let c = match kernel.family() {
        KernelFamily::ShiftedMin { c } => *c,
        other => {
            return Err(Error::domain(format!(
                "native-space inner product is only defined for the shifted min kernel, got {other:?}"
            )))
        }
    };
    let a = quadrature.lower();
    if c * c + a <= 0.0 {
        return Err(Error::domain(format!(
            "shifted min inner product needs c^2 + a > 0, got c = {c}, a = {a}"
        )));
    }
    let n = quadrature.len();
    for (name, len) in [
        ("f_values", f_values.len()),
        ("f_derivative", f_derivative.len()),
        ("g_values", g_values.len()),
        ("g_derivative", g_derivative.len()),
    ] {
        if len != n {
            return Err(Error::domain(format!(
                "{name} has {len} entries but the quadrature grid has {n}"
            )));
        }
    }
    let boundary = f_values[0] * g_values[0] / (c * c + a);
    let pts = quadrature.points();
    let mut integral = 0.0;
    for i in 0..n - 1 {
        let h = pts[i + 1] - pts[i];
        integral += 0.5
            * h
            * (f_derivative[i] * g_derivative[i] + f_derivative[i + 1] * g_derivative[i + 1]);
    }
    Ok(boundary + integral)
}

/// Central-difference derivatives on a grid, one-sided at the endpoints.
pub fn central_differences(grid: &Grid, values: &[f64]) -> Result<Vec<f64>> {
    let pts = grid.points();
    let n = pts.len();
    if values.len() != n {
        return Err(Error::domain(format!(
            "values has {} entries but the grid has {n}",
            values.len()
        )));
    }
    let mut d = vec![0.0; n];
    d[0] = (values[1] - values[0]) / (pts[1] - pts[0]);
    d[n - 1] = (values[n - 1] - values[n - 2]) / (pts[n - 1] - pts[n - 2]);
    for i in 1..n - 1 {
        d[i] = (values[i + 1] - values[i - 1]) / (pts[i + 1] - pts[i - 1]);
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn builtin_kernels() -> Vec<Kernel> {
        vec![
            Kernel::brownian_min(0.0, 1.0).unwrap(),
            Kernel::shifted_min(1.0, 0.5, 1.0).unwrap(),
            Kernel::gaussian_rbf(1.0, 0.0, 1.0).unwrap(),
        ]
    }

    #[test]
    fn brownian_min_evaluates_to_min() {
        let k = Kernel::brownian_min(0.0, 1.0).unwrap();
        assert_eq!(k.eval(0.25, 0.5).unwrap(), 0.25);
    }

    #[test]
    fn shifted_min_adds_offset_variance() {
        let k = Kernel::shifted_min(1.0, 0.5, 1.0).unwrap();
        assert_eq!(k.eval(0.5, 0.5).unwrap(), 1.5);
    }

    #[test]
    fn diagonal_at_lower_bound_is_finite_and_nonnegative() {
        for k in builtin_kernels() {
            let (lo, _) = k.domain();
            let v = k.eval(lo, lo).unwrap();
            assert!(v.is_finite() && v >= 0.0, "{v} for {:?}", k.family());
        }
    }

    #[test]
    fn eval_is_exactly_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in builtin_kernels() {
            let (lo, hi) = k.domain();
            for _ in 0..200 {
                let s = lo + (hi - lo) * rng.gen::<f64>();
                let t = lo + (hi - lo) * rng.gen::<f64>();
                assert_eq!(k.eval(s, t).unwrap(), k.eval(t, s).unwrap());
            }
        }
    }

    #[test]
    fn eval_rejects_out_of_domain_arguments() {
        let k = Kernel::brownian_min(0.0, 1.0).unwrap();
        assert!(matches!(k.eval(-0.5, 0.5), Err(Error::Domain(_))));
        assert!(matches!(k.eval(0.5, 1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn shifted_min_requires_positive_shifted_origin() {
        assert!(Kernel::shifted_min(0.0, 0.0, 1.0).is_err());
        assert!(Kernel::shifted_min(1.0, -2.0, -0.5).is_err());
    }

    #[test]
    fn gram_of_brownian_min_on_two_points() {
        let k = Kernel::brownian_min(0.0, 1.0).unwrap();
        let g = Grid::new(vec![0.5, 1.0], 0.0, 1.0).unwrap();
        let gram = assemble_gram(&k, &g, JitterPolicy::Escalate).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 1.0]);
        assert_eq!(gram.values(), &expect);
        assert_eq!(gram.jitter(), 0.0);
    }

    #[test]
    fn rbf_gram_has_unit_diagonal() {
        let k = Kernel::gaussian_rbf(1.0, 0.0, 1.0).unwrap();
        let g = Grid::uniform(0.0, 1.0, 17).unwrap();
        let gram = assemble_gram(&k, &g, JitterPolicy::Escalate).unwrap();
        for i in 0..g.len() {
            assert!((gram.values()[(i, i)] - 1.0).abs() <= gram.jitter() + 1e-15);
        }
    }

    #[test]
    fn shifted_min_gram_matches_direct_evaluation() {
        let k = Kernel::shifted_min(1.0, 0.5, 1.0).unwrap();
        let g = Grid::new(vec![0.5, 0.75, 1.0], 0.5, 1.0).unwrap();
        let gram = assemble_gram(&k, &g, JitterPolicy::Escalate).unwrap();
        // direct-evaluation oracle
        for (i, &s) in g.points().iter().enumerate() {
            for (j, &t) in g.points().iter().enumerate() {
                let expect = 1.0 + s.min(t) + if i == j { gram.jitter() } else { 0.0 };
                assert!((gram.values()[(i, j)] - expect).abs() < 1e-15);
            }
        }
        assert_eq!(gram.values()[(0, 2)], 1.5);
    }

    #[test]
    fn indefinite_tabulated_matrix_is_rejected_with_diagnostic() {
        let points = vec![0.0, 1.0];
        let values = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let k = Kernel::tabulated(points, values).unwrap();
        let g = Grid::new(vec![0.0, 1.0], 0.0, 1.0).unwrap();
        let err = assemble_gram(&k, &g, JitterPolicy::Escalate).unwrap_err();
        match err {
            Error::Numerical(msg) => assert!(msg.contains("smallest eigenvalue"), "{msg}"),
            other => panic!("expected numerical error, got {other:?}"),
        }
    }

    #[test]
    fn gram_smallest_eigenvalue_within_psd_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in builtin_kernels() {
            let (lo, hi) = k.domain();
            for &n in &[5usize, 40, 200] {
                let mut pts: Vec<f64> = (0..n).map(|_| lo + (hi - lo) * rng.gen::<f64>()).collect();
                pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
                pts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
                if pts.len() < 2 {
                    continue;
                }
                let grid = Grid::new(pts, lo, hi).unwrap();
                let gram = assemble_gram(&k, &grid, JitterPolicy::Escalate).unwrap();
                let max_diag = (0..grid.len())
                    .map(|i| gram.values()[(i, i)])
                    .fold(0.0_f64, f64::max);
                let min_eig = linalg::smallest_eigenvalue(gram.values());
                assert!(
                    min_eig >= -PSD_TOL_REL * max_diag,
                    "min eig {min_eig} for {:?} on {} points",
                    k.family(),
                    grid.len()
                );
            }
        }
    }

    #[test]
    fn inner_product_reproduces_kernel_diagonal() {
        let k = Kernel::shifted_min(1.0, 0.5, 1.0).unwrap();
        let quad = Grid::uniform(0.5, 1.0, 2001).unwrap();
        let s: f64 = 0.75;
        let values: Vec<f64> = quad.points().iter().map(|&t| 1.0 + s.min(t)).collect();
        let derivs = central_differences(&quad, &values).unwrap();
        let got = h1_inner_product(&k, &values, &derivs, &values, &derivs, &quad).unwrap();
        let h = 0.5 / 2000.0;
        // kink-aligned trapezoid error is first order in the spacing
        assert!((got - 1.75).abs() <= 0.5 * h, "got {got}");
    }

    #[test]
    fn inner_product_of_constants_reduces_to_boundary_term() {
        let k = Kernel::shifted_min(1.0, 0.5, 1.0).unwrap();
        let quad = Grid::uniform(0.5, 1.0, 101).unwrap();
        let ones = vec![1.0; quad.len()];
        let zeros = vec![0.0; quad.len()];
        let got = h1_inner_product(&k, &ones, &zeros, &ones, &zeros, &quad).unwrap();
        assert!((got - 1.0 / 1.5).abs() < 1e-15);
    }

    #[test]
    fn inner_product_rejects_bad_kernels_and_domains() {
        let quad = Grid::uniform(-1.0, 1.0, 11).unwrap();
        let zeros = vec![0.0; quad.len()];
        // c^2 + a must stay positive on the quadrature interval
        let k = Kernel::shifted_min(0.5, 0.5, 1.0).unwrap();
        assert!(matches!(
            h1_inner_product(&k, &zeros, &zeros, &zeros, &zeros, &quad),
            Err(Error::Domain(_))
        ));
        // only the shifted min kernel carries this inner product
        let rbf = Kernel::gaussian_rbf(1.0, 0.0, 1.0).unwrap();
        let quad = Grid::uniform(0.5, 1.0, 11).unwrap();
        let zeros = vec![0.0; quad.len()];
        assert!(matches!(
            h1_inner_product(&rbf, &zeros, &zeros, &zeros, &zeros, &quad),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn inner_product_with_zero_function_vanishes() {
        let k = Kernel::shifted_min(1.0, 0.5, 1.0).unwrap();
        let quad = Grid::uniform(0.5, 1.0, 51).unwrap();
        let zeros = vec![0.0; quad.len()];
        let values: Vec<f64> = quad.points().iter().map(|&t| 1.0 + t).collect();
        let derivs = central_differences(&quad, &values).unwrap();
        let got = h1_inner_product(&k, &zeros, &zeros, &values, &derivs, &quad).unwrap();
        assert_eq!(got, 0.0);
    }

    #[test]
    fn inner_product_respects_reproducing_property_on_test_grid() {
        let k = Kernel::shifted_min(1.0, 0.5, 1.0).unwrap();
        let quad = Grid::uniform(0.5, 1.0, 2001).unwrap();
        let h = 0.5 / 2000.0;
        let test = Grid::uniform(0.5, 1.0, 21).unwrap();
        for &s in test.points() {
            for &t in test.points() {
                let f: Vec<f64> = quad.points().iter().map(|&u| 1.0 + s.min(u)).collect();
                let g: Vec<f64> = quad.points().iter().map(|&u| 1.0 + t.min(u)).collect();
                let fd = central_differences(&quad, &f).unwrap();
                let gd = central_differences(&quad, &g).unwrap();
                let ip = h1_inner_product(&k, &f, &fd, &g, &gd, &quad).unwrap();
                let expect = 1.0 + s.min(t);
                assert!(
                    (ip - expect).abs() <= 0.5 * h,
                    "s={s} t={t}: {ip} vs {expect}"
                );
            }
        }
    }
}
