//! Convergence-rate measurement: decay curves, power-law fits, and the
//! numerical verification of the greedy transfer bounds.
//!
//! The residual operator norms are grid sups of residual diagonals, which is
//! the operator norm when the ambient spaces carry sup norms over the grid;
//! other ambient norms are out of scope. The `X`-side quantity
//! `|cov(X|Y) - cov(X|Y_n)|` is computed as the residual of the
//! conditional-mean covariance, `cov(Z) - cov(Z_n)`, which is positive
//! semidefinite for nested selections, so its diagonal sup is the norm.
//! Kolmogorov widths are never computed exactly; the conservative check uses
//! the greedy sup residual itself (divided by `gamma`) as an upper surrogate
//! for the width.

use serde::Serialize;

use crate::conditioning::{posterior_kernel, PosteriorKernel};
use crate::error::{Error, Result};
use crate::greedy::GreedyState;
use crate::kernel::NUM_TOL;
use crate::model::JointGaussianModel;
use crate::transfer::TransferOperator;

/// A sequence of `(n, residual norm)` pairs with `n` strictly increasing.
#[derive(Debug, Clone, Serialize)]
pub struct DecayCurve {
    pub label: String,
    pub entries: Vec<(usize, f64)>,
}

impl DecayCurve {
    pub fn new(label: impl Into<String>, entries: Vec<(usize, f64)>) -> Result<Self> {
        if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::domain("decay curve indices must be strictly increasing"));
        }
        if entries.iter().any(|&(_, v)| v < 0.0) {
            return Err(Error::domain("decay curve values must be nonnegative"));
        }
        Ok(DecayCurve { label: label.into(), entries })
    }

    pub fn value_at(&self, n: usize) -> Option<f64> {
        self.entries.iter().find(|&&(m, _)| m == n).map(|&(_, v)| v)
    }
}

/// Power-law fit `value ~ c_hat * n^(-alpha_hat)` over a window.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateFit {
    pub alpha_hat: f64,
    pub c_hat: f64,
    pub window: (usize, usize),
    /// Largest absolute deviation in log space.
    pub residual: f64,
}

/// Which residual the decay curve tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayTarget {
    /// `|cov(Y) - cov(Y_n)|` over the observation grid.
    YResidual,
    /// `|cov(X|Y) - cov(X|Y_n)|` over `grid_x`.
    XGivenYnResidual,
}

fn y_residual_sup(model: &JointGaussianModel, selected: &[usize]) -> Result<f64> {
    let m = selected.len();
    if m == 0 {
        let sup = (0..model.ny())
            .map(|i| model.k_yy_at(i, i))
            .fold(f64::NEG_INFINITY, f64::max);
        return Ok(sup.max(0.0));
    }
    let k_sel =
        nalgebra::DMatrix::from_fn(m, m, |a, b| model.k_yy_at(selected[a], selected[b]));
    let gram = crate::kernel::gram_from_matrix(k_sel, crate::kernel::JitterPolicy::Escalate)?;
    let cross =
        nalgebra::DMatrix::from_fn(model.ny(), m, |i, a| model.k_yy_at(i, selected[a]));
    let weights = gram.cholesky().solve(&cross.transpose());
    let mut sup = f64::NEG_INFINITY;
    for i in 0..model.ny() {
        let d = model.k_yy_at(i, i) - (cross.row(i) * weights.column(i))[0];
        sup = sup.max(d);
    }
    Ok(sup.max(0.0))
}

/// Sup over `grid_x` of the diagonal of `cov(Z) - cov(Z_n)` for the given
/// conditional kernels.
fn transfer_lhs(full: &PosteriorKernel, partial: &PosteriorKernel) -> f64 {
    let nx = full.model().nx();
    let mut sup = f64::NEG_INFINITY;
    for i in 0..nx {
        let d = full.conditional_at(i, i) - partial.conditional_at(i, i);
        sup = sup.max(d);
    }
    sup.max(0.0)
}

/// Residual decay along a greedy trace, from `n = 0` to the full trace.
pub fn decay_curve(
    model: &JointGaussianModel,
    greedy: &GreedyState,
    target: DecayTarget,
) -> Result<DecayCurve> {
    if greedy.selected().is_empty() {
        return Err(Error::domain("greedy trace is empty"));
    }
    let selections = greedy.selected();
    let mut entries = Vec::with_capacity(selections.len() + 1);
    match target {
        DecayTarget::YResidual => {
            for n in 0..=selections.len() {
                entries.push((n, y_residual_sup(model, &selections[..n])?));
            }
        }
        DecayTarget::XGivenYnResidual => {
            let all: Vec<usize> = (0..model.ny()).collect();
            let full = posterior_kernel(model, &all)?;
            for n in 0..=selections.len() {
                let partial = posterior_kernel(model, &selections[..n])?;
                entries.push((n, transfer_lhs(&full, &partial)));
            }
        }
    }
    let label = match target {
        DecayTarget::YResidual => format!("{}:y_residual", model.label()),
        DecayTarget::XGivenYnResidual => format!("{}:x_given_yn_residual", model.label()),
    };
    DecayCurve::new(label, entries)
}

/// Least-squares fit of `log value` against `log n` over the window.
pub fn fit_power_law(curve: &DecayCurve, window: (usize, usize)) -> Result<RateFit> {
    let (n_min, n_max) = window;
    if n_min < 1 || n_min > n_max {
        return Err(Error::domain(format!(
            "invalid fit window [{n_min}, {n_max}]"
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(n, v) in &curve.entries {
        if n >= n_min && n <= n_max {
            if !(v > 0.0) {
                return Err(Error::domain(format!(
                    "cannot fit a power law: curve '{}' has nonpositive value {v} at n = {n}",
                    curve.label
                )));
            }
            xs.push((n as f64).ln());
            ys.push(v.ln());
        }
    }
    if xs.len() < 2 {
        return Err(Error::domain(format!(
            "fit window [{n_min}, {n_max}] covers fewer than two curve points"
        )));
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (intercept + slope * x)).abs())
        .fold(0.0_f64, f64::max);
    Ok(RateFit {
        alpha_hat: -slope,
        c_hat: intercept.exp(),
        window,
        residual,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TransferBoundRow {
    pub n: usize,
    pub lhs: f64,
    pub rhs: f64,
}

/// Per-step comparison of `|cov(X|Y) - cov(X|Y_n)|` against
/// `|M|^2 |cov(Y) - cov(Y_n)|`.
#[derive(Debug, Clone, Serialize)]
pub struct TransferBoundReport {
    pub per_n: Vec<TransferBoundRow>,
    pub m_norm: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// True when the bound is an equality at every step (up to 1e-10), as it
    /// is when `X = Y` and `M` is the identity.
    pub tight: bool,
}

/// Check the transfer inequality along a greedy trace. `m_op` must be the
/// exact transfer operator of the model; the inequality is then a theorem
/// and a failure indicates a defect.
pub fn check_transfer_bound(
    model: &JointGaussianModel,
    m_op: &TransferOperator,
    greedy: &GreedyState,
    n_max: usize,
) -> Result<TransferBoundReport> {
    let tolerance = 1e-8;
    let m_norm = m_op.operator_norm();
    let all: Vec<usize> = (0..model.ny()).collect();
    let full = posterior_kernel(model, &all)?;
    let steps = greedy.selected().len().min(n_max);
    let mut per_n = Vec::with_capacity(steps);
    for n in 1..=steps {
        let selected = &greedy.selected()[..n];
        let partial = posterior_kernel(model, selected)?;
        let lhs = transfer_lhs(&full, &partial);
        let rhs = m_norm * m_norm * y_residual_sup(model, selected)?;
        per_n.push(TransferBoundRow { n, lhs, rhs });
    }
    let pass = per_n.iter().all(|r| r.lhs <= r.rhs + tolerance);
    let tight = per_n.iter().all(|r| (r.lhs - r.rhs).abs() <= 1e-10);
    Ok(TransferBoundReport { per_n, m_norm, tolerance, pass, tight })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GreedyRateRow {
    pub n: usize,
    pub lhs: f64,
    pub bound: f64,
}

/// Empirical verification of the polynomial greedy rate.
#[derive(Debug, Clone, Serialize)]
pub struct GreedyRateReport {
    pub c_hat: f64,
    pub alpha_hat: f64,
    pub gamma: f64,
    pub m_norm: f64,
    /// `2^(5 alpha + 1) / gamma^2`, the slack the bound grants over the
    /// baseline constant.
    pub slack_factor: f64,
    pub per_n: Vec<GreedyRateRow>,
    pub pass: bool,
}

/// Check the polynomial rate bound with baseline-fitted constants:
/// `lhs(n) <= |M|^2 2^(5a+1) gamma^-2 C n^-a` where `(C, a)` are fitted to
/// `baseline` over the window.
pub fn check_greedy_rate_curves(
    greedy_lhs: &DecayCurve,
    baseline: &DecayCurve,
    m_norm: f64,
    gamma: f64,
    window: (usize, usize),
) -> Result<GreedyRateReport> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::domain(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let fit = fit_power_law(baseline, window)?;
    let (c_hat, alpha_hat) = (fit.c_hat, fit.alpha_hat);
    let slack_factor = 2f64.powf(5.0 * alpha_hat + 1.0) / (gamma * gamma);
    let mut per_n = Vec::new();
    for &(n, lhs) in &greedy_lhs.entries {
        if n >= window.0 && n <= window.1 {
            let bound =
                m_norm * m_norm * slack_factor * c_hat * (n as f64).powf(-alpha_hat);
            per_n.push(GreedyRateRow { n, lhs, bound });
        }
    }
    if per_n.is_empty() {
        return Err(Error::domain(format!(
            "greedy curve has no entries in the window [{}, {}]",
            window.0, window.1
        )));
    }
    let pass = per_n.iter().all(|r| r.lhs <= r.bound + 1e-12);
    Ok(GreedyRateReport { c_hat, alpha_hat, gamma, m_norm, slack_factor, per_n, pass })
}

/// Model-level wrapper around [`check_greedy_rate_curves`]: the baseline
/// conditions on uniformly spaced observation points of matching sizes.
pub fn check_greedy_rate(
    model: &JointGaussianModel,
    m_op: &TransferOperator,
    greedy: &GreedyState,
    window: (usize, usize),
) -> Result<GreedyRateReport> {
    let gamma = greedy.rule().gamma();
    let greedy_lhs = decay_curve(model, greedy, DecayTarget::XGivenYnResidual)?;
    let baseline = uniform_baseline_curve(model, window)?;
    check_greedy_rate_curves(&greedy_lhs, &baseline, m_op.operator_norm(), gamma, window)
}

/// `|cov(Y) - cov(Y_n*)|` for uniformly spaced selections of each size in the
/// window.
pub fn uniform_baseline_curve(
    model: &JointGaussianModel,
    window: (usize, usize),
) -> Result<DecayCurve> {
    let ny = model.ny();
    let mut entries = Vec::new();
    for n in window.0..=window.1.min(ny) {
        let selected = uniform_indices(ny, n);
        entries.push((n, y_residual_sup(model, &selected)?));
    }
    DecayCurve::new(format!("{}:uniform_baseline", model.label()), entries)
}

/// `n` indices spread evenly over `0..ny`, endpoints included.
pub fn uniform_indices(ny: usize, n: usize) -> Vec<usize> {
    if n >= ny {
        return (0..ny).collect();
    }
    if n == 1 {
        return vec![ny / 2];
    }
    let mut out: Vec<usize> = (0..n)
        .map(|j| ((j as f64) * (ny - 1) as f64 / (n - 1) as f64).round() as usize)
        .collect();
    out.dedup();
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct WidthSurrogateReport {
    pub gamma: f64,
    pub pass: bool,
    /// Worst ratio of the left side to the right side over the checked range.
    pub max_ratio: f64,
}

/// Conservative width-surrogate check of the abstract greedy rate: with
/// `sigma_m` the sup power after `m` steps and `U_m = sigma_m / gamma` an
/// upper surrogate for the Kolmogorov width, verify
///
/// `sigma_n <= sqrt(2) gamma^-1 min_{1<=m<n} U_m^((n-m)/n)`
///
/// for all `n` up to `n_max`. The bound is stated for kernels whose diagonal
/// is at most one; since the selection sequence is scale-invariant, the check
/// rescales the power trace by the initial supremum, which applies the bound
/// to the unit-normalized kernel exactly.
pub fn check_width_surrogate_bound(
    greedy: &GreedyState,
    n_max: usize,
) -> Result<WidthSurrogateReport> {
    let gamma = greedy.rule().gamma();
    let history = greedy.history();
    if history.len() < 2 {
        return Err(Error::domain("need at least two greedy steps for the width check"));
    }
    let scale = history[0].sup_power_sq.max(f64::MIN_POSITIVE).sqrt();
    // sup after m steps is recorded as the sup before step m (0-based m+1)
    let sigma = |m: usize| -> Option<f64> {
        if m < history.len() {
            Some(history[m].sup_power_sq.max(0.0).sqrt() / scale)
        } else if m == history.len() {
            Some(greedy.sup_power_sq().sqrt() / scale)
        } else {
            None
        }
    };
    let last = n_max.min(history.len());
    let mut max_ratio: f64 = 0.0;
    let mut pass = true;
    for n in 2..=last {
        let sigma_n = sigma(n).unwrap();
        let mut best = f64::INFINITY;
        for m in 1..n {
            let u_m = sigma(m).unwrap() / gamma;
            let exponent = (n - m) as f64 / n as f64;
            best = best.min(u_m.powf(exponent));
        }
        let rhs = std::f64::consts::SQRT_2 / gamma * best;
        if sigma_n > rhs + NUM_TOL {
            pass = false;
        }
        if rhs > 0.0 {
            max_ratio = max_ratio.max(sigma_n / rhs);
        }
    }
    Ok(WidthSurrogateReport { gamma, pass, max_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::greedy::SelectionRule;
    use crate::kernel::Kernel;

    fn brownian_model(nx: usize, ny: usize) -> JointGaussianModel {
        JointGaussianModel::brownian_restriction(
            0.0,
            Grid::uniform(0.0, 1.0, nx).unwrap(),
            Grid::uniform(0.5, 1.0, ny).unwrap(),
        )
        .unwrap()
    }

    fn greedy_on(model: &JointGaussianModel, n: usize) -> GreedyState {
        let mut st = GreedyState::init(
            model.y_kernel().unwrap(),
            model.y_grid().unwrap(),
            SelectionRule::Strong,
            true,
        )
        .unwrap();
        st.run(n, 0.0).unwrap();
        st
    }

    #[test]
    fn y_curve_starts_at_the_unconditioned_norm() {
        let model = brownian_model(81, 41);
        let st = greedy_on(&model, 5);
        let curve = decay_curve(&model, &st, DecayTarget::YResidual).unwrap();
        assert_eq!(curve.value_at(0), Some(1.0));
    }

    #[test]
    fn y_curve_reproduces_the_greedy_power_trace() {
        let model = brownian_model(81, 41);
        let st = greedy_on(&model, 20);
        let curve = decay_curve(&model, &st, DecayTarget::YResidual).unwrap();
        for h in st.history() {
            let from_curve = curve.value_at(h.step).unwrap();
            assert!(
                (from_curve - h.sup_power_sq).abs() <= 1e-10,
                "n = {}: curve {from_curve} vs greedy {}",
                h.step,
                h.sup_power_sq
            );
        }
    }

    #[test]
    fn saturated_runs_end_near_zero() {
        let model = brownian_model(41, 21);
        let st = greedy_on(&model, 21);
        let curve = decay_curve(&model, &st, DecayTarget::YResidual).unwrap();
        let last = curve.entries.last().unwrap().1;
        assert!(last <= 1e-8, "last value {last}");
    }

    #[test]
    fn decay_curves_of_nested_selections_never_increase() {
        let model = brownian_model(81, 41);
        let st = greedy_on(&model, 30);
        for target in [DecayTarget::YResidual, DecayTarget::XGivenYnResidual] {
            let curve = decay_curve(&model, &st, target).unwrap();
            for w in curve.entries.windows(2) {
                assert!(w[1].1 <= w[0].1 + NUM_TOL, "{:?}: {w:?}", curve.label);
            }
        }
    }

    #[test]
    fn power_law_fit_is_exact_on_synthetic_curves() {
        let inverse: Vec<(usize, f64)> =
            (1..=100).map(|n| (n, 1.0 / n as f64)).collect();
        let fit =
            fit_power_law(&DecayCurve::new("n^-1", inverse).unwrap(), (1, 100)).unwrap();
        assert!((fit.alpha_hat - 1.0).abs() < 1e-10);
        assert!((fit.c_hat - 1.0).abs() < 1e-10);
        assert!(fit.residual <= 1e-10);

        let scaled: Vec<(usize, f64)> =
            (1..=50).map(|n| (n, 3.0 * (n as f64).powi(-2))).collect();
        let fit =
            fit_power_law(&DecayCurve::new("3n^-2", scaled).unwrap(), (1, 50)).unwrap();
        assert!((fit.alpha_hat - 2.0).abs() < 1e-10);
        assert!((fit.c_hat - 3.0).abs() < 1e-9);
    }

    #[test]
    fn power_law_fit_names_the_offending_entry() {
        let curve = DecayCurve::new(
            "with_zero",
            vec![(1, 1.0), (2, 0.5), (3, 0.0), (4, 0.1)],
        )
        .unwrap();
        match fit_power_law(&curve, (1, 4)) {
            Err(Error::Domain(msg)) => assert!(msg.contains("n = 3"), "{msg}"),
            other => panic!("expected a domain error, got {other:?}"),
        }
    }

    #[test]
    fn transfer_bound_holds_on_the_brownian_model() {
        let model = brownian_model(101, 51);
        let st = greedy_on(&model, 25);
        let op = TransferOperator::for_model(&model).unwrap();
        let report = check_transfer_bound(&model, &op, &st, 25).unwrap();
        assert!(report.pass, "{:?}", report.per_n);
        assert_eq!(report.m_norm, 1.0);
    }

    #[test]
    fn transfer_bound_is_tight_when_x_equals_y() {
        let grid = Grid::uniform(0.5, 1.0, 41).unwrap();
        let base = Kernel::brownian_min(0.5, 1.0).unwrap();
        let model = JointGaussianModel::invertible_map(
            &base,
            grid,
            nalgebra::DMatrix::identity(41, 41),
        )
        .unwrap();
        let st = greedy_on(&model, 15);
        let op = TransferOperator::for_model(&model).unwrap();
        let report = check_transfer_bound(&model, &op, &st, 15).unwrap();
        assert!(report.pass);
        assert!(report.tight, "{:?}", report.per_n);
    }

    #[test]
    fn transfer_bound_holds_for_an_invertible_observation() {
        let grid = Grid::uniform(0.5, 1.0, 31).unwrap();
        let base = Kernel::brownian_min(0.5, 1.0).unwrap();
        let model = JointGaussianModel::invertible_map(
            &base,
            grid,
            crate::model::cumsum_matrix(31),
        )
        .unwrap();
        let op = TransferOperator::for_model(&model).unwrap();
        assert_eq!(op.operator_norm(), 2.0); // difference matrix row sums
        let mut st = GreedyState::init(
            model.y_kernel().unwrap(),
            model.y_grid().unwrap(),
            SelectionRule::Strong,
            false,
        )
        .unwrap();
        st.run(12, 0.0).unwrap();
        let report = check_transfer_bound(&model, &op, &st, 12).unwrap();
        assert!(report.pass, "{:?}", report.per_n);
    }

    #[test]
    fn transfer_bound_collapses_on_a_fully_kept_eigen_model() {
        let grid = Grid::uniform(0.0, 1.0, 31).unwrap();
        let model = JointGaussianModel::eigen_truncation(
            vec![0.8, 0.15, 0.05],
            vec![0, 1, 2],
            grid,
        )
        .unwrap();
        let mut st = GreedyState::init(
            model.y_kernel().unwrap(),
            model.y_grid().unwrap(),
            SelectionRule::Strong,
            true,
        )
        .unwrap();
        st.run(3, 0.0).unwrap();
        let op = TransferOperator::for_model(&model).unwrap();
        let report = check_transfer_bound(&model, &op, &st, 3).unwrap();
        let last = report.per_n.last().unwrap();
        assert!(last.lhs <= 1e-8 && last.rhs <= 1e-8, "{last:?}");
    }

    #[test]
    fn greedy_rate_bound_passes_on_the_brownian_model() {
        let model = brownian_model(101, 101);
        let st = greedy_on(&model, 60);
        let op = TransferOperator::for_model(&model).unwrap();
        let report = check_greedy_rate(&model, &op, &st, (10, 60)).unwrap();
        assert!(report.pass, "c = {}, alpha = {}", report.c_hat, report.alpha_hat);
        assert!(report.alpha_hat > 0.0);
    }

    #[test]
    fn greedy_rate_bound_dominates_synthetic_power_laws() {
        let greedy: Vec<(usize, f64)> =
            (1..=50).map(|n| (n, (n as f64).powi(-1))).collect();
        let baseline = greedy.clone();
        let report = check_greedy_rate_curves(
            &DecayCurve::new("greedy", greedy).unwrap(),
            &DecayCurve::new("baseline", baseline).unwrap(),
            1.0,
            1.0,
            (5, 50),
        )
        .unwrap();
        // slack factor 2^(5+1) = 64 dominates by construction
        assert!(report.pass);
        assert!((report.slack_factor - 64.0).abs() < 1e-9);
    }

    #[test]
    fn width_surrogate_bound_holds_for_strong_and_weak_selection() {
        let model = brownian_model(41, 101);
        for rule in [
            SelectionRule::Strong,
            SelectionRule::WeakRandom { gamma: 0.5, seed: 123 },
        ] {
            let mut st = GreedyState::init(
                model.y_kernel().unwrap(),
                model.y_grid().unwrap(),
                rule,
                true,
            )
            .unwrap();
            st.run(50, 0.0).unwrap();
            let report = check_width_surrogate_bound(&st, 50).unwrap();
            assert!(report.pass, "gamma = {}: ratio {}", report.gamma, report.max_ratio);
        }
    }

    #[test]
    fn uniform_indices_cover_endpoints_without_duplicates() {
        let idx = uniform_indices(101, 11);
        assert_eq!(idx.first(), Some(&0));
        assert_eq!(idx.last(), Some(&100));
        assert_eq!(idx.len(), 11);
        let mut sorted = idx.clone();
        sorted.dedup();
        assert_eq!(sorted.len(), idx.len());
    }
}
