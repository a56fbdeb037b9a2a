//! Weak P-greedy point selection with incremental Newton-basis updates.
//!
//! Starting from the kernel diagonal, each step selects a candidate whose
//! squared power function is at least `gamma^2` times the supremum, appends
//! the corresponding Newton basis column, and downdates the squared power
//! function pointwise:
//!
//! ```text
//! N_n(t) = (k(t, t_n) - sum_{j<n} N_j(t) N_j(t_n)) / P_n(t_n)
//! P_{n+1}(t)^2 = P_n(t)^2 - N_n(t)^2
//! ```
//!
//! The selection runs over a fixed candidate grid; all guarantees are
//! relative to that grid.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernel::{Kernel, NUM_TOL};

/// How the next point is picked among the admissible candidates.
#[derive(Debug, Clone, PartialEq)]
pub enum SelectionRule {
    /// Deterministic argmax (`gamma = 1`); ties break toward the smallest
    /// grid index.
    Strong,
    /// Picks uniformly at random among the candidates whose squared power is
    /// at least `gamma^2` times the supremum. Reproducible given the seed.
    WeakRandom { gamma: f64, seed: u64 },
}

impl SelectionRule {
    pub fn gamma(&self) -> f64 {
        match self {
            SelectionRule::Strong => 1.0,
            SelectionRule::WeakRandom { gamma, .. } => *gamma,
        }
    }
}

/// One record per selection: the supremum is taken *before* the point is
/// added.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub step: usize,
    pub selected: usize,
    pub sup_power_sq: f64,
}

/// Outcome of a single selection attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Selected(usize),
    /// Every candidate's residual is at or below the stopping tolerance; the
    /// caller stops. This is a signal, not an error.
    Saturated,
}

#[derive(Debug, Clone)]
pub struct GreedyState {
    label: String,
    kernel: Kernel,
    candidates: Grid,
    rule: SelectionRule,
    rng: Option<ChaCha8Rng>,
    selected: Vec<usize>,
    /// Newton basis values, one column of length `candidates.len()` per step.
    newton: Vec<Vec<f64>>,
    power_sq: Vec<f64>,
    initial_sup: f64,
    history: Vec<HistoryEntry>,
}

impl GreedyState {
    /// Start a selection run: `power_sq[i] = k(t_i, t_i)`, nothing selected.
    ///
    /// With `enforce_unit_bound` the kernel diagonal must not exceed one, the
    /// normalization under which the polynomial-rate transfer bound is
    /// stated; disable it to run on unnormalized kernels.
    pub fn init(
        kernel: Kernel,
        candidates: Grid,
        rule: SelectionRule,
        enforce_unit_bound: bool,
    ) -> Result<Self> {
        if let SelectionRule::WeakRandom { gamma, .. } = &rule {
            if !(*gamma > 0.0 && *gamma <= 1.0) {
                return Err(Error::domain(format!(
                    "gamma must lie in (0, 1], got {gamma}"
                )));
            }
        }
        let mut power_sq = Vec::with_capacity(candidates.len());
        for &t in candidates.points() {
            let v = kernel.eval(t, t)?;
            if enforce_unit_bound && v > 1.0 + NUM_TOL {
                return Err(Error::domain(format!(
                    "kernel diagonal {v} at t = {t} exceeds 1; the rate bound requires a \
                     unit-normalized kernel (disable the bound check to proceed)"
                )));
            }
            power_sq.push(v);
        }
        let initial_sup = power_sq.iter().cloned().fold(0.0_f64, f64::max);
        let rng = match &rule {
            SelectionRule::Strong => None,
            SelectionRule::WeakRandom { seed, .. } => Some(ChaCha8Rng::seed_from_u64(*seed)),
        };
        Ok(GreedyState {
            label: kernel.label(),
            kernel,
            candidates,
            rule,
            rng,
            selected: Vec::new(),
            newton: Vec::new(),
            power_sq,
            initial_sup,
            history: Vec::new(),
        })
    }

    /// Default stopping tolerance, relative to the initial supremum.
    pub fn default_stop_tol(&self) -> f64 {
        1e-12 * self.initial_sup
    }

    /// Select one more point and downdate the squared power function.
    pub fn select_next(&mut self, stop_tol: f64) -> Result<Selection> {
        let n = self.candidates.len();
        let mut sup = f64::NEG_INFINITY;
        let mut argmax = 0;
        for (i, &p) in self.power_sq.iter().enumerate() {
            if p > sup {
                sup = p;
                argmax = i;
            }
        }
        if sup <= stop_tol {
            return Ok(Selection::Saturated);
        }
        let gamma = self.rule.gamma();
        let idx = match (&self.rule, self.rng.as_mut()) {
            (SelectionRule::Strong, _) => argmax,
            (SelectionRule::WeakRandom { .. }, Some(rng)) => {
                let threshold = gamma * gamma * sup;
                let eligible: Vec<usize> = (0..n)
                    .filter(|&i| self.power_sq[i] >= threshold)
                    .collect();
                eligible[rng.gen_range(0..eligible.len())]
            }
            (SelectionRule::WeakRandom { .. }, None) => unreachable!(),
        };

        let step = self.selected.len();
        let t_sel = self.candidates.points()[idx];
        let p_sel = self.power_sq[idx].sqrt();
        let mut column = Vec::with_capacity(n);
        for (i, &t) in self.candidates.points().iter().enumerate() {
            let mut v = self.kernel.eval(t, t_sel)?;
            for col in &self.newton {
                v -= col[i] * col[idx];
            }
            column.push(v / p_sel);
        }
        for (p, nv) in self.power_sq.iter_mut().zip(&column) {
            *p -= nv * nv;
            if *p < NUM_TOL {
                *p = 0.0;
            }
        }
        // the projection annihilates the selected point by construction
        self.power_sq[idx] = 0.0;
        self.newton.push(column);
        self.selected.push(idx);
        self.history.push(HistoryEntry { step, selected: idx, sup_power_sq: sup });
        Ok(Selection::Selected(idx))
    }

    /// Iterate [`Self::select_next`] until `n_max` points are selected or the
    /// residual saturates.
    pub fn run(&mut self, n_max: usize, stop_tol: f64) -> Result<()> {
        if n_max < 1 {
            return Err(Error::domain("n_max must be at least 1"));
        }
        while self.selected.len() < n_max {
            match self.select_next(stop_tol)? {
                Selection::Selected(_) => {}
                Selection::Saturated => break,
            }
        }
        Ok(())
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn candidates(&self) -> &Grid {
        &self.candidates
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn power_sq(&self) -> &[f64] {
        &self.power_sq
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn rule(&self) -> &SelectionRule {
        &self.rule
    }

    /// Newton basis value `N_step(t_candidate)`.
    pub fn newton_value(&self, candidate: usize, step: usize) -> f64 {
        self.newton[step][candidate]
    }

    /// `P_step(t_step)`: the power-function value at the point selected in
    /// `step`, at selection time.
    pub fn selected_power(&self, step: usize) -> f64 {
        self.newton[step][self.selected[step]]
    }

    /// Current supremum of the squared power function.
    pub fn sup_power_sq(&self) -> f64 {
        self.power_sq.iter().cloned().fold(0.0_f64, f64::max)
    }
}
