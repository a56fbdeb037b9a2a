//! Evaluation grids: finite, strictly increasing point sets on a closed interval.

use crate::error::{Error, Result};

/// Relative tolerance used when matching a coordinate to a grid point.
pub const GRID_MATCH_TOL: f64 = 1e-9;

/// A finite discretization of a closed interval `[lower, upper]`.
///
/// Points are strictly increasing and stay inside the bounds; at least two
/// points are required so that every grid supports a nondegenerate kernel
/// matrix and a trapezoidal quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
    lower: f64,
    upper: f64,
}

impl Grid {
    pub fn new(points: Vec<f64>, lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
            return Err(Error::domain(format!(
                "grid bounds must satisfy lower < upper, got [{lower}, {upper}]"
            )));
        }
        if points.len() < 2 {
            return Err(Error::domain(format!(
                "grid needs at least 2 points, got {}",
                points.len()
            )));
        }
        let tol = GRID_MATCH_TOL * (upper - lower).abs().max(1.0);
        for w in points.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::domain(format!(
                    "grid points must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        let first = points[0];
        let last = *points.last().unwrap();
        if first < lower - tol || last > upper + tol {
            return Err(Error::domain(format!(
                "grid points [{first}, {last}] leave the domain [{lower}, {upper}]"
            )));
        }
        Ok(Grid { points, lower, upper })
    }

    /// `n` equally spaced points spanning `[lower, upper]`.
    pub fn uniform(lower: f64, upper: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain(format!(
                "uniform grid needs at least 2 points, got {n}"
            )));
        }
        let step = (upper - lower) / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| lower + i as f64 * step).collect();
        // Pin the endpoint so restriction maps can match it exactly.
        *points.last_mut().unwrap() = upper;
        Grid::new(points, lower, upper)
    }

    /// Uniform grid at the default resolution of 201 points per unit length.
    ///
    /// This keeps the dense oracles cheap while still resolving power-function
    /// decay well past one hundred selected points.
    pub fn default_resolution(lower: f64, upper: f64) -> Result<Self> {
        let n = ((upper - lower) * 200.0).round() as usize + 1;
        Grid::uniform(lower, upper, n.max(2))
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: at least two points
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn contains(&self, x: f64) -> bool {
        let tol = self.match_tol();
        x >= self.lower - tol && x <= self.upper + tol
    }

    /// Index of the grid point matching `x` up to a relative tolerance.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let tol = self.match_tol();
        match self
            .points
            .binary_search_by(|p| p.partial_cmp(&x).unwrap())
        {
            Ok(i) => Some(i),
            Err(i) => {
                if i < self.points.len() && (self.points[i] - x).abs() <= tol {
                    Some(i)
                } else if i > 0 && (self.points[i - 1] - x).abs() <= tol {
                    Some(i - 1)
                } else {
                    None
                }
            }
        }
    }

    fn match_tol(&self) -> f64 {
        GRID_MATCH_TOL * (self.upper - self.lower).abs().max(1.0)
    }
}
