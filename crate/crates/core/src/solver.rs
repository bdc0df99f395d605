//! Tridiagonal linear algebra and fixed-point iteration.
//!
//! Every implicit solve in the scheme reduces to a tridiagonal system that
//! is strictly diagonally dominant with positive diagonal, so the Thomas
//! algorithm runs without pivoting. The nonlinear total-density step wraps
//! its linear solve in a plain successive-substitution loop.

use crate::grid::Field;
use std::fmt;

/// A tridiagonal system A·x = rhs of dimension N: `lower` and `upper` hold
/// the N−1 off-diagonals, `diag` and `rhs` have length N.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl TridiagonalSystem {
    /// An all-zero system of dimension `n`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        TridiagonalSystem {
            lower: vec![0.0; n - 1],
            diag: vec![0.0; n],
            upper: vec![0.0; n - 1],
            rhs: vec![0.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }
}

/// Numerical failure inside a solve.
#[derive(Debug, Clone, PartialEq)]
pub enum SolverError {
    /// Forward elimination hit a vanishing pivot; the assembled operator was
    /// not diagonally dominant.
    ZeroPivot { row: usize },
    /// Fixed-point iteration did not reach the tolerance; the time step is
    /// too large for the contraction. Halve dt or abort.
    NoConvergence { iterations: usize, last_delta: f64 },
}

impl fmt::Display for SolverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverError::ZeroPivot { row } => {
                write!(f, "tridiagonal elimination hit a zero pivot at row {row}")
            }
            SolverError::NoConvergence { iterations, last_delta } => write!(
                f,
                "fixed-point iteration stalled after {iterations} iterations \
                 (last increment {last_delta:.3e}); reduce the time step"
            ),
        }
    }
}

impl std::error::Error for SolverError {}

const PIVOT_FLOOR: f64 = 1e-300;

/// Thomas forward elimination + back substitution, O(N).
pub fn solve_tridiagonal(sys: &TridiagonalSystem) -> Result<Vec<f64>, SolverError> {
    let n = sys.n();
    assert_eq!(sys.lower.len(), n - 1);
    assert_eq!(sys.upper.len(), n - 1);
    assert_eq!(sys.rhs.len(), n);

    let mut c = vec![0.0; n - 1]; // modified upper diagonal
    let mut d = vec![0.0; n]; // modified rhs

    let mut pivot = sys.diag[0];
    if pivot.abs() < PIVOT_FLOOR {
        return Err(SolverError::ZeroPivot { row: 0 });
    }
    if n > 1 {
        c[0] = sys.upper[0] / pivot;
    }
    d[0] = sys.rhs[0] / pivot;

    for i in 1..n {
        pivot = sys.diag[i] - sys.lower[i - 1] * c[i - 1];
        if pivot.abs() < PIVOT_FLOOR {
            return Err(SolverError::ZeroPivot { row: i });
        }
        if i < n - 1 {
            c[i] = sys.upper[i] / pivot;
        }
        d[i] = (sys.rhs[i] - sys.lower[i - 1] * d[i - 1]) / pivot;
    }

    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

/// Successive substitution v ← map(v) from `start`, stopping at the first
/// iterate whose sup-norm increment is within `tol_abs`. Returns the iterate
/// and the number of map applications.
pub fn picard_fixed_point<F>(
    mut map: F,
    start: &Field,
    tol_abs: f64,
    max_iter: usize,
) -> Result<(Field, usize), SolverError>
where
    F: FnMut(&Field) -> Result<Field, SolverError>,
{
    assert!(tol_abs > 0.0);
    assert!(max_iter >= 1);
    let mut prev = start.clone();
    let mut last_delta = f64::INFINITY;
    for k in 1..=max_iter {
        let next = map(&prev)?;
        last_delta = next.linf_diff(&prev);
        if last_delta <= tol_abs {
            return Ok((next, k));
        }
        prev = next;
    }
    Err(SolverError::NoConvergence { iterations: max_iter, last_delta })
}
