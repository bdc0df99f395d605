//! Uniform finite-volume mesh on the unit interval and cell-averaged fields.
//!
//! The domain (0,1) is split into N equal cells; unknowns are cell averages
//! u_j sitting at centers x_j = (j + 1/2)·dx. Interior faces carry two-point
//! gradients (u_{j+1} − u_j)/dx; the boundary faces at x = 0 and x = 1 carry
//! no flux under the homogeneous Neumann conditions of the density equations.
//! The half-cell Dirichlet closure used by the concentration field lives in
//! the diagnostics/scheme modules, not here.

use std::ops::{Index, IndexMut};

/// Uniform mesh on (0,1) with `n` cells of width 1/n.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    n: usize,
}

impl Grid {
    /// A mesh with `n_cells` cells. Panics if `n_cells < 2`.
    pub fn new(n_cells: usize) -> Self {
        assert!(n_cells >= 2, "grid needs at least 2 cells, got {n_cells}");
        Grid { n: n_cells }
    }

    pub fn n_cells(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Center of cell `j`: (j + 1/2)·dx.
    pub fn cell_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dx()
    }
}

/// A scalar field of cell averages on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    /// Wraps `values` as cell averages. Panics if the length does not match
    /// the grid.
    pub fn new(grid: Grid, values: Vec<f64>) -> Self {
        assert_eq!(
            values.len(),
            grid.n_cells(),
            "field length {} does not match grid with {} cells",
            values.len(),
            grid.n_cells()
        );
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Field { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Field::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Field::new(grid, vec![value; grid.n_cells()])
    }

    /// Samples `f` at the cell centers (midpoint rule for cell averages).
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Field::new(grid, (0..grid.n_cells()).map(|j| f(grid.cell_center(j))).collect())
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Gradients (u_{j+1} − u_j)/dx at the N−1 interior faces. The boundary
    /// faces are excluded: they carry zero flux under Neumann conditions.
    pub fn face_gradient(&self) -> Vec<f64> {
        let dx = self.grid.dx();
        self.values.windows(2).map(|w| (w[1] - w[0]) / dx).collect()
    }

    /// Midpoint quadrature dx·Σ u_j, exact for cell averages.
    pub fn integrate(&self) -> f64 {
        self.grid.dx() * self.values.iter().sum::<f64>()
    }

    /// Discrete squared L² norm dx·Σ u_j².
    pub fn l2_norm_sq(&self) -> f64 {
        self.grid.dx() * self.values.iter().map(|v| v * v).sum::<f64>()
    }

    /// Discrete squared L² norm of the interior-face gradient, dx·Σ g².
    pub fn grad_norm_sq(&self) -> f64 {
        self.grid.dx() * self.face_gradient().iter().map(|g| g * g).sum::<f64>()
    }

    /// max |u_j|.
    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// max |u_j − v_j|.
    pub fn linf_diff(&self, other: &Field) -> f64 {
        assert_eq!(self.len(), other.len());
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Discrete total variation Σ |u_{j+1} − u_j|.
    pub fn tv(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Index<usize> for Field {
    type Output = f64;

    fn index(&self, j: usize) -> &f64 {
        &self.values[j]
    }
}

impl IndexMut<usize> for Field {
    fn index_mut(&mut self, j: usize) -> &mut f64 {
        &mut self.values[j]
    }
}
