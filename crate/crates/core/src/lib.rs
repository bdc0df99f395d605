//! 1D finite-volume simulator for cell population dynamics in intestinal
//! crypts.
//!
//! Four cell populations (stem, progenitor, enterocyte, goblet) migrate
//! under the pressure gradient of their total density ρ, react through
//! division, differentiation, and extrusion, and couple to a butyrate
//! concentration on the unit interval:
//!
//! ```text
//! ∂t ρ_i − ∂x(ρ_i ∂x ρ) = f_i(x, ρ, ·, c_b)          i ∈ {s, p, e, g}
//! ∂t c_b − σ_b ∂x² c_b  = γ (c_b + c_b^d)/(1 + c_b + c_b^d) (ρ_e + ρ_g)
//! ```
//!
//! The diffusion degenerates wherever ρ vanishes, so the solver works on the
//! ε-regularized system (an extra ε∂x² on every density, initial data lifted
//! by ε/4 per species) and exposes the viscosity ε as a study knob. Time
//! stepping is semi-implicit and decoupled; space is a conservative
//! finite-volume discretization with donor-cell upwinding, which turns the
//! continuous bounds — ε ≤ ρ ≤ M∞^ε, species and butyrate nonnegativity,
//! per-stage energy inequalities — into checkable discrete facts. The
//! [`diagnostics`] module records them every step; [`experiments`] drives
//! vanishing-viscosity, time-step, and grid studies on top.

pub mod diagnostics;
pub mod experiments;
pub mod grid;
pub mod model;
pub mod scheme;
pub mod solver;

pub use diagnostics::StepReport;
pub use experiments::{builtin_scenario, ConvergenceRow, ConvergenceTable, Scenario};
pub use grid::{Field, Grid};
pub use model::{InvalidParameters, Parameters, RampSpec, SourceRates, Species};
pub use scheme::{
    advance, regularize_initial, run, InitialData, RunConstants, RunOutput, SchemeConfig,
    SchemeError, State,
};
pub use solver::{picard_fixed_point, solve_tridiagonal, SolverError, TridiagonalSystem};
