//! The viscosity-regularized semi-implicit time stepper.
//!
//! One step advances the state in three decoupled stages, each a tridiagonal
//! solve on the finite-volume mesh:
//!
//! 1. total density ρ: implicit diffusion with face coefficient ε + ρⁿ and
//!    an explicit reaction evaluated at the lagged iterate, closed by a
//!    short fixed-point loop (the reaction depends on ρ^{n+1} − ε through
//!    the crowding ramps);
//! 2. the four species densities in the order s → p → e → g: implicit
//!    ε-diffusion, donor-cell upwind advection against the velocity
//!    −∂ₓρ^{n+1}, the own-density part of the reaction on the diagonal and
//!    differentiation inflow from already-solved species on the right-hand
//!    side — an M-matrix, so nonnegativity is inherited from the data;
//! 3. butyrate: implicit heat step with zero flux at x = 0 and a half-cell
//!    Dirichlet value 0 at x = 1, with the production term explicit in c_bⁿ
//!    and implicit-free in the new species densities.
//!
//! Densities satisfy homogeneous Neumann conditions, so all density fluxes
//! vanish at the boundary faces and total mass is exact up to the reaction
//! integral. The face value of ρⁿ in stage 1 is donor-sampled against the
//! velocity −∂ₓρⁿ; this keeps the stage-1 flux consistent with the summed
//! upwind fluxes of stage 2, which makes the defect ρ^{n+1} − Σᵢ ρᵢ^{n+1}
//! an O(Δt) quantity on a fixed mesh. The matrix stays symmetric positive
//! definite either way.
//!
//! The total density is evolved by its own equation; the sum of the species
//! densities drifts from it by the recorded consistency defect. Bounds that
//! are provable for this discretization (ε ≤ ρ ≤ M∞^ε, species and
//! concentration nonnegativity) are enforced after each solve.

use crate::diagnostics::{self, StepReport};
use crate::grid::{Field, Grid};
use crate::model::{InvalidParameters, Parameters, Species};
use crate::solver::{self, SolverError, TridiagonalSystem};
use std::fmt;

/// Slack allowed on the discrete maximum principle ε ≤ ρ ≤ M∞^ε.
pub const MAX_PRINCIPLE_TOL: f64 = 1e-10;
/// Slack allowed on species and concentration nonnegativity.
pub const NONNEG_TOL: f64 = 1e-12;

/// A run configuration validated at construction: viscosity in (0,1) and
/// q∞·Δt < 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    grid: Grid,
    eps: f64,
    dt: f64,
    t_end: f64,
    picard_tol: f64,
    picard_max: usize,
    params: Parameters,
    goblet_by_subtraction: bool,
    debug_truncation: bool,
}

impl SchemeConfig {
    pub fn new(
        grid: Grid,
        eps: f64,
        dt: f64,
        t_end: f64,
        params: Parameters,
    ) -> Result<Self, SchemeError> {
        let cfg = SchemeConfig {
            grid,
            eps,
            dt,
            t_end,
            picard_tol: 1e-10,
            picard_max: 100,
            params,
            goblet_by_subtraction: false,
            debug_truncation: false,
        };
        cfg.validated()
    }

    fn validated(self) -> Result<Self, SchemeError> {
        self.params.validate_structure().map_err(SchemeError::from)?;
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(SchemeError::invalid_config(format!(
                "eps = {} must lie in (0, 1)",
                self.eps
            )));
        }
        let dt_ok = self.dt.is_finite() && self.dt > 0.0;
        if !dt_ok {
            return Err(SchemeError::invalid_config(format!("dt = {} must be positive", self.dt)));
        }
        let t_end_ok = self.t_end.is_finite() && self.t_end >= 0.0;
        if !t_end_ok {
            return Err(SchemeError::invalid_config(format!(
                "t_end = {} must be nonnegative",
                self.t_end
            )));
        }
        let qdt = self.params.q_inf() * self.dt;
        if qdt >= 1.0 {
            return Err(SchemeError::invalid_config(format!("q_inf*dt = {qdt} >= 1")));
        }
        let picard_ok = self.picard_tol.is_finite() && self.picard_tol > 0.0;
        if !picard_ok || self.picard_max == 0 {
            return Err(SchemeError::invalid_config(format!(
                "picard_tol = {} / picard_max = {} must be positive",
                self.picard_tol, self.picard_max
            )));
        }
        Ok(self)
    }

    /// Default time step min(1e−3, 0.5/q∞), comfortably inside q∞·Δt < 1.
    pub fn default_dt(params: &Parameters) -> f64 {
        let q = params.q_inf();
        if q > 0.0 {
            (0.5 / q).min(1e-3)
        } else {
            1e-3
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Result<Self, SchemeError> {
        self.dt = dt;
        self.validated()
    }

    pub fn with_eps(mut self, eps: f64) -> Result<Self, SchemeError> {
        self.eps = eps;
        self.validated()
    }

    pub fn with_t_end(mut self, t_end: f64) -> Result<Self, SchemeError> {
        self.t_end = t_end;
        self.validated()
    }

    pub fn with_grid(mut self, grid: Grid) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_picard(mut self, tol: f64, max_iter: usize) -> Result<Self, SchemeError> {
        self.picard_tol = tol;
        self.picard_max = max_iter;
        self.validated()
    }

    pub fn with_goblet_by_subtraction(mut self, on: bool) -> Self {
        self.goblet_by_subtraction = on;
        self
    }

    pub fn with_debug_truncation(mut self, on: bool) -> Self {
        self.debug_truncation = on;
        self
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn picard_tol(&self) -> f64 {
        self.picard_tol
    }

    pub fn picard_max(&self) -> usize {
        self.picard_max
    }

    pub fn params(&self) -> &Parameters {
        &self.params
    }

    pub fn goblet_by_subtraction(&self) -> bool {
        self.goblet_by_subtraction
    }

    pub fn debug_truncation(&self) -> bool {
        self.debug_truncation
    }
}

/// The five unknowns at one time level plus the evolved total density.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub stem: Field,
    pub progenitor: Field,
    pub enterocyte: Field,
    pub goblet: Field,
    pub butyrate: Field,
    /// Total density governed by its own equation. The species sum drifts
    /// from it by the per-step consistency defect, which is recorded rather
    /// than suppressed.
    pub total: Field,
    pub time: f64,
}

impl State {
    pub fn species(&self, sp: Species) -> &Field {
        match sp {
            Species::Stem => &self.stem,
            Species::Progenitor => &self.progenitor,
            Species::Enterocyte => &self.enterocyte,
            Species::Goblet => &self.goblet,
        }
    }

    /// Pointwise sum of the four species densities.
    pub fn species_sum(&self) -> Field {
        let mut v = self.stem.values().to_vec();
        for (j, x) in v.iter_mut().enumerate() {
            *x += self.progenitor[j] + self.enterocyte[j] + self.goblet[j];
        }
        Field::new(self.stem.grid(), v)
    }
}

/// Unregularized initial data: four species densities and the butyrate
/// concentration, all nonnegative.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub stem: Field,
    pub progenitor: Field,
    pub enterocyte: Field,
    pub goblet: Field,
    pub butyrate: Field,
}

/// Lifts initial data into the regularized problem: each species is shifted
/// by ε/4, so the total starts at ρ⁰ + ε ≥ ε; the concentration is kept.
pub fn regularize_initial(init: &InitialData, eps: f64) -> State {
    assert!(eps > 0.0);
    let grid = init.stem.grid();
    let shift = |f: &Field| {
        assert_eq!(f.grid(), grid);
        assert!(f.values().iter().all(|v| *v >= 0.0), "initial data must be nonnegative");
        Field::new(grid, f.values().iter().map(|v| v + 0.25 * eps).collect())
    };
    assert!(init.butyrate.values().iter().all(|v| *v >= 0.0));
    let stem = shift(&init.stem);
    let progenitor = shift(&init.progenitor);
    let enterocyte = shift(&init.enterocyte);
    let goblet = shift(&init.goblet);
    let mut total = vec![0.0; grid.n_cells()];
    for (j, t) in total.iter_mut().enumerate() {
        *t = stem[j] + progenitor[j] + enterocyte[j] + goblet[j];
    }
    State {
        stem,
        progenitor,
        enterocyte,
        goblet,
        butyrate: init.butyrate.clone(),
        total: Field::new(grid, total),
        time: 0.0,
    }
}

/// Per-run constants fixed by the regularized initial state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConstants {
    /// Supremum of the unregularized initial total density.
    pub rho0_sup: f64,
    /// The a-priori bound M∞^ε = max(sup ρ⁰, M̄) + ε.
    pub m_inf_eps: f64,
    /// ‖∂ₓρ^{ε,0}‖²; the ε-shift is constant so this equals ‖∂ₓρ⁰‖².
    pub grad_rho0_l2_sq: f64,
    /// Σᵢ TV(wᵢ⁰) of the initial species fractions.
    pub tv_w0_sum: f64,
}

impl RunConstants {
    pub fn from_initial_state(state: &State, params: &Parameters, eps: f64) -> Self {
        let rho0_sup = (state.total.max() - eps).max(0.0);
        RunConstants {
            rho0_sup,
            m_inf_eps: params.m_inf_eps(rho0_sup, eps),
            grad_rho0_l2_sq: state.total.grad_norm_sq(),
            tv_w0_sum: diagnostics::tv_weights(state).iter().sum(),
        }
    }
}

/// Failure of a step or of configuration validation.
#[derive(Debug, Clone, PartialEq)]
pub enum SchemeError {
    InvalidConfig { message: String },
    Solver(SolverError),
    InvariantViolation { what: String, value: f64, bound: f64, time: f64 },
}

impl SchemeError {
    fn invalid_config(message: String) -> Self {
        SchemeError::InvalidConfig { message }
    }
}

impl fmt::Display for SchemeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeError::InvalidConfig { message } => write!(f, "invalid configuration: {message}"),
            SchemeError::Solver(e) => write!(f, "solver failure: {e}"),
            SchemeError::InvariantViolation { what, value, bound, time } => write!(
                f,
                "invariant violation at t = {time}: {what} = {value:.6e} breaches bound {bound:.6e}"
            ),
        }
    }
}

impl std::error::Error for SchemeError {}

impl From<SolverError> for SchemeError {
    fn from(e: SolverError) -> Self {
        SchemeError::Solver(e)
    }
}

impl From<InvalidParameters> for SchemeError {
    fn from(e: InvalidParameters) -> Self {
        SchemeError::InvalidConfig { message: e.message().to_string() }
    }
}

/// Value of `left`/`right` on the donor side of a face with velocity
/// u = −g. Zero-velocity faces carry no flux; the average keeps the choice
/// deterministic.
fn donor_value(left: f64, right: f64, g: f64) -> f64 {
    if g < 0.0 {
        left
    } else if g > 0.0 {
        right
    } else {
        0.5 * (left + right)
    }
}

/// Symmetric positive-definite diffusion matrix I + Δt·div(a ∂ₓ·) with the
/// given face coefficients (length N−1; boundary faces carry no flux).
fn diffusion_matrix(grid: Grid, dt: f64, face_coeff: &[f64]) -> TridiagonalSystem {
    let n = grid.n_cells();
    assert_eq!(face_coeff.len(), n - 1);
    let r = dt / (grid.dx() * grid.dx());
    let mut sys = TridiagonalSystem::new(n);
    for j in 0..n {
        let a_left = if j > 0 { face_coeff[j - 1] } else { 0.0 };
        let a_right = if j < n - 1 { face_coeff[j] } else { 0.0 };
        sys.diag[j] = 1.0 + r * (a_left + a_right);
    }
    for ((upper, lower), a) in sys.upper.iter_mut().zip(&mut sys.lower).zip(face_coeff) {
        *upper = -r * a;
        *lower = -r * a;
    }
    sys
}

/// Solves the total-density stage: ρ^{n+1} with implicit (ε + ρⁿ)-diffusion
/// and the total reaction term evaluated at the lagged iterate in its
/// density slot. Returns the new field and the number of fixed-point
/// iterations. The output is checked against ε ≤ ρ ≤ M∞^ε.
pub fn step_total_density(
    state: &State,
    cfg: &SchemeConfig,
    m_inf_eps: f64,
) -> Result<(Field, usize), SchemeError> {
    let grid = cfg.grid();
    let n = grid.n_cells();
    let (dt, eps) = (cfg.dt(), cfg.eps());
    let rho_n = &state.total;

    // ρⁿ sampled on the donor side of each face w.r.t. the velocity −∂ₓρⁿ;
    // the matrix is SPD regardless of the sampling.
    let g_old = rho_n.face_gradient();
    let face_coeff: Vec<f64> =
        (0..n - 1).map(|f| eps + donor_value(rho_n[f], rho_n[f + 1], g_old[f])).collect();
    let mut sys = diffusion_matrix(grid, dt, &face_coeff);

    let params = cfg.params();
    let (v, iters) = solver::picard_fixed_point(
        |v_lag: &Field| {
            for j in 0..n {
                let x = grid.cell_center(j);
                let f = params.total_source(
                    x,
                    v_lag[j] - eps,
                    state.stem[j],
                    state.progenitor[j],
                    state.enterocyte[j],
                    state.goblet[j],
                    state.butyrate[j],
                );
                sys.rhs[j] = rho_n[j] + dt * f;
            }
            Ok(Field::new(grid, solver::solve_tridiagonal(&sys)?))
        },
        rho_n,
        cfg.picard_tol(),
        cfg.picard_max(),
    )?;

    let (min, max) = (v.min(), v.max());
    if min < eps - MAX_PRINCIPLE_TOL {
        return Err(SchemeError::InvariantViolation {
            what: "total density lower bound".to_string(),
            value: min,
            bound: eps,
            time: state.time,
        });
    }
    if max > m_inf_eps + MAX_PRINCIPLE_TOL {
        return Err(SchemeError::InvariantViolation {
            what: "total density upper bound".to_string(),
            value: max,
            bound: m_inf_eps,
            time: state.time,
        });
    }
    Ok((v, iters))
}

/// Builds the tridiagonal operator of one species stage: ε-diffusion,
/// donor-cell advection against −∂ₓ`rho_new`, and the implicit own-density
/// reaction coefficient on the diagonal.
fn assemble_partial(
    species: Species,
    state: &State,
    rho_new: &Field,
    cfg: &SchemeConfig,
) -> TridiagonalSystem {
    let grid = cfg.grid();
    let n = grid.n_cells();
    let (dt, eps, dx) = (cfg.dt(), cfg.eps(), grid.dx());
    let params = cfg.params();

    let mut sys = diffusion_matrix(grid, dt, &vec![eps; n - 1]);

    // Advection: face f between cells f and f+1 with velocity u = −g.
    let g_new = rho_new.face_gradient();
    for (f, &g) in g_new.iter().enumerate() {
        let u = -g;
        let c = dt * u / dx;
        if u > 0.0 {
            sys.diag[f] += c;
            sys.lower[f] -= c;
        } else if u < 0.0 {
            sys.upper[f] += c;
            sys.diag[f + 1] -= c;
        }
    }

    // Own-density reaction, implicit. The division part subtracts from the
    // diagonal but is bounded by q∞·Δt < 1, so dominance survives.
    for j in 0..n {
        let x = grid.cell_center(j);
        sys.diag[j] -= dt * params.self_rate(species, x, rho_new[j] - eps, state.butyrate[j]);
    }
    debug_assert_m_matrix(&sys);
    sys
}

/// The shape every species stage must assemble: positive diagonal,
/// nonpositive off-diagonals, and strictly positive column sums (the donor
/// cell's outflow sits on its own diagonal, so upwind advection balances
/// by columns; column sums reduce to 1 − Δt·self_rate > 0).
fn debug_assert_m_matrix(sys: &TridiagonalSystem) {
    if cfg!(debug_assertions) {
        let n = sys.n();
        for j in 0..n {
            debug_assert!(sys.diag[j] > 0.0, "nonpositive diagonal in row {j}");
            let above = if j > 0 { sys.upper[j - 1] } else { 0.0 };
            let below = if j < n - 1 { sys.lower[j] } else { 0.0 };
            debug_assert!(above <= 0.0 && below <= 0.0, "positive off-diagonal in column {j}");
            let column_sum = sys.diag[j] + above + below;
            debug_assert!(
                column_sum > 1e-9,
                "column {j} lost dominance (sum {column_sum})"
            );
        }
    }
}

/// Solves one species stage. `upstream` is the already-solved donor of the
/// differentiation inflow (ρ_s^{n+1} for progenitors, ρ_p^{n+1} for
/// enterocytes and goblets, nothing for stem cells). The result is checked
/// for nonnegativity.
pub fn step_partial_density(
    species: Species,
    state: &State,
    rho_new: &Field,
    upstream: Option<&Field>,
    cfg: &SchemeConfig,
) -> Result<Field, SchemeError> {
    let grid = cfg.grid();
    let n = grid.n_cells();
    let dt = cfg.dt();
    let params = cfg.params();

    let mut sys = assemble_partial(species, state, rho_new, cfg);
    let old = state.species(species);
    for j in 0..n {
        let x = grid.cell_center(j);
        let donor = upstream.map_or(0.0, |u| u[j]);
        sys.rhs[j] = old[j] + dt * params.transfer_gain(species, x, state.butyrate[j], donor);
    }

    let v = Field::new(grid, solver::solve_tridiagonal(&sys)?);
    let min = v.min();
    if min < -NONNEG_TOL {
        return Err(SchemeError::InvariantViolation {
            what: format!("density of species {} nonnegativity", species.label()),
            value: min,
            bound: 0.0,
            time: state.time,
        });
    }
    Ok(v)
}

/// Solves the butyrate stage: implicit diffusion with zero flux at x = 0 and
/// a half-cell Dirichlet value 0 at x = 1; production explicit in c_bⁿ and
/// proportional to the new e and g densities. Nonnegativity is checked.
pub fn step_concentration(
    state: &State,
    rho_e_new: &Field,
    rho_g_new: &Field,
    cfg: &SchemeConfig,
) -> Result<Field, SchemeError> {
    let grid = cfg.grid();
    let n = grid.n_cells();
    let (dt, dx) = (cfg.dt(), grid.dx());
    let p = cfg.params();

    let mut sys = diffusion_matrix(grid, dt, &vec![p.sigma_b; n - 1]);
    // Dirichlet c = 0 at x = 1 through the half-cell ghost relation:
    // boundary-face gradient (0 − c_{N−1})/(dx/2).
    sys.diag[n - 1] += dt * p.sigma_b * 2.0 / (dx * dx);

    for j in 0..n {
        let cb = state.butyrate[j];
        let ratio = (cb + p.c_b_d) / (1.0 + cb + p.c_b_d);
        sys.rhs[j] = cb + p.gamma * dt * ratio * (rho_e_new[j] + rho_g_new[j]);
    }

    let v = Field::new(grid, solver::solve_tridiagonal(&sys)?);
    let min = v.min();
    if min < -NONNEG_TOL {
        return Err(SchemeError::InvariantViolation {
            what: "butyrate nonnegativity".to_string(),
            value: min,
            bound: 0.0,
            time: state.time,
        });
    }
    Ok(v)
}

/// Clamp to [0, M∞^ε].
fn truncate(x: f64, m_inf_eps: f64) -> f64 {
    x.clamp(0.0, m_inf_eps)
}

/// Debug check of the truncated formulation: re-solves the species stage
/// with the clamp T^{M∞} applied to the advected density and to the
/// own-density reaction argument (both explicit at the production solution)
/// and returns the sup-norm gap. Zero whenever the production solution
/// already sits in [0, M∞^ε], which is the provable regime.
fn truncation_gap(
    species: Species,
    state: &State,
    rho_new: &Field,
    upstream: Option<&Field>,
    solution: &Field,
    cfg: &SchemeConfig,
    m_inf_eps: f64,
) -> Result<f64, SchemeError> {
    let grid = cfg.grid();
    let n = grid.n_cells();
    let (dt, eps, dx) = (cfg.dt(), cfg.eps(), grid.dx());
    let params = cfg.params();

    let mut sys = diffusion_matrix(grid, dt, &vec![eps; n - 1]);
    let old = state.species(species);
    let g_new = rho_new.face_gradient();

    let mut flux = vec![0.0; n + 1]; // boundary faces stay zero
    for (f, &g) in g_new.iter().enumerate() {
        let u = -g;
        let donor = donor_value(solution[f], solution[f + 1], g);
        flux[f + 1] = u * truncate(donor, m_inf_eps);
    }
    for j in 0..n {
        let x = grid.cell_center(j);
        let donor = upstream.map_or(0.0, |u| u[j]);
        let reaction = params.self_rate(species, x, rho_new[j] - eps, state.butyrate[j])
            * truncate(solution[j], m_inf_eps)
            + params.transfer_gain(species, x, state.butyrate[j], donor);
        sys.rhs[j] = old[j] + dt * reaction - dt / dx * (flux[j + 1] - flux[j]);
    }
    let v = Field::new(grid, solver::solve_tridiagonal(&sys)?);
    Ok(v.linf_diff(solution))
}

/// One full step: total density, the four species in order s → p → e → g,
/// then the concentration. Returns the new state and its diagnostic record.
/// The species sum is not forced back onto ρ^{n+1}; their gap is recorded in
/// the report.
pub fn advance(
    state: &State,
    cfg: &SchemeConfig,
    consts: &RunConstants,
) -> Result<(State, StepReport), SchemeError> {
    let (rho_new, picard_iters) = step_total_density(state, cfg, consts.m_inf_eps)?;

    let stem = step_partial_density(Species::Stem, state, &rho_new, None, cfg)?;
    let progenitor = step_partial_density(Species::Progenitor, state, &rho_new, Some(&stem), cfg)?;
    let enterocyte =
        step_partial_density(Species::Enterocyte, state, &rho_new, Some(&progenitor), cfg)?;
    let goblet = if cfg.goblet_by_subtraction() {
        let mut v = rho_new.values().to_vec();
        for (j, x) in v.iter_mut().enumerate() {
            *x -= stem[j] + progenitor[j] + enterocyte[j];
        }
        Field::new(cfg.grid(), v)
    } else {
        step_partial_density(Species::Goblet, state, &rho_new, Some(&progenitor), cfg)?
    };

    let butyrate = step_concentration(state, &enterocyte, &goblet, cfg)?;

    let mut gap: f64 = 0.0;
    if cfg.debug_truncation() {
        let solves: [(Species, &Field, Option<&Field>); 4] = [
            (Species::Stem, &stem, None),
            (Species::Progenitor, &progenitor, Some(&stem)),
            (Species::Enterocyte, &enterocyte, Some(&progenitor)),
            (Species::Goblet, &goblet, Some(&progenitor)),
        ];
        for (sp, solution, upstream) in solves {
            if sp == Species::Goblet && cfg.goblet_by_subtraction() {
                continue;
            }
            gap = gap.max(truncation_gap(
                sp,
                state,
                &rho_new,
                upstream,
                solution,
                cfg,
                consts.m_inf_eps,
            )?);
        }
    }

    let next = State {
        stem,
        progenitor,
        enterocyte,
        goblet,
        butyrate,
        total: rho_new,
        time: state.time + cfg.dt(),
    };
    let report = diagnostics::step_report(state, &next, cfg, consts, picard_iters, gap);
    Ok((next, report))
}

/// Everything a run produces. On failure the trajectory computed so far is
/// kept and the error is stored in `failure`.
#[derive(Debug, Clone)]
pub struct RunOutput {
    /// States captured at the requested output times (nearest step).
    pub snapshots: Vec<State>,
    /// One diagnostic record per completed step.
    pub reports: Vec<StepReport>,
    pub constants: RunConstants,
    /// Total density after every step, `total_history[0]` being the
    /// regularized initial field.
    pub total_history: Vec<Vec<f64>>,
    /// Human-readable notes on monitored inequalities that missed their
    /// expected margin.
    pub warnings: Vec<String>,
    pub failure: Option<SchemeError>,
}

impl RunOutput {
    pub fn final_state(&self) -> Option<&State> {
        self.snapshots.last()
    }
}

/// Runs the scheme from `init` to t_end, capturing snapshots at
/// `output_times` (empty list: initial and final states).
pub fn run(init: &InitialData, cfg: &SchemeConfig, output_times: &[f64]) -> RunOutput {
    let state0 = regularize_initial(init, cfg.eps());
    let consts = RunConstants::from_initial_state(&state0, cfg.params(), cfg.eps());

    let n_steps = (cfg.t_end() / cfg.dt()).round() as usize;
    let mut wanted: Vec<usize> = if output_times.is_empty() {
        vec![0, n_steps]
    } else {
        output_times
            .iter()
            .map(|t| ((t / cfg.dt()).round().max(0.0) as usize).min(n_steps))
            .collect()
    };
    wanted.sort_unstable();
    wanted.dedup();

    let mut out = RunOutput {
        snapshots: Vec::new(),
        reports: Vec::with_capacity(n_steps),
        constants: consts,
        total_history: Vec::with_capacity(n_steps + 1),
        warnings: Vec::new(),
        failure: None,
    };
    out.total_history.push(state0.total.values().to_vec());
    if wanted.first() == Some(&0) {
        out.snapshots.push(state0.clone());
        wanted.remove(0);
    }

    let mut state = state0;
    for step in 1..=n_steps {
        match advance(&state, cfg, &consts) {
            Ok((next, report)) => {
                collect_warnings(step, &report, &mut out.warnings);
                state = next;
                out.total_history.push(state.total.values().to_vec());
                out.reports.push(report);
                if wanted.first() == Some(&step) {
                    out.snapshots.push(state.clone());
                    wanted.remove(0);
                }
            }
            Err(e) => {
                out.failure = Some(e);
                break;
            }
        }
    }
    out
}

fn collect_warnings(step: usize, report: &StepReport, warnings: &mut Vec<String>) {
    if !report.energy_total_ok {
        warnings.push(format!(
            "step {step}: total-density energy inequality violated \
             (lhs {:.6e} > rhs {:.6e})",
            report.energy_total_lhs, report.energy_total_rhs
        ));
    }
    if !report.energy_cb_ok {
        warnings.push(format!(
            "step {step}: concentration energy inequality violated \
             (lhs {:.6e} > rhs {:.6e})",
            report.energy_cb_lhs, report.energy_cb_rhs
        ));
    }
    for sp in Species::ALL {
        let i = sp.index();
        let (margin, rhs) = (report.energy_species_margin[i], report.energy_species_rhs[i]);
        if margin < -0.1 * rhs {
            warnings.push(format!(
                "step {step}: species {} energy margin {margin:.6e} below -10% of rhs {rhs:.6e}",
                sp.label()
            ));
        }
    }
    if report.mass_residual.abs() > diagnostics::MASS_TOL {
        warnings.push(format!(
            "step {step}: mass-balance residual {:.6e} above {:.1e}",
            report.mass_residual,
            diagnostics::MASS_TOL
        ));
    }
    if report.min_partial < -NONNEG_TOL {
        warnings.push(format!(
            "step {step}: species density dipped to {:.6e} (subtraction recovery)",
            report.min_partial
        ));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Parameters;

    fn rate_free() -> Parameters {
        Parameters {
            q_div_s: 0.0,
            q_s_p: 0.0,
            q_div_p: 0.0,
            q_p_e: 0.0,
            q_p_g: 0.0,
            q_ex_e: 0.0,
            q_ex_g: 0.0,
            ..Parameters::default()
        }
    }

    fn uniform_init(grid: Grid, s: f64, p: f64, e: f64, g: f64, cb: f64) -> InitialData {
        InitialData {
            stem: Field::constant(grid, s),
            progenitor: Field::constant(grid, p),
            enterocyte: Field::constant(grid, e),
            goblet: Field::constant(grid, g),
            butyrate: Field::constant(grid, cb),
        }
    }

    #[test]
    fn regularization_shifts_by_quarter_eps() {
        let grid = Grid::new(10);
        let state = regularize_initial(&uniform_init(grid, 0.0, 0.0, 0.0, 0.0, 0.0), 0.1);
        for j in 0..10 {
            assert!((state.stem[j] - 0.025).abs() < 1e-15);
            assert!((state.total[j] - 0.1).abs() < 1e-15);
        }

        let state = regularize_initial(&uniform_init(grid, 1.0, 0.0, 0.0, 0.0, 0.0), 0.4);
        for j in 0..10 {
            assert!((state.total[j] - 1.4).abs() < 1e-15);
        }
    }

    #[test]
    fn regularization_lifts_minimum_by_eps() {
        let grid = Grid::new(64);
        let init = InitialData {
            stem: Field::from_fn(grid, |x| if x < 0.3 { 0.8 } else { 0.0 }),
            progenitor: Field::zeros(grid),
            enterocyte: Field::zeros(grid),
            goblet: Field::zeros(grid),
            butyrate: Field::zeros(grid),
        };
        let state = regularize_initial(&init, 0.01);
        assert!((state.total.min() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn config_rejects_large_dt_and_bad_eps() {
        let grid = Grid::new(8);
        let p = Parameters::default(); // q_inf = 1
        assert!(SchemeConfig::new(grid, 0.1, 2.0, 1.0, p.clone()).is_err());
        assert!(SchemeConfig::new(grid, 0.1, 1.0, 1.0, p.clone()).is_err()); // q_inf*dt = 1
        assert!(SchemeConfig::new(grid, 0.0, 1e-3, 1.0, p.clone()).is_err());
        assert!(SchemeConfig::new(grid, 1.0, 1e-3, 1.0, p.clone()).is_err());
        assert!(SchemeConfig::new(grid, 0.1, 1e-3, 1.0, p).is_ok());
    }

    #[test]
    fn constant_state_is_fixed_point_of_total_stage() {
        let grid = Grid::new(16);
        let cfg = SchemeConfig::new(grid, 0.1, 1e-3, 1.0, rate_free()).unwrap();
        let state = regularize_initial(&uniform_init(grid, 0.2, 0.2, 0.1, 0.1, 0.0), 0.1);
        let m_inf = cfg.params().m_inf_eps(0.6, 0.1);
        let (v, iters) = step_total_density(&state, &cfg, m_inf).unwrap();
        assert_eq!(iters, 1);
        for j in 0..16 {
            assert!((v[j] - state.total[j]).abs() < 1e-13);
        }
    }

    #[test]
    fn saturated_crowding_makes_reaction_inert() {
        // ρⁿ above the plateau everywhere and no e/g mass: the reaction is
        // independent of the iterate, so the second sweep confirms the first.
        let grid = Grid::new(32);
        let cfg = SchemeConfig::new(grid, 0.1, 1e-3, 1.0, Parameters::default()).unwrap();
        let m_bar = cfg.params().m_bar();
        let eps = cfg.eps();
        let total = Field::from_fn(grid, |x| m_bar + eps + 0.1 + 0.3 * x);
        let state = State {
            stem: Field::constant(grid, 0.5),
            progenitor: Field::constant(grid, 0.5),
            enterocyte: Field::zeros(grid),
            goblet: Field::zeros(grid),
            butyrate: Field::constant(grid, 0.2),
            total: total.clone(),
            time: 0.0,
        };
        let m_inf = cfg.params().m_inf_eps(total.max() - eps, eps);
        let (v, iters) = step_total_density(&state, &cfg, m_inf).unwrap();
        assert_eq!(iters, 2);
        assert!(v.min() >= eps - MAX_PRINCIPLE_TOL);
    }

    #[test]
    fn zero_species_with_no_inflow_stays_zero() {
        let grid = Grid::new(16);
        let cfg = SchemeConfig::new(grid, 0.05, 1e-3, 1.0, Parameters::default()).unwrap();
        let state = regularize_initial(&uniform_init(grid, 0.0, 0.0, 0.0, 0.0, 0.1), 0.05);
        let rho_new = Field::from_fn(grid, |x| 0.05 + 0.2 * x);
        let mut zero_state = state.clone();
        zero_state.stem = Field::zeros(grid);
        let v =
            step_partial_density(Species::Stem, &zero_state, &rho_new, None, &cfg).unwrap();
        assert!(v.linf() < 1e-14);
    }

    #[test]
    fn rate_free_uniform_advance_is_identity() {
        // no events and no butyrate production: the uniform state is an
        // exact stationary point of the full step
        let grid = Grid::new(20);
        let mut params = rate_free();
        params.gamma = 0.0;
        let cfg = SchemeConfig::new(grid, 0.1, 1e-3, 1.0, params).unwrap();
        let state = regularize_initial(&uniform_init(grid, 0.4, 0.3, 0.0, 0.0, 0.0), 0.1);
        let consts = RunConstants::from_initial_state(&state, cfg.params(), cfg.eps());
        let (next, report) = advance(&state, &cfg, &consts).unwrap();
        assert!(next.total.linf_diff(&state.total) < 1e-13);
        assert!(next.stem.linf_diff(&state.stem) < 1e-13);
        assert!(next.butyrate.linf() < 1e-15);
        assert!(report.max_principle_ok);
        assert!(report.energy_total_ok);
        assert_eq!(next.time, state.time + 1e-3);
    }

    #[test]
    fn rate_free_run_conserves_mass() {
        let grid = Grid::new(32);
        let cfg = SchemeConfig::new(grid, 0.1, 1e-3, 0.05, rate_free()).unwrap();
        let init = InitialData {
            stem: Field::from_fn(grid, |x| if x < 0.4 { 0.9 } else { 0.1 }),
            progenitor: Field::from_fn(grid, |x| 0.3 * (1.0 - x)),
            enterocyte: Field::from_fn(grid, |x| 0.2 * x),
            goblet: Field::zeros(grid),
            butyrate: Field::zeros(grid),
        };
        let out = run(&init, &cfg, &[]);
        assert!(out.failure.is_none());
        let mass0: f64 = out.total_history[0].iter().sum::<f64>() * grid.dx();
        for totals in &out.total_history {
            let mass: f64 = totals.iter().sum::<f64>() * grid.dx();
            assert!((mass - mass0).abs() < 1e-12);
        }
        for r in &out.reports {
            assert!(r.mass_residual.abs() < 1e-12);
        }
    }

    #[test]
    fn default_short_run_keeps_invariants() {
        let grid = Grid::new(50);
        let cfg = SchemeConfig::new(grid, 0.1, 1e-3, 0.05, Parameters::default()).unwrap();
        let init = InitialData {
            stem: Field::from_fn(grid, |x| if x < 0.3 { 0.8 } else { 0.0 }),
            progenitor: Field::from_fn(grid, |x| if (0.3..0.6).contains(&x) { 0.6 } else { 0.0 }),
            enterocyte: Field::from_fn(grid, |x| if x >= 0.6 { 0.4 } else { 0.0 }),
            goblet: Field::zeros(grid),
            butyrate: Field::from_fn(grid, |x| 0.4 * (1.0 - x)),
        };
        let out = run(&init, &cfg, &[]);
        assert!(out.failure.is_none(), "{:?}", out.failure);
        assert_eq!(out.reports.len(), 50);
        for r in &out.reports {
            assert!(r.max_principle_ok);
            assert!(r.min_partial >= -NONNEG_TOL);
            assert!(r.min_cb >= -NONNEG_TOL);
            assert!(r.energy_total_ok);
            assert!(r.energy_cb_ok);
            assert!(r.mass_residual.abs() <= diagnostics::MASS_TOL);
        }
        assert!(out.warnings.is_empty(), "{:?}", out.warnings);
    }

    #[test]
    fn concentration_heat_step_respects_maximum_principle() {
        // no production: a uniform concentration decays near the Dirichlet
        // end and never overshoots its previous maximum
        let grid = Grid::new(40);
        let params = Parameters { gamma: 0.0, ..Parameters::default() };
        let cfg = SchemeConfig::new(grid, 0.1, 1e-3, 1.0, params).unwrap();
        let state = regularize_initial(&uniform_init(grid, 0.25, 0.25, 0.25, 0.25, 1.0), 0.1);
        let zero = Field::zeros(grid);
        let c = step_concentration(&state, &zero, &zero, &cfg).unwrap();
        assert!(c.max() <= 1.0 + 1e-12);
        assert!(c.min() >= 0.0);
        assert!(c[39] < 1.0 - 1e-6, "no decay at the Dirichlet end: {}", c[39]);
        assert!(c[0] > c[39]);

        // zero stays zero without sources
        let c = step_concentration(
            &regularize_initial(&uniform_init(grid, 0.25, 0.25, 0.25, 0.25, 0.0), 0.1),
            &zero,
            &zero,
            &cfg,
        )
        .unwrap();
        assert!(c.linf() < 1e-15);
    }

    #[test]
    fn exhausted_picard_budget_surfaces_no_convergence() {
        let grid = Grid::new(30);
        let cfg = SchemeConfig::new(grid, 0.1, 1e-3, 1.0, Parameters::default())
            .unwrap()
            .with_picard(1e-18, 1)
            .unwrap();
        let init = InitialData {
            stem: Field::from_fn(grid, |x| 0.8 * (1.0 - x)),
            progenitor: Field::constant(grid, 0.2),
            enterocyte: Field::zeros(grid),
            goblet: Field::zeros(grid),
            butyrate: Field::zeros(grid),
        };
        let state = regularize_initial(&init, cfg.eps());
        let consts = RunConstants::from_initial_state(&state, cfg.params(), cfg.eps());
        let err = advance(&state, &cfg, &consts).unwrap_err();
        assert!(matches!(
            err,
            SchemeError::Solver(crate::solver::SolverError::NoConvergence { .. })
        ));

        // run keeps the partial trajectory and marks the failure
        let out = run(&init, &cfg, &[]);
        assert!(out.failure.is_some());
        assert!(out.reports.is_empty());
        assert_eq!(out.total_history.len(), 1);
    }

    #[test]
    fn enterocyte_goblet_solves_commute() {
        let grid = Grid::new(24);
        let cfg = SchemeConfig::new(grid, 0.1, 1e-3, 1.0, Parameters::default()).unwrap();
        let init = InitialData {
            stem: Field::from_fn(grid, |x| 0.5 * (1.0 - x)),
            progenitor: Field::constant(grid, 0.3),
            enterocyte: Field::from_fn(grid, |x| 0.2 * x),
            goblet: Field::from_fn(grid, |x| 0.1 * x),
            butyrate: Field::from_fn(grid, |x| 0.3 * (1.0 - x)),
        };
        let state = regularize_initial(&init, cfg.eps());
        let consts = RunConstants::from_initial_state(&state, cfg.params(), cfg.eps());
        let (rho_new, _) = step_total_density(&state, &cfg, consts.m_inf_eps).unwrap();
        let stem = step_partial_density(Species::Stem, &state, &rho_new, None, &cfg).unwrap();
        let prog =
            step_partial_density(Species::Progenitor, &state, &rho_new, Some(&stem), &cfg).unwrap();

        let e_first =
            step_partial_density(Species::Enterocyte, &state, &rho_new, Some(&prog), &cfg).unwrap();
        let g_first =
            step_partial_density(Species::Goblet, &state, &rho_new, Some(&prog), &cfg).unwrap();
        let g_swapped =
            step_partial_density(Species::Goblet, &state, &rho_new, Some(&prog), &cfg).unwrap();
        let e_swapped =
            step_partial_density(Species::Enterocyte, &state, &rho_new, Some(&prog), &cfg).unwrap();
        assert!(e_first.linf_diff(&e_swapped) < 1e-14);
        assert!(g_first.linf_diff(&g_swapped) < 1e-14);
    }

    #[test]
    fn rate_free_one_step_defect_is_second_order() {
        // without reactions the only gap between the total stage and the
        // summed species stages is the time lag of the advection
        // coefficient (ρⁿ vs Σρᵢ^{n+1}), so one step leaves an O(Δt²)
        // defect
        let grid = Grid::new(64);
        let init = InitialData {
            stem: Field::from_fn(grid, |x| 0.8 * (0.5 + 0.5 * (3.0 * x).cos())),
            progenitor: Field::from_fn(grid, |x| 0.5 * x),
            enterocyte: Field::from_fn(grid, |x| 0.3 * (1.0 - x)),
            goblet: Field::zeros(grid),
            butyrate: Field::zeros(grid),
        };
        let mut defects = Vec::new();
        for dt in [2e-3, 1e-3, 5e-4] {
            let cfg = SchemeConfig::new(grid, 0.1, dt, dt, rate_free()).unwrap();
            let out = run(&init, &cfg, &[]);
            assert!(out.failure.is_none());
            defects.push(out.reports[0].consistency_defect);
        }
        for pair in defects.windows(2) {
            let ratio = pair[0] / pair[1];
            assert!(ratio > 3.0, "defect ratio {ratio} below second order: {defects:?}");
        }
    }

    #[test]
    fn subtraction_recovery_zeroes_the_defect() {
        let grid = Grid::new(40);
        let cfg = SchemeConfig::new(grid, 0.1, 1e-3, 0.02, Parameters::default())
            .unwrap()
            .with_goblet_by_subtraction(true);
        let init = InitialData {
            stem: Field::from_fn(grid, |x| 0.6 * (1.0 - x)),
            progenitor: Field::constant(grid, 0.3),
            enterocyte: Field::from_fn(grid, |x| 0.3 * x),
            goblet: Field::from_fn(grid, |x| 0.2 * x),
            butyrate: Field::from_fn(grid, |x| 0.3 * (1.0 - x)),
        };
        let out = run(&init, &cfg, &[]);
        assert!(out.failure.is_none());
        for r in &out.reports {
            assert!(r.consistency_defect < 1e-12);
        }
    }

    #[test]
    fn truncation_debug_mode_is_inert_in_bounds() {
        let grid = Grid::new(30);
        let cfg = SchemeConfig::new(grid, 0.1, 1e-3, 0.01, Parameters::default())
            .unwrap()
            .with_debug_truncation(true);
        let init = InitialData {
            stem: Field::from_fn(grid, |x| 0.7 * (1.0 - x)),
            progenitor: Field::constant(grid, 0.2),
            enterocyte: Field::from_fn(grid, |x| 0.2 * x),
            goblet: Field::from_fn(grid, |x| 0.1 * x),
            butyrate: Field::from_fn(grid, |x| 0.2 * (1.0 - x)),
        };
        let out = run(&init, &cfg, &[]);
        assert!(out.failure.is_none());
        for r in &out.reports {
            assert!(r.truncation_gap < 1e-11, "gap {}", r.truncation_gap);
        }
    }

    #[test]
    fn zero_t_end_returns_initial_state_only() {
        let grid = Grid::new(8);
        let cfg = SchemeConfig::new(grid, 0.1, 1e-3, 0.0, Parameters::default()).unwrap();
        let out = run(&uniform_init(grid, 0.25, 0.25, 0.25, 0.25, 0.0), &cfg, &[]);
        assert_eq!(out.snapshots.len(), 1);
        assert_eq!(out.reports.len(), 0);
        assert_eq!(out.snapshots[0].time, 0.0);
    }
}
