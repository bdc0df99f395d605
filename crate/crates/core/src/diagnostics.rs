//! Discrete counterparts of the scheme's a-priori estimates.
//!
//! Each completed step is summarized in a [`StepReport`]: solution bounds,
//! the three per-stage energy inequalities, species-fraction total
//! variations, the defect between the evolved total density and the species
//! sum, and the mass-balance residual. The total-density and concentration
//! energy inequalities are provable for this discretization and are expected
//! to hold to rounding; the species inequality inherits an upwind-dependent
//! constant and is monitored rather than enforced.

use crate::grid::Field;
use crate::model::{Parameters, Species};
use crate::scheme::{RunConstants, SchemeConfig, State, MAX_PRINCIPLE_TOL, NONNEG_TOL};

/// Relative slack on the asserted energy inequalities.
pub const ENERGY_REL_SLACK: f64 = 1e-8;
/// Bound on the per-step mass-balance residual.
pub const MASS_TOL: f64 = 1e-10;
/// Absolute slack on the monitored gradient bound.
pub const GRADIENT_BOUND_SLACK: f64 = 1e-6;

/// Diagnostic record of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// Time after the step.
    pub time: f64,
    /// Fixed-point iterations taken by the total-density stage.
    pub picard_iters: usize,
    pub min_rho: f64,
    pub max_rho: f64,
    /// Smallest entry over the four species densities.
    pub min_partial: f64,
    pub min_cb: f64,
    pub max_principle_ok: bool,
    pub nonneg_ok: bool,
    pub energy_total_lhs: f64,
    pub energy_total_rhs: f64,
    pub energy_total_ok: bool,
    /// rhs − lhs of the species energy inequality, in s, p, e, g order.
    pub energy_species_margin: [f64; 4],
    pub energy_species_rhs: [f64; 4],
    pub energy_cb_lhs: f64,
    pub energy_cb_rhs: f64,
    pub energy_cb_ok: bool,
    /// TV of each species fraction w_i = ρ_i / Σ_j ρ_j.
    pub tv_w: [f64; 4],
    pub grad_rho_l2_sq: f64,
    /// Concentration gradient norm including the Dirichlet half-cell face.
    pub grad_cb_l2_sq: f64,
    /// ‖ρ^{n+1} − Σ_i ρ_i^{n+1}‖_∞.
    pub consistency_defect: f64,
    pub mass_residual: f64,
    /// Sup-norm gap of the truncated re-solve; zero unless the debug
    /// truncation mode is active and the bounds were live.
    pub truncation_gap: f64,
}

impl StepReport {
    pub fn tv_w_sum(&self) -> f64 {
        self.tv_w.iter().sum()
    }
}

/// Discrete total-density energy inequality:
/// ‖ρ^{n+1}‖² + 2εΔt‖∂ₓρ^{n+1}‖² ≤ ‖ρⁿ‖² + 8Δt q∞ (M∞^ε)²(1 + 2q∞Δt).
pub fn check_energy_total(
    rho_old: &Field,
    rho_new: &Field,
    cfg: &SchemeConfig,
    m_inf_eps: f64,
) -> (f64, f64, bool) {
    let (dt, q) = (cfg.dt(), cfg.params().q_inf());
    let lhs = rho_new.l2_norm_sq() + 2.0 * cfg.eps() * dt * rho_new.grad_norm_sq();
    let rhs = rho_old.l2_norm_sq()
        + 8.0 * dt * q * m_inf_eps * m_inf_eps * (1.0 + 2.0 * q * dt);
    (lhs, rhs, lhs <= rhs * (1.0 + ENERGY_REL_SLACK))
}

/// Discrete species energy inequality, returned as (rhs − lhs, rhs):
/// ‖ρᵢ^{n+1}‖² + εΔt‖∂ₓρᵢ^{n+1}‖² ≤ ‖ρᵢⁿ‖² + (Δt/ε)(M∞^ε)²‖∂ₓρ^{n+1}‖²
/// + 8q∞Δt (M∞^ε)²(1 + 2q∞Δt).
pub fn check_energy_partial(
    rho_i_old: &Field,
    rho_i_new: &Field,
    rho_new: &Field,
    cfg: &SchemeConfig,
    m_inf_eps: f64,
) -> (f64, f64) {
    let (dt, eps, q) = (cfg.dt(), cfg.eps(), cfg.params().q_inf());
    let m2 = m_inf_eps * m_inf_eps;
    let lhs = rho_i_new.l2_norm_sq() + eps * dt * rho_i_new.grad_norm_sq();
    let rhs = rho_i_old.l2_norm_sq()
        + dt / eps * m2 * rho_new.grad_norm_sq()
        + 8.0 * q * dt * m2 * (1.0 + 2.0 * q * dt);
    (rhs - lhs, rhs)
}

/// Discrete concentration energy inequality:
/// ‖c^{n+1}‖² + Δt σ_b‖∂ₓc^{n+1}‖² ≤ ‖cⁿ‖² + 2(Δt/σ_b)(M∞^ε γ)².
pub fn check_energy_concentration(
    cb_old: &Field,
    cb_new: &Field,
    cfg: &SchemeConfig,
    m_inf_eps: f64,
) -> (f64, f64, bool) {
    let p = cfg.params();
    let dt = cfg.dt();
    let lhs = cb_new.l2_norm_sq() + dt * p.sigma_b * dirichlet_grad_norm_sq(cb_new);
    let rhs = cb_old.l2_norm_sq()
        + 2.0 * dt / p.sigma_b * (m_inf_eps * p.gamma) * (m_inf_eps * p.gamma);
    (lhs, rhs, lhs <= rhs * (1.0 + ENERGY_REL_SLACK))
}

/// Squared gradient norm of a field vanishing at x = 1 in the half-cell
/// sense: interior faces carry dx·g², the boundary face at x = 1 carries
/// (dx/2)·((0 − c_{N−1})/(dx/2))².
pub fn dirichlet_grad_norm_sq(c: &Field) -> f64 {
    let n = c.len();
    let dx = c.grid().dx();
    let boundary = -c[n - 1] / (0.5 * dx);
    c.grad_norm_sq() + 0.5 * dx * boundary * boundary
}

/// Discrete Poincaré inequality ‖c‖² ≤ ½‖∂ₓc‖² for fields vanishing at the
/// Dirichlet end. Returns (lhs, rhs, ok) with a 10/N grid slack.
pub fn poincare_check(c: &Field) -> (f64, f64, bool) {
    let lhs = c.l2_norm_sq();
    let rhs = 0.5 * dirichlet_grad_norm_sq(c);
    let slack = 10.0 / c.len() as f64;
    (lhs, rhs, lhs <= rhs * (1.0 + slack))
}

/// Monitored gradient bound ‖∂ₓρ(t)‖² ≤ q∞²·T·M∞^ε + ‖∂ₓρ^{ε,0}‖² over a
/// whole trajectory.
pub fn gradient_bound_check(
    reports: &[StepReport],
    cfg: &SchemeConfig,
    consts: &RunConstants,
) -> bool {
    let q = cfg.params().q_inf();
    let bound =
        q * q * cfg.t_end() * consts.m_inf_eps + consts.grad_rho0_l2_sq + GRADIENT_BOUND_SLACK;
    reports.iter().all(|r| r.grad_rho_l2_sq <= bound)
}

/// Species fractions w_i = ρ_i / Σ_j ρ_j, in s, p, e, g order. The division
/// uses the species sum so the fractions add to one exactly; the scheme
/// keeps the sum within a consistency defect of the ε-bounded total.
pub fn weights(state: &State) -> [Field; 4] {
    let sum = state.species_sum();
    let grid = sum.grid();
    Species::ALL.map(|sp| {
        let rho_i = state.species(sp);
        Field::new(grid, (0..sum.len()).map(|j| rho_i[j] / sum[j]).collect())
    })
}

/// TV of each species fraction.
pub fn tv_weights(state: &State) -> [f64; 4] {
    weights(state).map(|w| w.tv())
}

/// ‖ρ^{n+1} − Σ_i ρ_i^{n+1}‖_∞.
pub fn consistency_defect(rho_new: &Field, partials: [&Field; 4]) -> f64 {
    let mut defect: f64 = 0.0;
    for j in 0..rho_new.len() {
        let sum = partials.iter().map(|p| p[j]).sum::<f64>();
        defect = defect.max((rho_new[j] - sum).abs());
    }
    defect
}

/// Mass-balance residual ∫ρ^{n+1} − ∫ρⁿ − Δt∫f with the reaction evaluated
/// as in the total-density stage (new total in the density slot, previous
/// species and concentration elsewhere). Exact flux telescoping makes this
/// a rounding-level quantity.
pub fn mass_residual(prev: &State, next: &State, cfg: &SchemeConfig) -> f64 {
    let grid = cfg.grid();
    let p = cfg.params();
    let mut source = 0.0;
    for j in 0..grid.n_cells() {
        source += p.total_source(
            grid.cell_center(j),
            next.total[j] - cfg.eps(),
            prev.stem[j],
            prev.progenitor[j],
            prev.enterocyte[j],
            prev.goblet[j],
            prev.butyrate[j],
        );
    }
    next.total.integrate() - prev.total.integrate() - cfg.dt() * grid.dx() * source
}

/// Space-time gradient norms ‖∂ₓρ‖ and ‖∂ₓc_b‖ over L²(Ω×(0,T)), from the
/// per-step records.
pub fn spacetime_grad_norms(reports: &[StepReport], dt: f64) -> (f64, f64) {
    let rho: f64 = reports.iter().map(|r| dt * r.grad_rho_l2_sq).sum();
    let cb: f64 = reports.iter().map(|r| dt * r.grad_cb_l2_sq).sum();
    (rho.sqrt(), cb.sqrt())
}

/// Gronwall-form reference bound on Σ_i TV(w_i):
/// (Σ_i TV(w_i⁰) + L)(1 + Cq∞T e^{Cq∞T}), with C the largest ramp Lipschitz
/// constant and L = √T(‖∂ₓρ‖ + ‖∂ₓc_b‖) + Cq∞T. Reported for reference; the
/// asserted property is the absence of blow-up as ε shrinks.
pub fn gronwall_tv_surrogate(
    tv_w0_sum: f64,
    params: &Parameters,
    t_end: f64,
    grad_rho_spacetime: f64,
    grad_cb_spacetime: f64,
) -> f64 {
    let c = params.max_ramp_lipschitz();
    let q = params.q_inf();
    let drift = c * q * t_end;
    let l = t_end.sqrt() * (grad_rho_spacetime + grad_cb_spacetime) + drift;
    (tv_w0_sum + l) * (1.0 + drift * drift.exp())
}

/// Fills the diagnostic record for the transition `prev` → `next`.
pub fn step_report(
    prev: &State,
    next: &State,
    cfg: &SchemeConfig,
    consts: &RunConstants,
    picard_iters: usize,
    truncation_gap: f64,
) -> StepReport {
    let m = consts.m_inf_eps;
    let (min_rho, max_rho) = (next.total.min(), next.total.max());
    let min_partial = Species::ALL.iter().map(|&sp| next.species(sp).min()).fold(f64::MAX, f64::min);
    let min_cb = next.butyrate.min();

    let (et_lhs, et_rhs, et_ok) = check_energy_total(&prev.total, &next.total, cfg, m);
    let mut species_margin = [0.0; 4];
    let mut species_rhs = [0.0; 4];
    for sp in Species::ALL {
        let (margin, rhs) =
            check_energy_partial(prev.species(sp), next.species(sp), &next.total, cfg, m);
        species_margin[sp.index()] = margin;
        species_rhs[sp.index()] = rhs;
    }
    let (cb_lhs, cb_rhs, cb_ok) =
        check_energy_concentration(&prev.butyrate, &next.butyrate, cfg, m);

    StepReport {
        time: next.time,
        picard_iters,
        min_rho,
        max_rho,
        min_partial,
        min_cb,
        max_principle_ok: min_rho >= cfg.eps() - MAX_PRINCIPLE_TOL
            && max_rho <= m + MAX_PRINCIPLE_TOL,
        nonneg_ok: min_partial >= -NONNEG_TOL && min_cb >= -NONNEG_TOL,
        energy_total_lhs: et_lhs,
        energy_total_rhs: et_rhs,
        energy_total_ok: et_ok,
        energy_species_margin: species_margin,
        energy_species_rhs: species_rhs,
        energy_cb_lhs: cb_lhs,
        energy_cb_rhs: cb_rhs,
        energy_cb_ok: cb_ok,
        tv_w: tv_weights(next),
        grad_rho_l2_sq: next.total.grad_norm_sq(),
        grad_cb_l2_sq: dirichlet_grad_norm_sq(&next.butyrate),
        consistency_defect: consistency_defect(
            &next.total,
            [&next.stem, &next.progenitor, &next.enterocyte, &next.goblet],
        ),
        mass_residual: mass_residual(prev, next, cfg),
        truncation_gap,
    }
}
