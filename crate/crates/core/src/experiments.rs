//! Scenario library and study drivers.
//!
//! A [`Scenario`] supplies closed-form initial data sampled onto a grid.
//! The drivers realize the standard studies: the vanishing-viscosity sweep
//! (Cauchy differences between consecutive ε-runs in the space-time L²
//! norm), time-step and grid refinement against the finest run, and the
//! invariant suite used by the `check` command. Independent runs within a
//! sweep execute in parallel, capped by the `CRYPT_SIM_THREADS` environment
//! variable; aggregation is sorted by knob, so results are deterministic.

use crate::diagnostics;
use crate::grid::{Field, Grid};
use crate::model::Species;
use crate::scheme::{self, InitialData, RunOutput, SchemeConfig};
use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Mutex;

type Profile = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// Closed-form initial data: four species densities and the butyrate
/// concentration, each a function of x ∈ [0,1].
pub struct Scenario {
    name: String,
    stem: Profile,
    progenitor: Profile,
    enterocyte: Profile,
    goblet: Profile,
    butyrate: Profile,
}

impl fmt::Debug for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scenario").field("name", &self.name).finish()
    }
}

impl Scenario {
    pub fn new(
        name: impl Into<String>,
        stem: impl Fn(f64) -> f64 + Send + Sync + 'static,
        progenitor: impl Fn(f64) -> f64 + Send + Sync + 'static,
        enterocyte: impl Fn(f64) -> f64 + Send + Sync + 'static,
        goblet: impl Fn(f64) -> f64 + Send + Sync + 'static,
        butyrate: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Scenario {
            name: name.into(),
            stem: Box::new(stem),
            progenitor: Box::new(progenitor),
            enterocyte: Box::new(enterocyte),
            goblet: Box::new(goblet),
            butyrate: Box::new(butyrate),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Samples the profiles onto cell centers.
    pub fn sample(&self, grid: Grid) -> InitialData {
        InitialData {
            stem: Field::from_fn(grid, &self.stem),
            progenitor: Field::from_fn(grid, &self.progenitor),
            enterocyte: Field::from_fn(grid, &self.enterocyte),
            goblet: Field::from_fn(grid, &self.goblet),
            butyrate: Field::from_fn(grid, &self.butyrate),
        }
    }
}

/// Request for a scenario name that does not exist.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownScenario(pub String);

impl fmt::Display for UnknownScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown scenario `{}` (available: {})",
            self.0,
            BUILTIN_SCENARIOS.join(", ")
        )
    }
}

impl std::error::Error for UnknownScenario {}

/// Names accepted by [`builtin_scenario`].
pub const BUILTIN_SCENARIOS: [&str; 4] =
    ["crypt-default", "segregated-steps", "uniform-mix", "vacuum-bottom-only"];

/// Compactly supported cos² bump of unit height centered at `center`.
fn bump(x: f64, center: f64, width: f64) -> f64 {
    let d = (x - center).abs();
    if d >= width {
        0.0
    } else {
        let c = (std::f64::consts::FRAC_PI_2 * d / width).cos();
        c * c
    }
}

/// The built-in scenario library.
///
/// * `crypt-default` — smooth overlapping bumps: stem mass at the bottom,
///   progenitors in the middle, enterocytes and goblets near the top, a
///   linear butyrate profile vanishing at x = 1.
/// * `segregated-steps` — uniform total density with piecewise-constant
///   species fractions and three sharp interfaces (Σ TV(w⁰) = 6).
/// * `uniform-mix` — every fraction 1/4 at total density one.
/// * `vacuum-bottom-only` — a single stem bump near the bottom, everything
///   else empty; the unregularized total vanishes on most of the domain.
pub fn builtin_scenario(name: &str) -> Result<Scenario, UnknownScenario> {
    match name {
        "crypt-default" => Ok(Scenario::new(
            name,
            |x| 0.9 * bump(x, 0.10, 0.22),
            |x| 0.7 * bump(x, 0.45, 0.28),
            |x| 0.45 * bump(x, 0.78, 0.20),
            |x| 0.35 * bump(x, 0.84, 0.16),
            |x| 0.5 * (1.0 - x),
        )),
        "segregated-steps" => Ok(Scenario::new(
            name,
            |x| if x < 0.25 { 1.0 } else { 0.0 },
            |x| if (0.25..0.5).contains(&x) { 1.0 } else { 0.0 },
            |x| if (0.5..0.75).contains(&x) { 1.0 } else { 0.0 },
            |x| if x >= 0.75 { 1.0 } else { 0.0 },
            |x| 0.3 * (1.0 - x),
        )),
        "uniform-mix" => Ok(Scenario::new(
            name,
            |_| 0.25,
            |_| 0.25,
            |_| 0.25,
            |_| 0.25,
            |x| 0.2 * (1.0 - x),
        )),
        "vacuum-bottom-only" => Ok(Scenario::new(
            name,
            |x| 0.8 * bump(x, 0.15, 0.2),
            |_| 0.0,
            |_| 0.0,
            |_| 0.0,
            |_| 0.0,
        )),
        other => Err(UnknownScenario(other.to_string())),
    }
}

/// Runs one scenario through the scheme.
pub fn run_scenario(scenario: &Scenario, cfg: &SchemeConfig, output_times: &[f64]) -> RunOutput {
    scheme::run(&scenario.sample(cfg.grid()), cfg, output_times)
}

/// One row of a refinement or sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    /// The swept knob (ε, Δt, or dx).
    pub knob: f64,
    pub error: f64,
    /// log₂(e_prev / e_this) for successive halvings; None on the first row.
    pub order: Option<f64>,
    /// Failure marker for runs that did not finish.
    pub note: Option<String>,
}

/// Errors against a reference (or Cauchy differences) with pairwise orders.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    /// What the error measures, e.g. "rho" or "c_b".
    pub quantity: String,
    /// Name of the swept knob, e.g. "eps" or "dt".
    pub knob_name: String,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    fn from_errors(quantity: &str, knob_name: &str, data: Vec<(f64, f64)>) -> Self {
        let mut rows = Vec::with_capacity(data.len());
        for (i, &(knob, error)) in data.iter().enumerate() {
            let order = if i > 0 {
                let prev = data[i - 1].1;
                (prev > 0.0 && error > 0.0).then(|| (prev / error).log2())
            } else {
                None
            };
            rows.push(ConvergenceRow { knob, error, order, note: None });
        }
        ConvergenceTable { quantity: quantity.to_string(), knob_name: knob_name.to_string(), rows }
    }

    /// Least-squares slope of ln(error) against ln(knob) over the finite
    /// nonzero rows; None when fewer than two such rows exist.
    pub fn estimated_order(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.note.is_none() && r.error > 0.0 && r.error.is_finite())
            .map(|r| (r.knob.ln(), r.error.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        Some((n * sxy - sx * sy) / (n * sxx - sx * sx))
    }
}

/// Fingerprint of everything a sweep must hold fixed; rows of one study are
/// required to share it.
fn study_fingerprint(scenario: &Scenario, cfg: &SchemeConfig, skip_eps: bool, skip_dt: bool) -> u64 {
    let mut h = DefaultHasher::new();
    scenario.name.hash(&mut h);
    cfg.grid().n_cells().hash(&mut h);
    if !skip_eps {
        cfg.eps().to_bits().hash(&mut h);
    }
    if !skip_dt {
        cfg.dt().to_bits().hash(&mut h);
    }
    cfg.t_end().to_bits().hash(&mut h);
    cfg.picard_tol().to_bits().hash(&mut h);
    cfg.picard_max().hash(&mut h);
    cfg.goblet_by_subtraction().hash(&mut h);
    cfg.debug_truncation().hash(&mut h);
    let p = cfg.params();
    for q in [p.q_div_s, p.q_s_p, p.q_div_p, p.q_p_e, p.q_p_g, p.q_ex_e, p.q_ex_g] {
        q.to_bits().hash(&mut h);
    }
    for v in [p.sigma_b, p.gamma, p.c_b_d] {
        v.to_bits().hash(&mut h);
    }
    for ramp in [
        p.r_div_s,
        p.r_s_p,
        p.r_div_p,
        p.r_p_e,
        p.r_p_g,
        p.r_ex_e,
        p.r_ex_g,
        p.rbar_div_s,
        p.rbar_div_p,
        p.rbar_ex_e,
        p.rbar_ex_g,
        p.runder_div_s,
        p.runder_p_e,
        p.runder_p_g,
    ] {
        ramp.k.to_bits().hash(&mut h);
        ramp.kappa.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Worker cap for sweep parallelism: `CRYPT_SIM_THREADS` when set, machine
/// parallelism otherwise.
pub fn thread_cap() -> usize {
    std::env::var("CRYPT_SIM_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Applies `f` to every item, possibly in parallel; output order follows
/// input order.
fn map_parallel<T, O, F>(items: Vec<T>, f: F) -> Vec<O>
where
    T: Send,
    O: Send,
    F: Fn(T) -> O + Sync,
{
    let cap = thread_cap().min(items.len());
    if cap <= 1 {
        return items.into_iter().map(f).collect();
    }
    let queue = Mutex::new(items.into_iter().enumerate().collect::<Vec<_>>());
    let mut tagged: Vec<(usize, O)> = std::thread::scope(|s| {
        let workers: Vec<_> = (0..cap)
            .map(|_| {
                s.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let item = queue.lock().unwrap().pop();
                        match item {
                            Some((idx, t)) => local.push((idx, f(t))),
                            None => break,
                        }
                    }
                    local
                })
            })
            .collect();
        workers.into_iter().flat_map(|w| w.join().expect("sweep worker panicked")).collect()
    });
    tagged.sort_by_key(|(idx, _)| *idx);
    tagged.into_iter().map(|(_, out)| out).collect()
}

/// Space-time L² norm of the difference between two per-step histories on
/// one grid: sqrt(Δt·Σ_n dx·Σ_j diff²), summed over the post-step records.
fn spacetime_l2_diff(a: &[Vec<f64>], b: &[Vec<f64>], dt: f64, dx: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (ua, ub) in a.iter().zip(b).skip(1) {
        let mut cell = 0.0;
        for (x, y) in ua.iter().zip(ub) {
            let d = x - y;
            cell += d * d;
        }
        acc += dt * dx * cell;
    }
    acc.sqrt()
}

/// Vanishing-viscosity study: runs the scheme for each ε in the strictly
/// decreasing list and tabulates the space-time L² Cauchy differences
/// between consecutive runs. Failed runs mark their rows instead of
/// aborting the sweep.
pub fn viscosity_sweep(
    scenario: &Scenario,
    base_cfg: &SchemeConfig,
    eps_list: &[f64],
) -> ConvergenceTable {
    assert!(
        eps_list.windows(2).all(|w| w[0] > w[1]),
        "eps list must be strictly decreasing"
    );
    let fingerprint = study_fingerprint(scenario, base_cfg, true, false);

    let outputs = map_parallel(eps_list.to_vec(), |eps| {
        let cfg = base_cfg.clone().with_eps(eps)?;
        assert_eq!(study_fingerprint(scenario, &cfg, true, false), fingerprint);
        let out = run_scenario(scenario, &cfg, &[cfg.t_end()]);
        match out.failure {
            None => Ok(out.total_history),
            Some(e) => Err(e),
        }
    });

    let dx = base_cfg.grid().dx();
    let dt = base_cfg.dt();
    let mut rows = Vec::new();
    for (i, pair) in outputs.windows(2).enumerate() {
        let knob = eps_list[i];
        match (&pair[0], &pair[1]) {
            (Ok(a), Ok(b)) => {
                rows.push((knob, spacetime_l2_diff(a, b, dt, dx), None));
            }
            (ra, rb) => {
                let msg = ra
                    .as_ref()
                    .err()
                    .or(rb.as_ref().err())
                    .map(|e| e.to_string())
                    .unwrap_or_default();
                rows.push((knob, f64::NAN, Some(msg)));
            }
        }
    }

    let mut table = ConvergenceTable::from_errors(
        "rho (Cauchy difference)",
        "eps",
        rows.iter().map(|r| (r.0, r.1)).collect(),
    );
    for (row, (_, _, note)) in table.rows.iter_mut().zip(rows) {
        row.note = note;
    }
    table
}

/// Output of [`dt_refinement`]: final-time errors for ρ and c_b against the
/// finest run, plus the per-run maximum consistency defect.
#[derive(Debug, Clone)]
pub struct DtRefinement {
    pub rho: ConvergenceTable,
    pub butyrate: ConvergenceTable,
    pub defect: ConvergenceTable,
}

/// Time-step refinement: every Δt in the strictly decreasing list is run to
/// t_end; the last (finest) entry is the reference. Errors are spatial L²
/// norms at the final time.
pub fn dt_refinement(scenario: &Scenario, cfg: &SchemeConfig, dt_list: &[f64]) -> DtRefinement {
    assert!(dt_list.windows(2).all(|w| w[0] > w[1]), "dt list must be strictly decreasing");
    let fingerprint = study_fingerprint(scenario, cfg, false, true);

    let outputs = map_parallel(dt_list.to_vec(), |dt| {
        let run_cfg = cfg.clone().with_dt(dt)?;
        assert_eq!(study_fingerprint(scenario, &run_cfg, false, true), fingerprint);
        let out = run_scenario(scenario, &run_cfg, &[run_cfg.t_end()]);
        match out.failure {
            None => {
                let max_defect =
                    out.reports.iter().map(|r| r.consistency_defect).fold(0.0, f64::max);
                let last = out.snapshots.last().expect("final snapshot").clone();
                Ok((last, max_defect))
            }
            Some(e) => Err(e),
        }
    });

    let mut rho_rows = Vec::new();
    let mut cb_rows = Vec::new();
    let mut defect_rows = Vec::new();
    if let Some(Ok((reference, _))) = outputs.last() {
        for (i, out) in outputs.iter().enumerate().take(outputs.len() - 1) {
            let dt = dt_list[i];
            if let Ok((state, _)) = out {
                let e_rho = l2_diff(&state.total, &reference.total);
                let e_cb = l2_diff(&state.butyrate, &reference.butyrate);
                rho_rows.push((dt, e_rho));
                cb_rows.push((dt, e_cb));
            } else {
                rho_rows.push((dt, f64::NAN));
                cb_rows.push((dt, f64::NAN));
            }
        }
    }
    for (i, out) in outputs.iter().enumerate() {
        if let Ok((_, max_defect)) = out {
            defect_rows.push((dt_list[i], *max_defect));
        }
    }

    DtRefinement {
        rho: ConvergenceTable::from_errors("rho", "dt", rho_rows),
        butyrate: ConvergenceTable::from_errors("c_b", "dt", cb_rows),
        defect: ConvergenceTable::from_errors("defect", "dt", defect_rows),
    }
}

/// Output of [`grid_refinement`]: final-time errors for ρ and c_b against
/// the finest grid, restricted by cell averaging.
#[derive(Debug, Clone)]
pub struct GridRefinement {
    pub rho: ConvergenceTable,
    pub butyrate: ConvergenceTable,
}

/// Grid refinement: every N in the strictly increasing list runs to t_end;
/// the last (finest) entry is the reference, restricted onto each coarser
/// grid by averaging its nested cells. The knob tabulated is dx = 1/N.
pub fn grid_refinement(scenario: &Scenario, cfg: &SchemeConfig, n_list: &[usize]) -> GridRefinement {
    assert!(n_list.windows(2).all(|w| w[0] < w[1]), "n list must be strictly increasing");
    let reference_n = *n_list.last().expect("nonempty n list");
    for &n in n_list {
        assert!(reference_n.is_multiple_of(n), "coarse cells must nest in the reference grid");
    }

    let outputs = map_parallel(n_list.to_vec(), |n| {
        let run_cfg = cfg.clone().with_grid(Grid::new(n));
        let out = run_scenario(scenario, &run_cfg, &[run_cfg.t_end()]);
        match out.failure {
            None => Ok(out.snapshots.last().expect("final snapshot").clone()),
            Some(e) => Err(e),
        }
    });

    let mut rho_rows = Vec::new();
    let mut cb_rows = Vec::new();
    if let Some(Ok(reference)) = outputs.last() {
        for (i, out) in outputs.iter().enumerate().take(outputs.len() - 1) {
            let n = n_list[i];
            let dx = 1.0 / n as f64;
            if let Ok(state) = out {
                let rho_ref = restrict(&reference.total, n);
                let cb_ref = restrict(&reference.butyrate, n);
                rho_rows.push((dx, l2_diff(&state.total, &rho_ref)));
                cb_rows.push((dx, l2_diff(&state.butyrate, &cb_ref)));
            } else {
                rho_rows.push((dx, f64::NAN));
                cb_rows.push((dx, f64::NAN));
            }
        }
    }

    GridRefinement {
        rho: ConvergenceTable::from_errors("rho", "dx", rho_rows),
        butyrate: ConvergenceTable::from_errors("c_b", "dx", cb_rows),
    }
}

/// Cell-average restriction of a fine field onto a coarser nested grid.
fn restrict(fine: &Field, n_coarse: usize) -> Field {
    let ratio = fine.len() / n_coarse;
    assert_eq!(ratio * n_coarse, fine.len());
    let values = (0..n_coarse)
        .map(|j| fine.values()[j * ratio..(j + 1) * ratio].iter().sum::<f64>() / ratio as f64)
        .collect();
    Field::new(Grid::new(n_coarse), values)
}

/// Spatial L² norm of the difference of two same-grid fields.
fn l2_diff(a: &Field, b: &Field) -> f64 {
    assert_eq!(a.len(), b.len());
    let dx = a.grid().dx();
    (dx * a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>())
    .sqrt()
}

/// Outcome of running one built-in scenario through the invariant checks.
#[derive(Debug, Clone)]
pub struct SuiteScenarioReport {
    pub scenario: String,
    pub steps: usize,
    /// Steps violating a provable bound: the maximum principle, species or
    /// concentration nonnegativity, the asserted energy inequalities, or
    /// mass balance.
    pub hard_failures: usize,
    /// Monitored quantities outside their expected margins.
    pub soft_warnings: usize,
    pub max_picard_iters: usize,
    pub max_mass_residual: f64,
    pub max_defect: f64,
    pub max_tv_w_sum: f64,
    pub gradient_bound_ok: bool,
    /// Error text when the run aborted.
    pub failure: Option<String>,
}

/// Runs every built-in scenario with a fixed moderate configuration and
/// tallies invariant violations.
pub fn invariant_suite() -> Vec<SuiteScenarioReport> {
    let scenarios: Vec<Scenario> =
        BUILTIN_SCENARIOS.iter().map(|name| builtin_scenario(name).unwrap()).collect();
    map_parallel(scenarios, |scenario| {
        let cfg = SchemeConfig::new(
            Grid::new(100),
            0.1,
            1e-3,
            0.3,
            crate::model::Parameters::default(),
        )
        .expect("suite configuration is valid");
        let out = run_scenario(&scenario, &cfg, &[]);
        let mut hard = 0;
        let mut soft = 0;
        for r in &out.reports {
            let energy_species_ok = Species::ALL
                .iter()
                .all(|sp| r.energy_species_margin[sp.index()] >= -0.1 * r.energy_species_rhs[sp.index()]);
            if !(r.max_principle_ok
                && r.nonneg_ok
                && r.energy_total_ok
                && r.energy_cb_ok
                && r.mass_residual.abs() <= diagnostics::MASS_TOL)
            {
                hard += 1;
            }
            if !energy_species_ok {
                soft += 1;
            }
        }
        let gradient_bound_ok =
            diagnostics::gradient_bound_check(&out.reports, &cfg, &out.constants);
        if !gradient_bound_ok {
            soft += 1;
        }
        SuiteScenarioReport {
            scenario: scenario.name().to_string(),
            steps: out.reports.len(),
            hard_failures: hard,
            soft_warnings: soft + out.warnings.len(),
            max_picard_iters: out.reports.iter().map(|r| r.picard_iters).max().unwrap_or(0),
            max_mass_residual: out
                .reports
                .iter()
                .map(|r| r.mass_residual.abs())
                .fold(0.0, f64::max),
            max_defect: out.reports.iter().map(|r| r.consistency_defect).fold(0.0, f64::max),
            max_tv_w_sum: out
                .reports
                .iter()
                .map(|r| r.tv_w_sum())
                .fold(out.constants.tv_w0_sum, f64::max),
            gradient_bound_ok,
            failure: out.failure.map(|e| e.to_string()),
        }
    })
}
