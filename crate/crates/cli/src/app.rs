//! Subcommand implementations and the exit-code policy:
//! 0 success, 1 usage/parse, 2 validation, 3 solver failure, 4 invariant
//! violation in assert mode.

use crate::config::{load_config, print_config, ConfigError, RunConfig};
use crate::csv::{write_reports_csv, write_snapshot_csv, write_table_csv};
use crate::svg::write_profile_svg;
use clap::{Parser, Subcommand};
use crypt_sim_core::experiments::{
    self, dt_refinement, grid_refinement, invariant_suite, viscosity_sweep,
};
use crypt_sim_core::diagnostics;
use crypt_sim_core::{ConvergenceTable, SchemeError};
use std::fmt;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "crypt-sim",
    version,
    about = "1D finite-volume simulator for cell dynamics in intestinal crypts"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Simulate one scenario; write snapshots, step reports, and a profile chart
    Run {
        /// Configuration file (defaults apply when omitted)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory override
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Vanishing-viscosity sweep: Cauchy differences between consecutive runs
    SweepEps {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated strictly decreasing viscosities
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time-step refinement against the finest listed step
    RefineDt {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated strictly decreasing time steps; the last is the reference
        #[arg(long, value_delimiter = ',')]
        dt: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid refinement against the finest listed cell count
    RefineGrid {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated strictly increasing cell counts; each must divide the last
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suite over the built-in scenarios
    Check,
    /// Echo the effective configuration after defaults and file overrides
    PrintConfig {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Failure with its exit code.
#[derive(Debug)]
pub enum AppError {
    Usage(String),
    Validation(String),
    Solver(String),
    Invariant(String),
}

impl AppError {
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Usage(_) => 1,
            AppError::Validation(_) => 2,
            AppError::Solver(_) => 3,
            AppError::Invariant(_) => 4,
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Usage(m)
            | AppError::Validation(m)
            | AppError::Solver(m)
            | AppError::Invariant(m) => write!(f, "{m}"),
        }
    }
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Parse { .. } | ConfigError::Io { .. } => AppError::Usage(e.to_string()),
            ConfigError::Validation { .. } => AppError::Validation(e.to_string()),
        }
    }
}

impl From<SchemeError> for AppError {
    fn from(e: SchemeError) -> Self {
        match e {
            SchemeError::InvalidConfig { .. } => AppError::Validation(e.to_string()),
            SchemeError::Solver(_) => AppError::Solver(e.to_string()),
            SchemeError::InvariantViolation { .. } => AppError::Invariant(e.to_string()),
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Usage(format!("i/o failure: {e}"))
    }
}

fn effective_config(
    path: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<RunConfig, AppError> {
    let mut cfg = match path {
        Some(p) => load_config(&p)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = out {
        cfg.output_dir = dir;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Run { config, out } => cmd_run(effective_config(config, out)?),
        Command::SweepEps { config, eps, out } => {
            let mut cfg = effective_config(config, out)?;
            if let Some(list) = eps {
                cfg.sweep_eps = list;
            }
            cmd_sweep_eps(cfg)
        }
        Command::RefineDt { config, dt, out } => {
            let mut cfg = effective_config(config, out)?;
            if let Some(list) = dt {
                cfg.refine_dt = list;
            }
            cmd_refine_dt(cfg)
        }
        Command::RefineGrid { config, n, out } => {
            let mut cfg = effective_config(config, out)?;
            if let Some(list) = n {
                cfg.refine_n = list;
            }
            cmd_refine_grid(cfg)
        }
        Command::Check => cmd_check(),
        Command::PrintConfig { config } => {
            let cfg = effective_config(config, None)?;
            print!("{}", print_config(&cfg));
            Ok(())
        }
    }
}

fn cmd_run(cfg: RunConfig) -> Result<(), AppError> {
    let scenario = cfg.scenario()?;
    let scheme_cfg = cfg.scheme_config()?;
    let out = experiments::run_scenario(&scenario, &scheme_cfg, &cfg.snapshot_times);

    std::fs::create_dir_all(&cfg.output_dir)?;
    for (i, snapshot) in out.snapshots.iter().enumerate() {
        write_snapshot_csv(snapshot, &cfg.output_dir.join(format!("snapshot_{i:03}.csv")))?;
    }
    write_reports_csv(&out.reports, &cfg.output_dir.join("reports.csv"))?;
    if let Some(last) = out.snapshots.last() {
        write_profile_svg(last, &cfg.output_dir.join("profile.svg"))?;
    }

    println!(
        "scenario {}: {} steps, N = {}, eps = {}, dt = {}",
        scenario.name(),
        out.reports.len(),
        cfg.n_cells,
        cfg.eps,
        cfg.effective_dt()
    );
    println!(
        "bounds: rho in [{:.6}, {:.6}] (M_inf = {:.6}), max defect {:.3e}",
        out.reports.iter().map(|r| r.min_rho).fold(f64::INFINITY, f64::min),
        out.reports.iter().map(|r| r.max_rho).fold(0.0, f64::max),
        out.constants.m_inf_eps,
        out.reports.iter().map(|r| r.consistency_defect).fold(0.0, f64::max),
    );
    if !out.reports.is_empty() {
        let sup_tv = out
            .reports
            .iter()
            .map(|r| r.tv_w_sum())
            .fold(out.constants.tv_w0_sum, f64::max);
        let (st_rho, st_cb) = diagnostics::spacetime_grad_norms(&out.reports, scheme_cfg.dt());
        let tv_bound = diagnostics::gronwall_tv_surrogate(
            out.constants.tv_w0_sum,
            scheme_cfg.params(),
            scheme_cfg.t_end(),
            st_rho,
            st_cb,
        );
        println!("sup TV(w): {sup_tv:.4} (reference Gronwall bound {tv_bound:.3e})");
    }
    let mut warnings = out.warnings.clone();
    if !diagnostics::gradient_bound_check(&out.reports, &scheme_cfg, &out.constants) {
        warnings.push("total-density gradient exceeded its monitored bound".to_string());
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    println!("wrote {} snapshots + reports.csv + profile.svg to {}",
        out.snapshots.len(),
        cfg.output_dir.display()
    );

    if let Some(failure) = out.failure {
        return Err(failure.into());
    }
    if cfg.assert_monitored && !warnings.is_empty() {
        return Err(AppError::Invariant(format!(
            "{} monitored inequalities missed their margins (assert_monitored = true)",
            warnings.len()
        )));
    }
    Ok(())
}

fn print_table(table: &ConvergenceTable) {
    println!("{:>14} {:>16} {:>8}  {}", table.knob_name, "error", "order", table.quantity);
    for row in &table.rows {
        let order = row.order.map_or("      --".to_string(), |o| format!("{o:8.3}"));
        let note = row.note.as_deref().unwrap_or("");
        println!("{:>14.6e} {:>16.8e} {order}  {note}", row.knob, row.error);
    }
    if let Some(order) = table.estimated_order() {
        println!("{:>14} estimated order {order:.3}", "");
    }
}

fn table_failures(table: &ConvergenceTable) -> Option<String> {
    table.rows.iter().find_map(|r| r.note.clone())
}

fn cmd_sweep_eps(cfg: RunConfig) -> Result<(), AppError> {
    let list = &cfg.sweep_eps;
    if list.len() < 2 {
        return Err(AppError::Validation(format!(
            "sweep needs at least two viscosities, got {list:?}"
        )));
    }
    if !list.windows(2).all(|w| w[0] > w[1]) || !list.iter().all(|e| (0.0..1.0).contains(e) && *e > 0.0) {
        return Err(AppError::Validation(format!(
            "viscosities must be strictly decreasing within (0, 1): {list:?}"
        )));
    }
    let scenario = cfg.scenario()?;
    let scheme_cfg = cfg.scheme_config()?;
    let table = viscosity_sweep(&scenario, &scheme_cfg, list);
    std::fs::create_dir_all(&cfg.output_dir)?;
    write_table_csv(&table, &cfg.output_dir.join("sweep_eps.csv"))?;
    print_table(&table);
    if let Some(note) = table_failures(&table) {
        return Err(AppError::Solver(format!("a sweep run failed: {note}")));
    }
    Ok(())
}

fn cmd_refine_dt(cfg: RunConfig) -> Result<(), AppError> {
    let list = &cfg.refine_dt;
    if list.len() < 2 || !list.windows(2).all(|w| w[0] > w[1]) || !list.iter().all(|d| *d > 0.0) {
        return Err(AppError::Validation(format!(
            "dt list must hold at least two strictly decreasing positive steps: {list:?}"
        )));
    }
    let scenario = cfg.scenario()?;
    let scheme_cfg = cfg.scheme_config()?;
    let tables = dt_refinement(&scenario, &scheme_cfg, list);
    std::fs::create_dir_all(&cfg.output_dir)?;
    write_table_csv(&tables.rho, &cfg.output_dir.join("refine_dt_rho.csv"))?;
    write_table_csv(&tables.butyrate, &cfg.output_dir.join("refine_dt_cb.csv"))?;
    write_table_csv(&tables.defect, &cfg.output_dir.join("refine_dt_defect.csv"))?;
    print_table(&tables.rho);
    print_table(&tables.butyrate);
    print_table(&tables.defect);
    for t in [&tables.rho, &tables.butyrate, &tables.defect] {
        if let Some(note) = table_failures(t) {
            return Err(AppError::Solver(format!("a refinement run failed: {note}")));
        }
    }
    Ok(())
}

fn cmd_refine_grid(cfg: RunConfig) -> Result<(), AppError> {
    let list = &cfg.refine_n;
    let reference = *list.last().unwrap_or(&0);
    let shape_ok = list.len() >= 2
        && list.windows(2).all(|w| w[0] < w[1])
        && list.iter().all(|&n| n >= 2 && reference.is_multiple_of(n));
    if !shape_ok {
        return Err(AppError::Validation(format!(
            "n list must hold at least two increasing cell counts dividing the last: {list:?}"
        )));
    }
    let scenario = cfg.scenario()?;
    let scheme_cfg = cfg.scheme_config()?;
    let tables = grid_refinement(&scenario, &scheme_cfg, list);
    std::fs::create_dir_all(&cfg.output_dir)?;
    write_table_csv(&tables.rho, &cfg.output_dir.join("refine_grid_rho.csv"))?;
    write_table_csv(&tables.butyrate, &cfg.output_dir.join("refine_grid_cb.csv"))?;
    print_table(&tables.rho);
    print_table(&tables.butyrate);
    for t in [&tables.rho, &tables.butyrate] {
        if let Some(note) = table_failures(t) {
            return Err(AppError::Solver(format!("a refinement run failed: {note}")));
        }
    }
    Ok(())
}

fn cmd_check() -> Result<(), AppError> {
    let reports = invariant_suite();
    println!(
        "{:<20} {:>6} {:>6} {:>6} {:>8} {:>12} {:>12} {:>10} {:>6}",
        "scenario", "steps", "hard", "soft", "picard", "mass", "defect", "sup TV(w)", "grad"
    );
    let mut hard_total = 0;
    let mut aborted = false;
    for r in &reports {
        println!(
            "{:<20} {:>6} {:>6} {:>6} {:>8} {:>12.3e} {:>12.3e} {:>10.3} {:>6}",
            r.scenario,
            r.steps,
            r.hard_failures,
            r.soft_warnings,
            r.max_picard_iters,
            r.max_mass_residual,
            r.max_defect,
            r.max_tv_w_sum,
            if r.gradient_bound_ok { "ok" } else { "FAIL" },
        );
        if let Some(f) = &r.failure {
            println!("  aborted: {f}");
            aborted = true;
        }
        hard_total += r.hard_failures;
    }
    if hard_total > 0 || aborted {
        return Err(AppError::Invariant(format!(
            "{hard_total} hard invariant failures across {} scenarios",
            reports.len()
        )));
    }
    println!("all hard invariants hold across {} scenarios", reports.len());
    Ok(())
}
