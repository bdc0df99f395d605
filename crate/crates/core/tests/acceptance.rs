//! Acceptance suite: one test per pass/fail criterion, printed as a line.
//!
//! Run with `cargo test -p crypt-sim-core --test acceptance -- --nocapture`
//! to see the criterion lines on success.

mod common;

use crypt_sim_core::diagnostics::{
    self, gronwall_tv_surrogate, poincare_check, spacetime_grad_norms,
};
use crypt_sim_core::experiments::{builtin_scenario, dt_refinement, viscosity_sweep};
use crypt_sim_core::scheme::{MAX_PRINCIPLE_TOL, NONNEG_TOL};
use crypt_sim_core::{
    advance, Field, Grid, Parameters, RampSpec, RunConstants, RunOutput, SchemeConfig, Species,
    State,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::time::Instant;

const BASE_EPS: [f64; 2] = [0.1, 0.01];

/// The crypt-default production run shared by the first four criteria:
/// N = 200, dt = 1e−3, T = 1.
fn production_run(eps: f64) -> (RunOutput, SchemeConfig) {
    let cfg = SchemeConfig::new(Grid::new(200), eps, 1e-3, 1.0, Parameters::default())
        .expect("valid acceptance configuration");
    let scenario = builtin_scenario("crypt-default").unwrap();
    let out = crypt_sim_core::experiments::run_scenario(&scenario, &cfg, &[1.0]);
    assert!(out.failure.is_none(), "run failed: {:?}", out.failure);
    assert_eq!(out.reports.len(), 1000);
    (out, cfg)
}

#[test]
fn criterion_01_maximum_principle() {
    for eps in BASE_EPS {
        let start = Instant::now();
        let (out, _) = production_run(eps);
        let elapsed = start.elapsed();
        let m_inf = out.constants.m_inf_eps;
        for (i, r) in out.reports.iter().enumerate() {
            assert!(
                r.min_rho >= eps - MAX_PRINCIPLE_TOL,
                "step {i}: min rho {} below eps {eps}",
                r.min_rho
            );
            assert!(
                r.max_rho <= m_inf + MAX_PRINCIPLE_TOL,
                "step {i}: max rho {} above M_inf {m_inf}",
                r.max_rho
            );
        }
        assert!(elapsed.as_secs_f64() <= 10.0, "run took {elapsed:?}");
    }
    println!("criterion 01 maximum principle (eps 0.1, 0.01; 1000 steps each): PASS");
}

#[test]
fn criterion_02_nonnegativity() {
    for eps in BASE_EPS {
        let (out, _) = production_run(eps);
        for (i, r) in out.reports.iter().enumerate() {
            assert!(r.min_partial >= -NONNEG_TOL, "step {i}: species min {}", r.min_partial);
            assert!(r.min_cb >= -NONNEG_TOL, "step {i}: butyrate min {}", r.min_cb);
        }
    }
    println!("criterion 02 nonnegativity of species and butyrate: PASS");
}

#[test]
fn criterion_03_energy_inequalities() {
    let mut monitored_violations = 0usize;
    for eps in BASE_EPS {
        let (out, _) = production_run(eps);
        for (i, r) in out.reports.iter().enumerate() {
            assert!(
                r.energy_total_ok,
                "step {i}: total energy lhs {} rhs {}",
                r.energy_total_lhs, r.energy_total_rhs
            );
            assert!(
                r.energy_cb_ok,
                "step {i}: butyrate energy lhs {} rhs {}",
                r.energy_cb_lhs, r.energy_cb_rhs
            );
            for sp in Species::ALL {
                let (margin, rhs) =
                    (r.energy_species_margin[sp.index()], r.energy_species_rhs[sp.index()]);
                if margin < 0.0 {
                    monitored_violations += 1;
                    println!(
                        "  monitored: step {i} species {} margin {margin:.3e} (rhs {rhs:.3e})",
                        sp.label()
                    );
                }
                assert!(
                    margin >= -0.1 * rhs,
                    "step {i}: species {} energy violation beyond 10%",
                    sp.label()
                );
            }
        }
    }
    println!(
        "criterion 03 energy inequalities (total+butyrate asserted, species monitored, \
         {monitored_violations} logged): PASS"
    );
}

#[test]
fn criterion_04_mass_balance() {
    for eps in BASE_EPS {
        let (out, _) = production_run(eps);
        for (i, r) in out.reports.iter().enumerate() {
            assert!(
                r.mass_residual.abs() <= diagnostics::MASS_TOL,
                "step {i}: mass residual {}",
                r.mass_residual
            );
        }
    }
    println!("criterion 04 per-step mass balance within 1e-10: PASS");
}

#[test]
fn criterion_05_tv_boundedness() {
    let scenario = builtin_scenario("segregated-steps").unwrap();
    let mut sups = Vec::new();
    for eps in [0.1, 0.05, 0.025] {
        let cfg = SchemeConfig::new(Grid::new(200), eps, 1e-3, 1.0, Parameters::default())
            .unwrap();
        let out = crypt_sim_core::experiments::run_scenario(&scenario, &cfg, &[1.0]);
        assert!(out.failure.is_none());
        let sup = out
            .reports
            .iter()
            .map(|r| r.tv_w_sum())
            .fold(out.constants.tv_w0_sum, f64::max);
        let (st_rho, st_cb) = spacetime_grad_norms(&out.reports, cfg.dt());
        let bound = gronwall_tv_surrogate(
            out.constants.tv_w0_sum,
            cfg.params(),
            cfg.t_end(),
            st_rho,
            st_cb,
        );
        assert!(sup <= bound, "eps {eps}: sup TV {sup} exceeds Gronwall surrogate {bound}");
        sups.push(sup);
    }
    assert!(sups[1] <= 1.5 * sups[0], "TV grew from {} to {}", sups[0], sups[1]);
    assert!(sups[2] <= 1.5 * sups[0], "TV grew from {} to {}", sups[0], sups[2]);
    println!(
        "criterion 05 TV boundedness (sup TV at eps 0.1/0.05/0.025: \
         {:.3}/{:.3}/{:.3}): PASS",
        sups[0], sups[1], sups[2]
    );
}

#[test]
fn criterion_06_vanishing_viscosity_cauchy() {
    let scenario = builtin_scenario("crypt-default").unwrap();
    let cfg =
        SchemeConfig::new(Grid::new(200), 0.1, 1e-3, 1.0, Parameters::default()).unwrap();
    let table = viscosity_sweep(&scenario, &cfg, &[0.1, 0.05, 0.025, 0.0125]);
    assert_eq!(table.rows.len(), 3);
    for row in &table.rows {
        assert!(row.note.is_none(), "failed row: {:?}", row.note);
        assert!(row.error.is_finite() && row.error > 0.0);
    }
    assert!(
        table.rows[0].error > table.rows[1].error && table.rows[1].error > table.rows[2].error,
        "Cauchy differences not strictly decreasing: {:?}",
        table.rows.iter().map(|r| r.error).collect::<Vec<_>>()
    );
    println!(
        "criterion 06 vanishing-viscosity Cauchy differences strictly decreasing \
         ({:.4e} > {:.4e} > {:.4e}): PASS",
        table.rows[0].error, table.rows[1].error, table.rows[2].error
    );
}

fn refinement_tables() -> crypt_sim_core::experiments::DtRefinement {
    let scenario = builtin_scenario("crypt-default").unwrap();
    let cfg =
        SchemeConfig::new(Grid::new(200), 0.01, 4e-3, 0.5, Parameters::default()).unwrap();
    dt_refinement(&scenario, &cfg, &[4e-3, 2e-3, 1e-3, 5e-4, 2.5e-4])
}

#[test]
fn criterion_07_time_consistency() {
    let tables = refinement_tables();
    let rho_order = tables.rho.estimated_order().expect("rho order");
    let cb_order = tables.butyrate.estimated_order().expect("c_b order");
    assert!(rho_order >= 0.8, "rho order {rho_order}");
    assert!(cb_order >= 0.8, "c_b order {cb_order}");
    println!(
        "criterion 07 time consistency (estimated orders rho {rho_order:.2}, \
         c_b {cb_order:.2}): PASS"
    );
}

#[test]
fn criterion_08_consistency_defect() {
    let tables = refinement_tables();
    let defects: Vec<f64> = tables.defect.rows.iter().map(|r| r.error).collect();
    assert_eq!(defects.len(), 5);
    for pair in defects.windows(2) {
        assert!(pair[0] > pair[1], "defect not decreasing: {defects:?}");
    }
    let order = tables.defect.estimated_order().expect("defect order");
    assert!(order >= 0.8, "defect order {order} (defects {defects:?})");
    println!(
        "criterion 08 consistency defect shrinking under dt (order {order:.2}, \
         max {:.3e} at dt 4e-3): PASS",
        defects[0]
    );
}

#[test]
fn criterion_09_oracle_equivalence() {
    let mut rng = StdRng::seed_from_u64(90);
    let mut trials = 0;
    for n in [4usize, 8] {
        let grid = Grid::new(n);
        for trial in 0..60 {
            let eps = BASE_EPS[trial % 2];
            let cfg =
                SchemeConfig::new(grid, eps, 1e-3, 1.0, Parameters::default()).unwrap();
            let mut field = |hi: f64| {
                Field::new(grid, (0..n).map(|_| rng.random_range(0.0..hi)).collect::<Vec<_>>())
            };
            let stem = field(0.5);
            let progenitor = field(0.5);
            let enterocyte = field(0.5);
            let goblet = field(0.5);
            let butyrate = field(0.8);
            let total = Field::new(
                grid,
                (0..n)
                    .map(|j| stem[j] + progenitor[j] + enterocyte[j] + goblet[j] + eps)
                    .collect::<Vec<_>>(),
            );
            let state =
                State { stem, progenitor, enterocyte, goblet, butyrate, total, time: 0.0 };
            let rho0_sup = state.total.max() - eps;
            let consts = RunConstants {
                rho0_sup,
                m_inf_eps: cfg.params().m_inf_eps(rho0_sup, eps),
                grad_rho0_l2_sq: state.total.grad_norm_sq(),
                tv_w0_sum: 0.0,
            };

            let (next, _) = advance(&state, &cfg, &consts).expect("production step");
            let oracle = common::oracle_advance(&state, &cfg, eps);

            let compare = |got: &Field, want: &[f64], label: &str| {
                for j in 0..n {
                    assert!(
                        (got[j] - want[j]).abs() <= 1e-10,
                        "n {n} trial {trial} {label}[{j}]: {} vs {}",
                        got[j],
                        want[j]
                    );
                }
            };
            compare(&next.total, &oracle.total, "rho");
            compare(&next.stem, &oracle.stem, "rho_s");
            compare(&next.progenitor, &oracle.progenitor, "rho_p");
            compare(&next.enterocyte, &oracle.enterocyte, "rho_e");
            compare(&next.goblet, &oracle.goblet, "rho_g");
            compare(&next.butyrate, &oracle.butyrate, "c_b");
            trials += 1;
        }
    }
    println!("criterion 09 dense-oracle equivalence over {trials} randomized steps: PASS");
}

#[test]
fn criterion_10_ramp_exactness() {
    let mut rng = StdRng::seed_from_u64(100);
    let mut checks = 0usize;
    for _ in 0..100 {
        let k: f64 = rng.random_range(0.3..3.0);
        let kappa: f64 = rng.random_range(0.05..0.95) * k;
        let r = RampSpec::new(k, kappa);
        assert!(r.eval(k - kappa).abs() <= 1e-15);
        assert!((r.eval(k) - 0.5).abs() <= 1e-15);
        assert!((r.eval(k + kappa) - 1.0).abs() <= 1e-15);
        for _ in 0..100 {
            let a: f64 = rng.random_range(k - 2.0 * kappa..k + 2.0 * kappa);
            let b: f64 = rng.random_range(k - 2.0 * kappa..k + 2.0 * kappa);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            assert!(r.eval(lo) <= r.eval(hi) + 1e-15, "monotonicity at ({lo}, {hi})");
            let h: f64 = rng.random_range(-1e-3..1e-3) * kappa;
            let taylor_gap = (r.eval(a + h) - r.eval(a) - h * r.derivative(a)).abs();
            assert!(taylor_gap <= 2.0 / (kappa * kappa) * h * h, "C1 bound at {a}");
            checks += 2;
        }
    }
    assert!(checks >= 10_000);
    println!("criterion 10 ramp exactness and C1 regularity ({checks} sampled checks): PASS");
}

#[test]
fn criterion_11_discrete_poincare() {
    let grid = Grid::new(100);
    let linear = Field::from_fn(grid, |x| 1.0 - x);
    let (lhs, rhs, ok) = poincare_check(&linear);
    assert!(ok);
    assert!((lhs - 1.0 / 3.0).abs() <= 10.0 / 100.0, "lhs {lhs} vs 1/3");
    assert!((rhs - 0.5).abs() <= 10.0 / 100.0, "rhs {rhs} vs 1/2");

    let quadratic = Field::from_fn(grid, |x| (1.0 - x) * (1.0 - x));
    let (lhs, rhs, ok) = poincare_check(&quadratic);
    assert!(ok);
    assert!((lhs - 0.2).abs() <= 10.0 / 100.0, "lhs {lhs} vs 1/5");
    assert!((rhs - 2.0 / 3.0).abs() <= 10.0 / 100.0, "rhs {rhs} vs 2/3");
    println!("criterion 11 discrete Poincare on 1-x and (1-x)^2 at N=100: PASS");
}
