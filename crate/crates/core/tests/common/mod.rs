//! Dense-matrix reference implementation of one scheme step.
//!
//! Assembles the same discrete equations as the production stepper with
//! full N×N matrices, solves them by Gaussian elimination with partial
//! pivoting, and drives the nonlinear total-density stage with a long
//! fixed-point loop at tolerance 1e−14. Shares no solver code with the
//! library; used to pin the production path entrywise.

use crypt_sim_core::{Parameters, SchemeConfig, Species, State};

pub struct OracleStep {
    pub total: Vec<f64>,
    pub stem: Vec<f64>,
    pub progenitor: Vec<f64>,
    pub enterocyte: Vec<f64>,
    pub goblet: Vec<f64>,
    pub butyrate: Vec<f64>,
}

#[allow(clippy::needless_range_loop)]
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        assert!(a[col][col].abs() > 1e-300, "singular oracle matrix");
        for row in col + 1..n {
            let m = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= m * a[col][k];
            }
            b[row] -= m * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    x
}

fn face_gradients(u: &[f64], dx: f64) -> Vec<f64> {
    u.windows(2).map(|w| (w[1] - w[0]) / dx).collect()
}

/// Donor value for velocity u = −g.
fn donor(left: f64, right: f64, g: f64) -> f64 {
    if g < 0.0 {
        left
    } else if g > 0.0 {
        right
    } else {
        0.5 * (left + right)
    }
}

/// I + (dt/dx²)·stiffness with prescribed face coefficients, as a dense
/// matrix. Boundary faces carry no flux.
fn dense_diffusion(n: usize, dx: f64, dt: f64, face: &[f64]) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; n]; n];
    let r = dt / (dx * dx);
    for (j, row) in a.iter_mut().enumerate() {
        row[j] = 1.0;
    }
    for f in 0..n - 1 {
        a[f][f] += r * face[f];
        a[f][f + 1] -= r * face[f];
        a[f + 1][f + 1] += r * face[f];
        a[f + 1][f] -= r * face[f];
    }
    a
}

/// One reference step mirroring the production discretization.
pub fn oracle_advance(state: &State, cfg: &SchemeConfig, eps: f64) -> OracleStep {
    let grid = cfg.grid();
    let n = grid.n_cells();
    let dx = grid.dx();
    let dt = cfg.dt();
    let p: &Parameters = cfg.params();
    let x: Vec<f64> = (0..n).map(|j| grid.cell_center(j)).collect();

    let rho_n: Vec<f64> = state.total.values().to_vec();
    let g_old = face_gradients(&rho_n, dx);
    let face: Vec<f64> =
        (0..n - 1).map(|f| eps + donor(rho_n[f], rho_n[f + 1], g_old[f])).collect();
    let a_total = dense_diffusion(n, dx, dt, &face);

    // nonlinear total stage: long fixed point at tight tolerance
    let mut v = rho_n.clone();
    for _ in 0..200 {
        let mut rhs = vec![0.0; n];
        for j in 0..n {
            rhs[j] = rho_n[j]
                + dt * p.total_source(
                    x[j],
                    v[j] - eps,
                    state.stem[j],
                    state.progenitor[j],
                    state.enterocyte[j],
                    state.goblet[j],
                    state.butyrate[j],
                );
        }
        let next = gauss_solve(a_total.clone(), rhs);
        let delta =
            next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        v = next;
        if delta <= 1e-14 {
            break;
        }
    }
    let total = v;

    // species stages in dependency order
    let g_new = face_gradients(&total, dx);
    let mut species_solution: [Vec<f64>; 4] = [vec![], vec![], vec![], vec![]];
    for sp in Species::ALL {
        let mut a = dense_diffusion(n, dx, dt, &vec![eps; n - 1]);
        for (f, &g) in g_new.iter().enumerate() {
            let u = -g;
            let c = dt * u / dx;
            if u > 0.0 {
                a[f][f] += c;
                a[f + 1][f] -= c;
            } else if u < 0.0 {
                a[f][f + 1] += c;
                a[f + 1][f + 1] -= c;
            }
        }
        let mut rhs = vec![0.0; n];
        for j in 0..n {
            a[j][j] -= dt * p.self_rate(sp, x[j], total[j] - eps, state.butyrate[j]);
            let donor_density = match sp {
                Species::Stem => 0.0,
                Species::Progenitor => species_solution[0][j],
                Species::Enterocyte | Species::Goblet => species_solution[1][j],
            };
            rhs[j] = state.species(sp)[j]
                + dt * p.transfer_gain(sp, x[j], state.butyrate[j], donor_density);
        }
        species_solution[sp.index()] = gauss_solve(a, rhs);
    }

    // butyrate stage with the half-cell Dirichlet closure at x = 1
    let mut a = dense_diffusion(n, dx, dt, &vec![p.sigma_b; n - 1]);
    a[n - 1][n - 1] += dt * p.sigma_b * 2.0 / (dx * dx);
    let mut rhs = vec![0.0; n];
    for j in 0..n {
        let cb = state.butyrate[j];
        rhs[j] = cb
            + p.gamma
                * dt
                * ((cb + p.c_b_d) / (1.0 + cb + p.c_b_d))
                * (species_solution[2][j] + species_solution[3][j]);
    }
    let butyrate = gauss_solve(a, rhs);

    let [stem, progenitor, enterocyte, goblet] = species_solution;
    OracleStep { total, stem, progenitor, enterocyte, goblet, butyrate }
}
