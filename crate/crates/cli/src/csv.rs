//! CSV serialization of snapshots, per-step reports, and study tables.
//!
//! Floats are written as `{:.16e}` (17 significant digits), which
//! round-trips f64 exactly; outputs are deterministic for a fixed run.

use crypt_sim_core::{ConvergenceTable, Field, Grid, State, StepReport};
use std::io::{self, Write};
use std::path::Path;

pub const SNAPSHOT_HEADER: &str = "x,rho_s,rho_p,rho_e,rho_g,rho,c_b";

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn with_path(path: &Path, e: io::Error) -> io::Error {
    io::Error::new(e.kind(), format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> io::Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| with_path(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| with_path(path, e))
}

/// One row per cell: x, the four species densities, the total density, and
/// the butyrate concentration.
pub fn write_snapshot_csv(state: &State, path: &Path) -> io::Result<()> {
    let grid = state.total.grid();
    let mut s = String::from(SNAPSHOT_HEADER);
    s.push('\n');
    for j in 0..grid.n_cells() {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            num(grid.cell_center(j)),
            num(state.stem[j]),
            num(state.progenitor[j]),
            num(state.enterocyte[j]),
            num(state.goblet[j]),
            num(state.total[j]),
            num(state.butyrate[j]),
        ));
    }
    write_file(path, &s)
}

/// Reads a snapshot written by [`write_snapshot_csv`] back into a state.
pub fn read_snapshot_csv(path: &Path) -> io::Result<State> {
    let text = std::fs::read_to_string(path).map_err(|e| with_path(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != SNAPSHOT_HEADER {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("unexpected snapshot header `{header}`"),
        ));
    }
    let mut columns: [Vec<f64>; 6] = Default::default();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("row {} has {} columns, expected 7", i + 1, fields.len()),
            ));
        }
        for (col, slot) in fields[1..].iter().zip(columns.iter_mut()) {
            let v: f64 = col.parse().map_err(|e| {
                io::Error::new(io::ErrorKind::InvalidData, format!("row {}: {e}", i + 1))
            })?;
            slot.push(v);
        }
    }
    let grid = Grid::new(columns[0].len());
    let [stem, progenitor, enterocyte, goblet, total, butyrate] = columns;
    Ok(State {
        stem: Field::new(grid, stem),
        progenitor: Field::new(grid, progenitor),
        enterocyte: Field::new(grid, enterocyte),
        goblet: Field::new(grid, goblet),
        total: Field::new(grid, total),
        butyrate: Field::new(grid, butyrate),
        time: 0.0,
    })
}

pub const REPORTS_HEADER: &str = "step,time,picard_iters,min_rho,max_rho,min_partial,min_cb,\
max_principle_ok,nonneg_ok,energy_total_lhs,energy_total_rhs,energy_total_ok,\
energy_species_margin_s,energy_species_margin_p,energy_species_margin_e,energy_species_margin_g,\
energy_species_rhs_s,energy_species_rhs_p,energy_species_rhs_e,energy_species_rhs_g,\
energy_cb_lhs,energy_cb_rhs,energy_cb_ok,tv_w_s,tv_w_p,tv_w_e,tv_w_g,\
grad_rho_l2_sq,grad_cb_l2_sq,consistency_defect,mass_residual,truncation_gap";

/// One row per step with every report field.
pub fn write_reports_csv(reports: &[StepReport], path: &Path) -> io::Result<()> {
    let mut s = String::from(REPORTS_HEADER);
    s.push('\n');
    for (i, r) in reports.iter().enumerate() {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            i + 1,
            num(r.time),
            r.picard_iters,
            num(r.min_rho),
            num(r.max_rho),
            num(r.min_partial),
            num(r.min_cb),
            r.max_principle_ok,
            r.nonneg_ok,
            num(r.energy_total_lhs),
            num(r.energy_total_rhs),
            r.energy_total_ok,
            num(r.energy_species_margin[0]),
            num(r.energy_species_margin[1]),
            num(r.energy_species_margin[2]),
            num(r.energy_species_margin[3]),
            num(r.energy_species_rhs[0]),
            num(r.energy_species_rhs[1]),
            num(r.energy_species_rhs[2]),
            num(r.energy_species_rhs[3]),
            num(r.energy_cb_lhs),
            num(r.energy_cb_rhs),
            r.energy_cb_ok,
            num(r.tv_w[0]),
            num(r.tv_w[1]),
            num(r.tv_w[2]),
            num(r.tv_w[3]),
            num(r.grad_rho_l2_sq),
            num(r.grad_cb_l2_sq),
            num(r.consistency_defect),
            num(r.mass_residual),
            num(r.truncation_gap),
        ));
    }
    write_file(path, &s)
}

/// Study table: knob, error, pairwise order, failure note.
pub fn write_table_csv(table: &ConvergenceTable, path: &Path) -> io::Result<()> {
    let mut s = format!("{},error,order,note\n", table.knob_name);
    for row in &table.rows {
        s.push_str(&format!(
            "{},{},{},{}\n",
            num(row.knob),
            num(row.error),
            row.order.map(num).unwrap_or_default(),
            row.note.clone().unwrap_or_default(),
        ));
    }
    write_file(path, &s)
}
