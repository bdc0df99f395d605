//! Self-contained SVG profile chart: the four species densities and the
//! butyrate concentration over x, as polylines in a fixed 800×500 viewport
//! with linear axes and a legend. No plotting dependency.

use crypt_sim_core::State;
use std::io::{self, Write};
use std::path::Path;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 660.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 460.0;

const SERIES: [(&str, &str); 5] = [
    ("rho_s", "#1f77b4"),
    ("rho_p", "#ff7f0e"),
    ("rho_e", "#2ca02c"),
    ("rho_g", "#d62728"),
    ("c_b", "#9467bd"),
];

fn polyline(field: &crypt_sim_core::Field, y_max: f64, color: &str) -> String {
    let grid = field.grid();
    let points: Vec<String> = (0..grid.n_cells())
        .map(|j| {
            let px = LEFT + grid.cell_center(j) * (RIGHT - LEFT);
            let py = BOTTOM - (field[j] / y_max).clamp(0.0, 1.0) * (BOTTOM - TOP);
            format!("{px:.2},{py:.2}")
        })
        .collect();
    format!(
        "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        points.join(" ")
    )
}

/// Renders the five unknowns of `state` to `path`.
pub fn write_profile_svg(state: &State, path: &Path) -> io::Result<()> {
    let fields =
        [&state.stem, &state.progenitor, &state.enterocyte, &state.goblet, &state.butyrate];
    let y_max = fields.iter().map(|f| f.max()).fold(1e-9_f64, f64::max) * 1.05;

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    s.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    // axes
    s.push_str(&format!(
        "  <line x1=\"{LEFT}\" y1=\"{BOTTOM}\" x2=\"{RIGHT}\" y2=\"{BOTTOM}\" stroke=\"black\"/>\n"
    ));
    s.push_str(&format!(
        "  <line x1=\"{LEFT}\" y1=\"{TOP}\" x2=\"{LEFT}\" y2=\"{BOTTOM}\" stroke=\"black\"/>\n"
    ));
    for i in 0..=4 {
        let frac = i as f64 / 4.0;
        let px = LEFT + frac * (RIGHT - LEFT);
        let py = BOTTOM - frac * (BOTTOM - TOP);
        s.push_str(&format!(
            "  <line x1=\"{px}\" y1=\"{BOTTOM}\" x2=\"{px}\" y2=\"{}\" stroke=\"black\"/>\n",
            BOTTOM + 4.0
        ));
        s.push_str(&format!(
            "  <text x=\"{px}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{frac}</text>\n",
            BOTTOM + 18.0
        ));
        s.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{py}\" x2=\"{LEFT}\" y2=\"{py}\" stroke=\"black\"/>\n",
            LEFT - 4.0
        ));
        s.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{:.3}</text>\n",
            LEFT - 8.0,
            py + 4.0,
            frac * y_max
        ));
    }
    s.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">x</text>\n",
        (LEFT + RIGHT) / 2.0,
        BOTTOM + 34.0
    ));
    s.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">t = {:.4}</text>\n",
        (LEFT + RIGHT) / 2.0,
        TOP - 10.0,
        state.time
    ));

    for (field, (_, color)) in fields.iter().zip(SERIES) {
        s.push_str(&polyline(field, y_max, color));
    }

    // legend
    for (i, (label, color)) in SERIES.iter().enumerate() {
        let ly = TOP + 20.0 + 22.0 * i as f64;
        s.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" \
             stroke-width=\"2\"/>\n",
            RIGHT + 20.0,
            RIGHT + 50.0
        ));
        s.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-size=\"12\">{label}</text>\n",
            RIGHT + 58.0,
            ly + 4.0
        ));
    }
    s.push_str("</svg>\n");

    let with_path =
        |e: io::Error| io::Error::new(e.kind(), format!("{}: {e}", path.display()));
    let mut f = std::fs::File::create(path).map_err(with_path)?;
    f.write_all(s.as_bytes()).map_err(with_path)
}
