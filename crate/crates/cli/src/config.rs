//! Line-oriented run configuration: `key = value` pairs with an optional
//! `[params]` section for model constants, `#`-prefixed comment lines, and
//! unknown keys rejected. `print_config` emits the effective configuration
//! in the same format, so its output parses back to itself.

use crypt_sim_core::experiments::{builtin_scenario, Scenario};
use crypt_sim_core::{Parameters, RampSpec, SchemeConfig, SchemeError};
use std::fmt;
use std::path::{Path, PathBuf};

/// Everything a CLI invocation needs: scenario, scheme knobs, parameter
/// overrides, output destination, and study lists.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: String,
    pub n_cells: usize,
    pub eps: f64,
    /// None picks min(1e−3, 0.5/q∞) once the parameters are known.
    pub dt: Option<f64>,
    pub t_end: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub output_dir: PathBuf,
    /// Snapshot times; empty means initial and final states.
    pub snapshot_times: Vec<f64>,
    pub goblet_by_subtraction: bool,
    pub debug_truncation: bool,
    /// When set, monitored inequalities outside their margins fail the run
    /// (exit code 4) instead of warning.
    pub assert_monitored: bool,
    pub sweep_eps: Vec<f64>,
    pub refine_dt: Vec<f64>,
    pub refine_n: Vec<usize>,
    pub params: Parameters,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: "crypt-default".to_string(),
            n_cells: 200,
            eps: 0.1,
            dt: None,
            t_end: 1.0,
            picard_tol: 1e-10,
            picard_max: 100,
            output_dir: PathBuf::from("out"),
            snapshot_times: Vec::new(),
            goblet_by_subtraction: false,
            debug_truncation: false,
            assert_monitored: false,
            sweep_eps: vec![0.1, 0.05, 0.025, 0.0125],
            refine_dt: vec![4e-3, 2e-3, 1e-3, 5e-4, 2.5e-4],
            refine_n: vec![25, 50, 100, 200],
            params: Parameters::default(),
        }
    }
}

impl RunConfig {
    pub fn effective_dt(&self) -> f64 {
        self.dt.unwrap_or_else(|| SchemeConfig::default_dt(&self.params))
    }

    /// Builds the validated scheme configuration.
    pub fn scheme_config(&self) -> Result<SchemeConfig, ConfigError> {
        self.params.validate().map_err(|e| ConfigError::Validation {
            message: e.message().to_string(),
        })?;
        let cfg = SchemeConfig::new(
            crypt_sim_core::Grid::new(self.n_cells),
            self.eps,
            self.effective_dt(),
            self.t_end,
            self.params.clone(),
        )
        .and_then(|c| c.with_picard(self.picard_tol, self.picard_max))
        .map_err(|e| match e {
            SchemeError::InvalidConfig { message } => ConfigError::Validation { message },
            other => ConfigError::Validation { message: other.to_string() },
        })?;
        Ok(cfg
            .with_goblet_by_subtraction(self.goblet_by_subtraction)
            .with_debug_truncation(self.debug_truncation))
    }

    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        builtin_scenario(&self.scenario)
            .map_err(|e| ConfigError::Validation { message: e.to_string() })
    }

    /// Full validation: parameters, scheme invariants, scenario existence.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scheme_config()?;
        self.scenario()?;
        if self.n_cells < 2 {
            return Err(ConfigError::Validation {
                message: format!("n_cells = {} must be at least 2", self.n_cells),
            });
        }
        Ok(())
    }
}

/// Configuration failure: malformed text, a violated invariant, or I/O.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Parse { line: usize, column: usize, message: String },
    Validation { message: String },
    Io { path: PathBuf, message: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse { line, column, message } => {
                write!(f, "config parse error at line {line}, column {column}: {message}")
            }
            ConfigError::Validation { message } => write!(f, "invalid config: {message}"),
            ConfigError::Io { path, message } => {
                write!(f, "cannot read config {}: {message}", path.display())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Parse { line, column, message: message.into() }
}

/// Parses configuration text over the defaults and validates the result.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut section = Section::Top;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let col = raw.len() - raw.trim_start().len() + 1;
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| parse_err(line_no, col, "unterminated section header"))?;
            section = match name.trim() {
                "params" => Section::Params,
                other => {
                    return Err(parse_err(line_no, col, format!("unknown section `[{other}]`")))
                }
            };
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(line_no, col, "expected `key = value`"))?;
        let key = key.trim();
        let value = value.trim();
        let value_col = col + raw.trim_start().find('=').unwrap_or(0) + 1;
        match section {
            Section::Top => apply_top(&mut cfg, key, value, line_no, col, value_col)?,
            Section::Params => apply_param(&mut cfg.params, key, value, line_no, col, value_col)?,
        }
    }

    cfg.validate()?;
    Ok(cfg)
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_config(&text)
}

enum Section {
    Top,
    Params,
}

fn parse_f64(value: &str, line: usize, column: usize) -> Result<f64, ConfigError> {
    value
        .parse::<f64>()
        .map_err(|_| parse_err(line, column, format!("`{value}` is not a number")))
}

fn parse_usize(value: &str, line: usize, column: usize) -> Result<usize, ConfigError> {
    value
        .parse::<usize>()
        .map_err(|_| parse_err(line, column, format!("`{value}` is not a nonnegative integer")))
}

fn parse_bool(value: &str, line: usize, column: usize) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(parse_err(line, column, format!("`{value}` is not `true` or `false`"))),
    }
}

fn parse_f64_list(value: &str, line: usize, column: usize) -> Result<Vec<f64>, ConfigError> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_f64(v.trim(), line, column)).collect()
}

fn parse_usize_list(value: &str, line: usize, column: usize) -> Result<Vec<usize>, ConfigError> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_usize(v.trim(), line, column)).collect()
}

fn apply_top(
    cfg: &mut RunConfig,
    key: &str,
    value: &str,
    line: usize,
    col: usize,
    vcol: usize,
) -> Result<(), ConfigError> {
    match key {
        "scenario" => cfg.scenario = value.to_string(),
        "n_cells" => cfg.n_cells = parse_usize(value, line, vcol)?,
        "eps" => cfg.eps = parse_f64(value, line, vcol)?,
        "dt" => cfg.dt = Some(parse_f64(value, line, vcol)?),
        "t_end" => cfg.t_end = parse_f64(value, line, vcol)?,
        "picard_tol" => cfg.picard_tol = parse_f64(value, line, vcol)?,
        "picard_max" => cfg.picard_max = parse_usize(value, line, vcol)?,
        "output_dir" => cfg.output_dir = PathBuf::from(value),
        "snapshot_times" => cfg.snapshot_times = parse_f64_list(value, line, vcol)?,
        "goblet_by_subtraction" => cfg.goblet_by_subtraction = parse_bool(value, line, vcol)?,
        "debug_truncation" => cfg.debug_truncation = parse_bool(value, line, vcol)?,
        "assert_monitored" => cfg.assert_monitored = parse_bool(value, line, vcol)?,
        "sweep_eps" => cfg.sweep_eps = parse_f64_list(value, line, vcol)?,
        "refine_dt" => cfg.refine_dt = parse_f64_list(value, line, vcol)?,
        "refine_n" => cfg.refine_n = parse_usize_list(value, line, vcol)?,
        other => return Err(parse_err(line, col, format!("unknown key `{other}`"))),
    }
    Ok(())
}

fn ramp_field<'p>(params: &'p mut Parameters, name: &str) -> Option<&'p mut RampSpec> {
    Some(match name {
        "r_div_s" => &mut params.r_div_s,
        "r_s_p" => &mut params.r_s_p,
        "r_div_p" => &mut params.r_div_p,
        "r_p_e" => &mut params.r_p_e,
        "r_p_g" => &mut params.r_p_g,
        "r_ex_e" => &mut params.r_ex_e,
        "r_ex_g" => &mut params.r_ex_g,
        "rbar_div_s" => &mut params.rbar_div_s,
        "rbar_div_p" => &mut params.rbar_div_p,
        "rbar_ex_e" => &mut params.rbar_ex_e,
        "rbar_ex_g" => &mut params.rbar_ex_g,
        "runder_div_s" => &mut params.runder_div_s,
        "runder_p_e" => &mut params.runder_p_e,
        "runder_p_g" => &mut params.runder_p_g,
        _ => return None,
    })
}

fn apply_param(
    params: &mut Parameters,
    key: &str,
    value: &str,
    line: usize,
    col: usize,
    vcol: usize,
) -> Result<(), ConfigError> {
    if let Some((ramp_name, component)) = key.split_once('.') {
        let ramp = ramp_field(params, ramp_name.trim())
            .ok_or_else(|| parse_err(line, col, format!("unknown ramp `{ramp_name}`")))?;
        match component.trim() {
            "k" => ramp.k = parse_f64(value, line, vcol)?,
            "kappa" => ramp.kappa = parse_f64(value, line, vcol)?,
            other => {
                return Err(parse_err(
                    line,
                    col,
                    format!("unknown ramp component `{other}` (use `.k` or `.kappa`)"),
                ))
            }
        }
        return Ok(());
    }
    match key {
        "q_div_s" => params.q_div_s = parse_f64(value, line, vcol)?,
        "q_s_p" => params.q_s_p = parse_f64(value, line, vcol)?,
        "q_div_p" => params.q_div_p = parse_f64(value, line, vcol)?,
        "q_p_e" => params.q_p_e = parse_f64(value, line, vcol)?,
        "q_p_g" => params.q_p_g = parse_f64(value, line, vcol)?,
        "q_ex_e" => params.q_ex_e = parse_f64(value, line, vcol)?,
        "q_ex_g" => params.q_ex_g = parse_f64(value, line, vcol)?,
        "sigma_b" => params.sigma_b = parse_f64(value, line, vcol)?,
        "gamma" => params.gamma = parse_f64(value, line, vcol)?,
        "c_b_d" => params.c_b_d = parse_f64(value, line, vcol)?,
        other => return Err(parse_err(line, col, format!("unknown key `{other}` in [params]"))),
    }
    Ok(())
}

fn join_f64(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

fn join_usize(values: &[usize]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

/// Renders the effective configuration in the accepted format; parsing the
/// output reproduces the configuration.
pub fn print_config(cfg: &RunConfig) -> String {
    let p = &cfg.params;
    let mut s = String::new();
    s.push_str(&format!("scenario = {}\n", cfg.scenario));
    s.push_str(&format!("n_cells = {}\n", cfg.n_cells));
    s.push_str(&format!("eps = {}\n", cfg.eps));
    s.push_str(&format!("dt = {}\n", cfg.effective_dt()));
    s.push_str(&format!("t_end = {}\n", cfg.t_end));
    s.push_str(&format!("picard_tol = {}\n", cfg.picard_tol));
    s.push_str(&format!("picard_max = {}\n", cfg.picard_max));
    s.push_str(&format!("output_dir = {}\n", cfg.output_dir.display()));
    s.push_str(&format!("snapshot_times = {}\n", join_f64(&cfg.snapshot_times)));
    s.push_str(&format!("goblet_by_subtraction = {}\n", cfg.goblet_by_subtraction));
    s.push_str(&format!("debug_truncation = {}\n", cfg.debug_truncation));
    s.push_str(&format!("assert_monitored = {}\n", cfg.assert_monitored));
    s.push_str(&format!("sweep_eps = {}\n", join_f64(&cfg.sweep_eps)));
    s.push_str(&format!("refine_dt = {}\n", join_f64(&cfg.refine_dt)));
    s.push_str(&format!("refine_n = {}\n", join_usize(&cfg.refine_n)));
    s.push_str("\n[params]\n");
    for (name, q) in [
        ("q_div_s", p.q_div_s),
        ("q_s_p", p.q_s_p),
        ("q_div_p", p.q_div_p),
        ("q_p_e", p.q_p_e),
        ("q_p_g", p.q_p_g),
        ("q_ex_e", p.q_ex_e),
        ("q_ex_g", p.q_ex_g),
        ("sigma_b", p.sigma_b),
        ("gamma", p.gamma),
        ("c_b_d", p.c_b_d),
    ] {
        s.push_str(&format!("{name} = {q}\n"));
    }
    for (name, ramp) in [
        ("r_div_s", p.r_div_s),
        ("r_s_p", p.r_s_p),
        ("r_div_p", p.r_div_p),
        ("r_p_e", p.r_p_e),
        ("r_p_g", p.r_p_g),
        ("r_ex_e", p.r_ex_e),
        ("r_ex_g", p.r_ex_g),
        ("rbar_div_s", p.rbar_div_s),
        ("rbar_div_p", p.rbar_div_p),
        ("rbar_ex_e", p.rbar_ex_e),
        ("rbar_ex_g", p.rbar_ex_g),
        ("runder_div_s", p.runder_div_s),
        ("runder_p_e", p.runder_p_e),
        ("runder_p_g", p.runder_p_g),
    ] {
        s.push_str(&format!("{name}.k = {}\n", ramp.k));
        s.push_str(&format!("{name}.kappa = {}\n", ramp.kappa));
    }
    s
}
