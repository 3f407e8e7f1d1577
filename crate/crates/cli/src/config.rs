//! Settings from the config file and the command line. Flags given on the
//! command line win over the file; the file wins over built-in defaults.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use qnnv_core::domain::{Domain, TableConfig};
use qnnv_core::pipeline::VerifyOptions;
use qnnv_core::smt::SolverConfig;
use qnnv_core::{FxpFormat, RoundingMode};
use serde::Deserialize;

use crate::args::Global;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    /// `Q<k>.<l>`, `float32` or `real`.
    pub domain: Option<String>,
    pub rounding: Option<String>,
    pub epsilon: Option<f64>,
    pub cutoff: Option<f64>,
    pub grid_step: Option<f64>,
    pub solver: Option<PathBuf>,
    pub solver_args: Option<Vec<String>>,
    pub timeout: Option<f64>,
    pub workers: Option<usize>,
    pub simplify: Option<bool>,
    pub slice: Option<bool>,
    pub balance: Option<bool>,
    pub intervals: Option<bool>,
    pub unsafe_balance: Option<bool>,
    pub both_bounds: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub domain: Domain,
    pub rounding: RoundingMode,
    pub workers: usize,
    pub options: VerifyOptions,
    pub json: bool,
}

/// Finite and above zero; false for NaN.
fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

pub fn parse_domain(s: &str, rounding: RoundingMode) -> Result<Domain> {
    Ok(match s.trim().to_ascii_lowercase().as_str() {
        "real" => Domain::Real,
        "float32" | "f32" => Domain::Float32,
        other => Domain::fixed(other.parse::<FxpFormat>()?, rounding),
    })
}

impl Settings {
    pub fn resolve(g: &Global) -> Result<Settings> {
        let file = match &g.config {
            Some(p) => FileConfig::load(p)?,
            None if Path::new("qnnv.toml").exists() => FileConfig::load(Path::new("qnnv.toml"))?,
            None => FileConfig::default(),
        };
        let rounding: RoundingMode = match g.rounding.as_ref().or(file.rounding.as_ref()) {
            Some(r) => r.parse()?,
            None => RoundingMode::default(),
        };
        let domain = if let Some(f) = &g.fxp {
            Domain::fixed(f.parse::<FxpFormat>()?, rounding)
        } else if g.float32 {
            Domain::Float32
        } else if g.real {
            Domain::Real
        } else if let Some(d) = &file.domain {
            parse_domain(d, rounding)?
        } else {
            Domain::Real
        };
        let defaults = TableConfig::default();
        let tables = TableConfig {
            epsilon: g.epsilon.or(file.epsilon).unwrap_or(defaults.epsilon),
            cutoff: g.cutoff.or(file.cutoff).unwrap_or(defaults.cutoff),
            grid_step: g.grid_step.or(file.grid_step),
        };
        if tables.grid_step.is_some_and(|s| !positive(s)) {
            bail!("grid step must be positive");
        }
        if !positive(tables.epsilon) || !positive(tables.cutoff) {
            bail!("epsilon and cutoff must be positive");
        }
        let timeout = g.timeout.or(file.timeout).unwrap_or(60.0);
        if !positive(timeout) {
            bail!("timeout must be a positive number of seconds");
        }
        let default_solver = SolverConfig::default();
        let solver = SolverConfig {
            program: g.solver.clone().or(file.solver).unwrap_or(default_solver.program),
            args: if g.solver_args.is_empty() { file.solver_args.unwrap_or_default() } else { g.solver_args.clone() },
            timeout: Duration::from_secs_f64(timeout),
        };
        let on = |flag_off: bool, file: Option<bool>| !flag_off && file.unwrap_or(true);
        let options = VerifyOptions {
            domain,
            tables,
            simplify: on(g.no_simplify, file.simplify),
            slice: on(g.no_slice, file.slice),
            balance: on(g.no_balance, file.balance),
            intervals: on(g.no_intervals, file.intervals),
            unsafe_balance: g.unsafe_balance || file.unsafe_balance.unwrap_or(false),
            both_bounds: g.both_bounds || file.both_bounds.unwrap_or(false),
            solver,
            names: None,
        };
        let workers = g
            .workers
            .or(file.workers)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        Ok(Settings { domain, rounding, workers: workers.max(1), options, json: g.json })
    }
}
