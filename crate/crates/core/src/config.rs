//! Flat `key = value` run configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored and
//! keys may use `-` or `_` interchangeably. Command-line flags are applied
//! on top of a parsed file through the same [`RunConfig::set`] entry point,
//! so both sources share validation and diagnostics.

use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::experiment::{default_lambda_grid, SimulationConfig, DEFAULT_ALPHA, DEFAULT_BETA};
use crate::moments::{Estimator, ReturnUnit};
use crate::solver::SolverConfig;
use crate::strategy::{CostKind, ScadParams, StrategyKind, StrategySpec, TuneOptions};

/// One `key = value` entry with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Splits config text into entries; keys are lower-cased with `-` mapped to `_`.
pub fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::parse(line, content, "expected `key = value`"));
        };
        let key = normalize_key(key);
        if key.is_empty() {
            return Err(Error::parse(line, "", "empty key"));
        }
        if let Some(prev) = out.iter().find(|e| e.key == key) {
            return Err(Error::parse(
                line,
                key,
                format!("duplicate key (first set on line {})", prev.line),
            ));
        }
        out.push(Entry {
            line,
            key,
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

/// Every setting a command can take.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub strategies: Vec<StrategyKind>,
    pub cost_kind: CostKind,
    pub beta: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub scad_a: f64,
    pub lambda_grid: Option<Vec<f64>>,
    /// Estimation window; `None` uses the command's default.
    pub window: Option<usize>,
    pub stages: usize,
    pub rebalance_every: Option<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub estimator: Estimator,
    /// Unit strategies see moments in when reading a returns file.
    pub moment_unit: ReturnUnit,
    pub p: usize,
    pub out_dir: PathBuf,
    pub returns: Option<PathBuf>,
    pub cost_file: Option<PathBuf>,
    pub threads: Option<usize>,
    pub tune_net_of_cost: bool,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            strategies: vec![
                StrategyKind::Mv,
                StrategyKind::Pmv,
                StrategyKind::Cmv,
                StrategyKind::CapeS,
            ],
            cost_kind: CostKind::Quadratic,
            beta: DEFAULT_BETA,
            alpha: DEFAULT_ALPHA,
            gamma: StrategySpec::DEFAULT_GAMMA,
            scad_a: ScadParams::DEFAULT_A,
            lambda_grid: None,
            window: None,
            stages: 5,
            rebalance_every: None,
            replicates: 1000,
            seed: 1,
            estimator: Estimator::LinearShrinkage,
            moment_unit: ReturnUnit::Percent,
            p: 2000,
            out_dir: PathBuf::from("out"),
            returns: None,
            cost_file: None,
            threads: None,
            tune_net_of_cost: true,
            max_iterations: SolverConfig::default().max_iterations,
            tolerance: SolverConfig::default().primal_tol,
        }
    }
}

/// Keys accepted by [`RunConfig::set`].
pub const KEYS: [&str; 22] = [
    "strategy",
    "cost_kind",
    "beta",
    "alpha",
    "gamma",
    "scad_a",
    "lambda_grid",
    "window",
    "stages",
    "rebalance_every",
    "replicates",
    "seed",
    "estimator",
    "moment_unit",
    "p",
    "out_dir",
    "returns",
    "cost_file",
    "threads",
    "tune_net_of_cost",
    "max_iterations",
    "tolerance",
];

/// Default estimation window of `simulate` (days).
pub const SIMULATION_WINDOW: usize = 200;
/// Default estimation window and holding period of `backtest` (trading days).
pub const BACKTEST_WINDOW: usize = 251;

fn parsed<T: FromStr>(value: &str, line: usize, key: &str, what: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::parse(line, key, format!("`{value}` is not {what}")))
}

fn number(value: &str, line: usize, key: &str, min: f64, strict: bool) -> Result<f64> {
    let v: f64 = parsed(value, line, key, "a number")?;
    let ok = v.is_finite() && if strict { v > min } else { v >= min };
    if !ok {
        let op = if strict { ">" } else { ">=" };
        return Err(Error::parse(line, key, format!("must be finite and {op} {min}, got {value}")));
    }
    Ok(v)
}

fn count(value: &str, line: usize, key: &str, min: usize) -> Result<usize> {
    let v: usize = parsed(value, line, key, "a nonnegative integer")?;
    if v < min {
        return Err(Error::parse(line, key, format!("must be at least {min}, got {v}")));
    }
    Ok(v)
}

fn path(value: &str, line: usize, key: &str) -> Result<PathBuf> {
    if value.is_empty() {
        return Err(Error::parse(line, key, "empty path"));
    }
    Ok(PathBuf::from(value))
}

/// Parses a comma-separated λ list: nonnegative, finite, strictly increasing after sorting.
pub fn parse_lambda_grid(value: &str) -> std::result::Result<Vec<f64>, String> {
    let mut grid = Vec::new();
    for part in value.split(',') {
        let part = part.trim();
        let v: f64 = part
            .parse()
            .map_err(|_| format!("`{part}` is not a number"))?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(format!("lambda values must be finite and >= 0, got {part}"));
        }
        grid.push(v);
    }
    grid.sort_by(f64::total_cmp);
    if grid.windows(2).any(|w| w[0] == w[1]) {
        return Err("duplicate lambda value".into());
    }
    Ok(grid)
}

impl RunConfig {
    /// Parses a config file on top of the defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for e in parse_entries(text)? {
            cfg.set(&e.key, &e.value, e.line)?;
        }
        Ok(cfg)
    }

    /// Sets one key; `line` is reported in errors (0 for command-line flags).
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let key = normalize_key(key);
        let k = key.as_str();
        match k {
            "strategy" | "strategies" => {
                let mut kinds = Vec::new();
                for part in value.split(',') {
                    let kind = StrategyKind::from_str(part)
                        .map_err(|e| Error::parse(line, k, e.to_string()))?;
                    if !kinds.contains(&kind) {
                        kinds.push(kind);
                    }
                }
                self.strategies = kinds;
            }
            "cost_kind" => {
                self.cost_kind = CostKind::from_str(value).map_err(|e| Error::parse(line, k, e.to_string()))?
            }
            "beta" => self.beta = number(value, line, k, 0.0, false)?,
            "alpha" => self.alpha = number(value, line, k, 0.0, false)?,
            "gamma" => self.gamma = number(value, line, k, 0.0, false)?,
            "scad_a" => self.scad_a = number(value, line, k, 2.0, true)?,
            "lambda_grid" => {
                self.lambda_grid = Some(parse_lambda_grid(value).map_err(|m| Error::parse(line, k, m))?)
            }
            "window" => self.window = Some(count(value, line, k, 2)?),
            "stages" => self.stages = count(value, line, k, 1)?,
            "rebalance_every" => self.rebalance_every = Some(count(value, line, k, 1)?),
            "replicates" => self.replicates = count(value, line, k, 1)?,
            "seed" => self.seed = parsed(value, line, k, "an unsigned integer")?,
            "estimator" => {
                self.estimator = Estimator::from_str(value).map_err(|e| Error::parse(line, k, e.to_string()))?
            }
            "moment_unit" => {
                self.moment_unit = ReturnUnit::from_str(value).map_err(|e| Error::parse(line, k, e.to_string()))?
            }
            "p" => self.p = count(value, line, k, 1)?,
            "out_dir" => self.out_dir = path(value, line, k)?,
            "returns" => self.returns = Some(path(value, line, k)?),
            "cost_file" => self.cost_file = Some(path(value, line, k)?),
            "threads" => self.threads = Some(count(value, line, k, 1)?),
            "tune_net_of_cost" => {
                self.tune_net_of_cost = match value.to_ascii_lowercase().as_str() {
                    "true" | "yes" | "1" => true,
                    "false" | "no" | "0" => false,
                    _ => return Err(Error::parse(line, k, format!("`{value}` is not a boolean"))),
                }
            }
            "max_iterations" => self.max_iterations = count(value, line, k, 1)?,
            "tolerance" => self.tolerance = number(value, line, k, 0.0, true)?,
            _ => {
                return Err(Error::parse(
                    line,
                    k,
                    format!("unknown key (known: {})", KEYS.join(", ")),
                ))
            }
        }
        Ok(())
    }

    /// β or α, whichever the cost kind uses.
    pub fn cost_value(&self) -> f64 {
        match self.cost_kind {
            CostKind::Quadratic => self.beta,
            CostKind::Proportional => self.alpha,
        }
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            max_iterations: self.max_iterations,
            primal_tol: self.tolerance,
            dual_tol: self.tolerance,
            ..SolverConfig::default()
        }
    }

    pub fn tune(&self) -> TuneOptions {
        TuneOptions {
            net_of_cost: self.tune_net_of_cost,
        }
    }

    /// Strategy spec for `kind` with this config's γ and SCAD `a`.
    pub fn spec(&self, kind: StrategyKind) -> Result<StrategySpec> {
        let mut spec = StrategySpec::new(kind);
        spec.gamma = self.gamma;
        spec.scad = ScadParams::new(0.0, self.scad_a)?;
        spec.validate()?;
        Ok(spec)
    }

    /// λ grid for an estimation window of `n` days on `p` assets in `unit`.
    ///
    /// An explicit grid is used as given. The default grid is calibrated for
    /// moments in percent and rescaled by the squared unit ratio otherwise.
    pub fn grid_for(&self, p: usize, n: usize, unit: ReturnUnit) -> Vec<f64> {
        self.lambda_grid.clone().unwrap_or_else(|| {
            let scale = (ReturnUnit::Percent.to_decimal() / unit.to_decimal()).powi(2);
            default_lambda_grid(p, n).into_iter().map(|l| l * scale).collect()
        })
    }

    pub fn simulation(&self) -> Result<SimulationConfig> {
        let window = self.window.unwrap_or(SIMULATION_WINDOW);
        let mut sim = SimulationConfig::new(self.p, window, self.stages, self.replicates);
        sim.seed = self.seed;
        sim.strategies = self.strategies.clone();
        sim.cost_kind = self.cost_kind;
        sim.cost_value = self.cost_value();
        sim.gamma = self.gamma;
        sim.scad_a = self.scad_a;
        sim.estimator = self.estimator;
        sim.lambda_grid = self.lambda_grid.clone();
        sim.tune = self.tune();
        sim.solver = self.solver();
        sim.validate()?;
        Ok(sim)
    }
}
