//! Replicated simulation studies on the three-factor model.
//!
//! Every replicate draws one panel of `n · (m + 1)` days from a fixed
//! universe and runs all requested strategies on that same panel, so
//! strategy comparisons are paired. Replicates run in parallel; results are
//! collected in replicate order and do not depend on the thread count.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::backtest::{run_backtest, BacktestPlan, BacktestResult, StageReport, TRADING_DAYS};
use crate::error::{Error, Result};
use crate::moments::{Estimator, ReturnPanel};
use crate::simgen::{build_universe, generate_panel, FactorModelParams, SimulatedUniverse};
use crate::solver::SolverConfig;
use crate::strategy::{CostKind, CostModel, ScadParams, StrategyKind, StrategySpec, TuneOptions};

/// Default quadratic cost coefficient β.
pub const DEFAULT_BETA: f64 = 0.15;
/// Default proportional cost coefficient α.
pub const DEFAULT_ALPHA: f64 = 0.001;

/// `count` values `M · √(ln p / n)` with `M` log-spaced over `[m_lo, m_hi]`,
/// increasing.
pub fn rate_lambda_grid(p: usize, n: usize, m_lo: f64, m_hi: f64, count: usize) -> Result<Vec<f64>> {
    if p < 2 || n == 0 || count == 0 || !(m_lo > 0.0 && m_hi >= m_lo) {
        return Err(Error::invalid("lambda grid needs p >= 2, n >= 1, 0 < m_lo <= m_hi, count >= 1"));
    }
    let rate = ((p as f64).ln() / n as f64).sqrt();
    if count == 1 {
        return Ok(vec![m_lo * rate]);
    }
    let (lo, hi) = (m_lo.ln(), m_hi.ln());
    Ok((0..count)
        .map(|i| (lo + (hi - lo) * i as f64 / (count - 1) as f64).exp() * rate)
        .collect())
}

/// The grid used when none is given.
pub fn default_lambda_grid(p: usize, n: usize) -> Vec<f64> {
    rate_lambda_grid(p.max(2), n.max(1), DEFAULT_GRID_M.0, DEFAULT_GRID_M.1, DEFAULT_GRID_M.2)
        .expect("default grid parameters are valid")
}

/// `(m_lo, m_hi, count)` of [`default_lambda_grid`].
pub const DEFAULT_GRID_M: (f64, f64, usize) = (0.01, 1.0, 10);

/// Configuration of a replicated simulation.
#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub p: usize,
    /// Estimation window and holding period, in days.
    pub window_n: usize,
    pub stages_m: usize,
    pub replicates: usize,
    pub seed: u64,
    pub strategies: Vec<StrategyKind>,
    pub cost_kind: CostKind,
    /// β for quadratic, α for proportional costs (same for every asset).
    pub cost_value: f64,
    pub gamma: f64,
    pub scad_a: f64,
    pub estimator: Estimator,
    /// `None` selects [`default_lambda_grid`].
    pub lambda_grid: Option<Vec<f64>>,
    pub tune: TuneOptions,
    pub solver: SolverConfig,
    pub params: FactorModelParams,
}

impl SimulationConfig {
    pub fn new(p: usize, window_n: usize, stages_m: usize, replicates: usize) -> Self {
        Self {
            p,
            window_n,
            stages_m,
            replicates,
            seed: 1,
            strategies: vec![
                StrategyKind::Mv,
                StrategyKind::Pmv,
                StrategyKind::Cmv,
                StrategyKind::CapeS,
            ],
            cost_kind: CostKind::Quadratic,
            cost_value: DEFAULT_BETA,
            gamma: StrategySpec::DEFAULT_GAMMA,
            scad_a: ScadParams::DEFAULT_A,
            estimator: Estimator::LinearShrinkage,
            lambda_grid: None,
            tune: TuneOptions::default(),
            solver: SolverConfig::default(),
            params: FactorModelParams::default(),
        }
    }

    pub fn panel_days(&self) -> usize {
        self.window_n * (self.stages_m + 1)
    }

    pub fn grid(&self) -> Vec<f64> {
        self.lambda_grid
            .clone()
            .unwrap_or_else(|| default_lambda_grid(self.p, self.window_n))
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.window_n < 2 || self.stages_m == 0 || self.replicates == 0 {
            return Err(Error::invalid(
                "simulation needs p >= 1, window >= 2, stages >= 1, replicates >= 1",
            ));
        }
        if self.strategies.is_empty() {
            return Err(Error::invalid("no strategies selected"));
        }
        if !(self.cost_value >= 0.0 && self.cost_value.is_finite()) {
            return Err(Error::invalid(format!(
                "cost coefficient must be >= 0, got {}",
                self.cost_value
            )));
        }
        ScadParams::new(0.0, self.scad_a)?;
        self.params.validate()?;
        if let Some(grid) = &self.lambda_grid {
            if grid.is_empty() || grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
                return Err(Error::invalid("lambda grid must hold finite values >= 0"));
            }
        }
        self.solver.validate()
    }

    /// The backtest plan for one strategy.
    pub fn plan(&self, kind: StrategyKind) -> Result<BacktestPlan> {
        let mut spec = StrategySpec::new(kind);
        spec.gamma = self.gamma;
        spec.scad = ScadParams::new(0.0, self.scad_a)?;
        let cost = CostModel::uniform(self.cost_kind, self.cost_value, self.p)?;
        let mut plan = BacktestPlan::new(self.window_n, self.stages_m, spec, cost);
        plan.estimator = self.estimator;
        plan.tune = self.tune;
        plan.solver = self.solver;
        if kind.penalized() {
            let mut grid = self.grid();
            grid.sort_by(f64::total_cmp);
            grid.dedup();
            plan.lambda_grid = Some(grid);
        }
        Ok(plan)
    }
}

/// Outcome of one strategy on one replicate.
#[derive(Debug, Clone)]
pub struct StrategyRun {
    pub kind: StrategyKind,
    pub result: std::result::Result<BacktestResult, String>,
}

#[derive(Debug, Clone)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub runs: Vec<StrategyRun>,
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub universe: SimulatedUniverse,
    pub replicates: Vec<ReplicateRecord>,
}

/// The panel replicate `r` of `config` runs on.
pub fn replicate_panel(
    config: &SimulationConfig,
    universe: &SimulatedUniverse,
    replicate: usize,
) -> Result<ReturnPanel> {
    generate_panel(
        universe,
        config.panel_days(),
        &config.params,
        config.seed,
        replicate as u64,
    )
}

/// Runs one replicate: every strategy on the same panel.
pub fn run_replicate(
    config: &SimulationConfig,
    universe: &SimulatedUniverse,
    replicate: usize,
) -> Result<ReplicateRecord> {
    let panel = replicate_panel(config, universe, replicate)?;
    let mut runs = Vec::with_capacity(config.strategies.len());
    for &kind in &config.strategies {
        let plan = config.plan(kind)?;
        let result = run_backtest(&panel, &plan).map_err(|e| {
            log::warn!("replicate {replicate}, {}: {e}", kind.label());
            e.to_string()
        });
        runs.push(StrategyRun { kind, result });
    }
    Ok(ReplicateRecord { replicate, runs })
}

/// Runs every replicate of `config` on the current rayon pool.
pub fn run_simulation(config: &SimulationConfig) -> Result<SimulationOutput> {
    config.validate()?;
    let universe = build_universe(config.p, &config.params, config.seed)?;
    let replicates = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let rec = run_replicate(config, &universe, r);
            log::info!("replicate {} / {} done", r + 1, config.replicates);
            rec
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulationOutput {
        universe,
        replicates,
    })
}

/// Mean and standard error of a sample; NaNs are skipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    /// `sd / √count` with the `count − 1` divisor; NaN below two values.
    pub se: f64,
    pub count: usize,
}

impl MeanSe {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().filter(|x| !x.is_nan()).collect();
        let count = v.len();
        if count == 0 {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
                count,
            };
        }
        let mean = v.iter().sum::<f64>() / count as f64;
        let se = if count < 2 {
            f64::NAN
        } else {
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
            (var / count as f64).sqrt()
        };
        Self { mean, se, count }
    }
}

/// Replicate mean (se) of each report field for one strategy and stage.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub method: String,
    /// `None` for the overall Sharpe row.
    pub stage: Option<usize>,
    pub return_pct: MeanSe,
    pub cost_pct: MeanSe,
    pub turnover: MeanSe,
    pub leverage: MeanSe,
    pub sharpe: MeanSe,
    /// Replicates in which the strategy ran.
    pub successes: usize,
}

/// Aggregates per-strategy, per-stage metrics over successful replicates.
pub fn aggregate(records: &[ReplicateRecord], strategies: &[StrategyKind], stages_m: usize) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for (si, kind) in strategies.iter().enumerate() {
        let ok: Vec<&BacktestResult> = records
            .iter()
            .filter_map(|r| r.runs.get(si).and_then(|run| run.result.as_ref().ok()))
            .collect();
        let field = |t: usize, f: fn(&StageReport) -> f64| MeanSe::of(ok.iter().map(|b| f(&b.stages[t])));
        for t in 0..stages_m {
            rows.push(AggregateRow {
                method: kind.label().to_string(),
                stage: Some(t + 1),
                return_pct: field(t, |s| s.gross_return_pct),
                cost_pct: field(t, |s| s.cost_pct),
                turnover: field(t, |s| s.turnover),
                leverage: field(t, |s| s.leverage),
                sharpe: field(t, |s| s.sharpe),
                successes: ok.len(),
            });
        }
        let none = MeanSe::of(std::iter::empty());
        rows.push(AggregateRow {
            method: kind.label().to_string(),
            stage: None,
            return_pct: none,
            cost_pct: none,
            turnover: none,
            leverage: none,
            sharpe: MeanSe::of(ok.iter().map(|b| b.overall_sharpe)),
            successes: ok.len(),
        });
    }
    rows
}

/// Annualized Sharpe ratio `√251 · μᵀw / √(wᵀΣw)` of weights under moments.
pub fn moment_sharpe(w: &DVector<f64>, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    let var = (sigma * w).dot(w);
    if !(var > 0.0) {
        return Err(Error::UndefinedSharpe("portfolio variance is not positive".into()));
    }
    Ok(mu.dot(w) / var.sqrt() * TRADING_DAYS.sqrt())
}
