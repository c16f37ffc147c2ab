//! Multi-stage backtests: construct at the first decision day, drift through
//! each holding period, rebalance at later decision days, and score every
//! stage.
//!
//! Conventions:
//! * Stage `t` (1-based) decides on day `d_t = window_n + (t − 1)·rebalance_every`
//!   using the `window_n` rows before it, then holds for `rebalance_every` rows.
//! * The stage's transaction cost is subtracted from the first holding day's
//!   return.
//! * Stage return is the cumulative gross holding-period return in percent;
//!   Sharpe ratios are annualized by √251 on daily net returns.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::moments::{Estimator, MomentEstimate, ReturnPanel, ReturnUnit};
use crate::solver::SolverConfig;
use crate::strategy::{
    tune_lambda_with, CostModel, Fit, RebalanceProblem, StageSolver, StrategySpec, TuneOptions,
};

/// Trading days per year used for annualization.
pub const TRADING_DAYS: f64 = 251.0;

/// `w⁺ = (f_n ∘ … ∘ f_1)(w)`, `f_i(w) = w ⊙ (1 + R_i) / (1 + wᵀR_i)`.
///
/// `holding_returns` holds decimal returns, one row per day.
pub fn drift_weights(w: &DVector<f64>, holding_returns: &DMatrix<f64>) -> Result<DVector<f64>> {
    Ok(drift_with_returns(w, holding_returns)?.0)
}

/// Drifted weights plus the portfolio's daily gross returns along the path.
pub fn drift_with_returns(
    w: &DVector<f64>,
    holding_returns: &DMatrix<f64>,
) -> Result<(DVector<f64>, Vec<f64>)> {
    if holding_returns.ncols() != w.len() {
        return Err(Error::invalid(format!(
            "{} weights for {} return columns",
            w.len(),
            holding_returns.ncols()
        )));
    }
    if (w.sum() - 1.0).abs() > 1e-8 {
        return Err(Error::invalid(format!(
            "drift needs fully invested weights, sum is {}",
            w.sum()
        )));
    }
    let mut cur = w.clone();
    let mut daily = Vec::with_capacity(holding_returns.nrows());
    for (day, row) in holding_returns.row_iter().enumerate() {
        let r = row.transpose();
        let port = cur.dot(&r);
        let factor = 1.0 + port;
        if !(factor > 1e-12) {
            return Err(Error::Wipeout { day, factor });
        }
        for j in 0..cur.len() {
            cur[j] *= (1.0 + r[j]) / factor;
        }
        daily.push(port);
    }
    Ok((cur, daily))
}

/// `Σ_i |w_new,i − w_plus_prev,i|`
pub fn turnover(w_new: &DVector<f64>, w_plus_prev: &DVector<f64>) -> f64 {
    w_new
        .iter()
        .zip(w_plus_prev.iter())
        .map(|(a, b)| (a - b).abs())
        .sum()
}

/// Total short exposure `Σ_i |min(w_i, 0)|`.
pub fn leverage(w: &DVector<f64>) -> f64 {
    w.iter().map(|v| v.min(0.0).abs()).sum()
}

/// Cost of the trade `delta` (the stage-1 weights at construction).
pub fn transaction_cost_charge(delta: &DVector<f64>, cost: &CostModel) -> f64 {
    cost.charge(delta)
}

/// `mean / std · √251`, sample standard deviation.
pub fn sharpe_ratio(daily_net_returns: &[f64]) -> Result<f64> {
    let n = daily_net_returns.len();
    if n < 2 {
        return Err(Error::UndefinedSharpe(format!("{n} observations")));
    }
    let mean = daily_net_returns.iter().sum::<f64>() / n as f64;
    let var = daily_net_returns
        .iter()
        .map(|r| (r - mean) * (r - mean))
        .sum::<f64>()
        / (n as f64 - 1.0);
    let sd = var.sqrt();
    if !(sd > 1e-12 * mean.abs()) || sd == 0.0 {
        return Err(Error::UndefinedSharpe("zero variance".into()));
    }
    Ok(mean / sd * TRADING_DAYS.sqrt())
}

/// Parameters of one backtest run.
#[derive(Debug, Clone)]
pub struct BacktestPlan {
    pub window_n: usize,
    pub stages_m: usize,
    pub rebalance_every: usize,
    pub strategy: StrategySpec,
    pub cost: CostModel,
    pub estimator: Estimator,
    /// Tune the sparsity level of penalized strategies at every decision day.
    pub lambda_grid: Option<Vec<f64>>,
    pub tune: TuneOptions,
    pub solver: SolverConfig,
    /// Unit the strategies see moments in; `None` keeps the panel's unit.
    pub moment_unit: Option<ReturnUnit>,
}

impl BacktestPlan {
    /// Plan with `rebalance_every = window_n`, linear shrinkage and default solver.
    pub fn new(window_n: usize, stages_m: usize, strategy: StrategySpec, cost: CostModel) -> Self {
        Self {
            window_n,
            stages_m,
            rebalance_every: window_n,
            strategy,
            cost,
            estimator: Estimator::LinearShrinkage,
            lambda_grid: None,
            tune: TuneOptions::default(),
            solver: SolverConfig::default(),
            moment_unit: None,
        }
    }

    pub fn required_rows(&self) -> usize {
        self.window_n + self.stages_m * self.rebalance_every
    }

    pub fn validate(&self, panel: &ReturnPanel) -> Result<()> {
        if self.window_n < 2 {
            return Err(Error::invalid("estimation window must have at least 2 days"));
        }
        if self.stages_m == 0 || self.rebalance_every == 0 {
            return Err(Error::invalid("need at least one stage and a positive holding period"));
        }
        if self.cost.p() != panel.p() {
            return Err(Error::invalid(format!(
                "cost model covers {} assets, panel has {}",
                self.cost.p(),
                panel.p()
            )));
        }
        if panel.n() < self.required_rows() {
            return Err(Error::invalid(format!(
                "panel has {} rows, plan needs {}",
                panel.n(),
                self.required_rows()
            )));
        }
        self.strategy.validate()
    }
}

/// Metrics of one stage, in report units.
#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub stage: usize,
    /// Cumulative holding-period return, percent.
    pub gross_return_pct: f64,
    /// Transaction cost, percent of wealth.
    pub cost_pct: f64,
    pub turnover: f64,
    pub leverage: f64,
    /// Annualized, net of cost; NaN when undefined.
    pub sharpe: f64,
}

/// Weights recorded at one stage.
#[derive(Debug, Clone)]
pub struct StageWeights {
    /// Pre-rebalance weights entering the stage (zero at stage 1).
    pub w_plus_prev: DVector<f64>,
    pub weights: DVector<f64>,
    pub delta: DVector<f64>,
    /// Drifted weights at the end of the holding period.
    pub w_plus_end: DVector<f64>,
}

/// Diagnostics attached to a stage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageNote {
    pub lambda: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct BacktestResult {
    pub method: String,
    pub stages: Vec<StageReport>,
    pub overall_sharpe: f64,
    pub weight_history: Vec<StageWeights>,
    pub notes: Vec<StageNote>,
    /// Concatenated out-of-sample daily net returns.
    pub daily_net_returns: Vec<f64>,
}

fn fit_stage(
    panel: &ReturnPanel,
    plan: &BacktestPlan,
    window: std::ops::Range<usize>,
    w_plus: &DVector<f64>,
    stage: usize,
) -> Result<(Fit, Option<f64>)> {
    let est_window = panel.window(window)?;
    let est_window = match plan.moment_unit {
        Some(unit) if unit != est_window.unit() => est_window.converted(unit),
        _ => est_window,
    };
    let moments = MomentEstimate::estimate(&est_window, plan.estimator)?;
    let problem = RebalanceProblem::new(moments, plan.cost.clone(), w_plus.clone(), stage)?;
    let solver = StageSolver::new(&problem);
    match &plan.lambda_grid {
        Some(grid) if plan.strategy.kind.penalized() => {
            let tuned = tune_lambda_with(
                &solver,
                &est_window,
                &plan.strategy,
                grid,
                &plan.solver,
                &plan.tune,
            )?;
            Ok((tuned.fit, Some(tuned.lambda)))
        }
        _ => {
            let lambda = plan.strategy.kind.penalized().then_some(plan.strategy.lambda_l1);
            Ok((solver.fit(&plan.strategy, &plan.solver, None)?, lambda))
        }
    }
}

/// Runs the staged construction / rebalancing loop over `panel`.
pub fn run_backtest(panel: &ReturnPanel, plan: &BacktestPlan) -> Result<BacktestResult> {
    plan.validate(panel)?;
    let p = panel.p();
    let to_dec = panel.unit().to_decimal();
    let mut w_plus = DVector::zeros(p);
    let mut stages = Vec::with_capacity(plan.stages_m);
    let mut history = Vec::with_capacity(plan.stages_m);
    let mut notes = Vec::with_capacity(plan.stages_m);
    let mut all_net = Vec::new();
    let mut dead: Option<String> = None;

    for t in 1..=plan.stages_m {
        let decision = plan.window_n + (t - 1) * plan.rebalance_every;
        if let Some(reason) = &dead {
            stages.push(StageReport {
                stage: t,
                gross_return_pct: f64::NAN,
                cost_pct: f64::NAN,
                turnover: f64::NAN,
                leverage: f64::NAN,
                sharpe: f64::NAN,
            });
            notes.push(StageNote {
                lambda: None,
                error: Some(format!("skipped: {reason}")),
            });
            continue;
        }

        let mut note = StageNote::default();
        let (weights, delta) =
            match fit_stage(panel, plan, decision - plan.window_n..decision, &w_plus, t) {
                Ok((fit, lambda)) => {
                    note.lambda = lambda;
                    (fit.weights, fit.delta)
                }
                Err(e) if t == 1 => return Err(e),
                Err(e) => {
                    log::warn!("stage {t}: {e}; holding drifted weights");
                    note.error = Some(e.to_string());
                    (w_plus.clone(), DVector::zeros(p))
                }
            };

        let cost = plan.cost.charge(&delta);
        let stage_turnover = turnover(&weights, &w_plus);
        let stage_leverage = leverage(&weights);
        let holding = panel
            .returns()
            .rows(decision, plan.rebalance_every)
            .map(|r| r * to_dec);

        let (w_end, daily) = match drift_with_returns(&weights, &holding) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("stage {t}: {e}");
                note.error = Some(e.to_string());
                dead = Some(e.to_string());
                stages.push(StageReport {
                    stage: t,
                    gross_return_pct: -100.0,
                    cost_pct: cost * 100.0,
                    turnover: stage_turnover,
                    leverage: stage_leverage,
                    sharpe: f64::NAN,
                });
                notes.push(note);
                history.push(StageWeights {
                    w_plus_prev: w_plus.clone(),
                    weights: weights.clone(),
                    delta,
                    w_plus_end: weights,
                });
                continue;
            }
        };

        let growth: f64 = daily.iter().map(|r| 1.0 + r).product();
        let mut net = daily;
        net[0] -= cost;
        let sharpe = sharpe_ratio(&net).unwrap_or(f64::NAN);
        all_net.extend_from_slice(&net);

        stages.push(StageReport {
            stage: t,
            gross_return_pct: (growth - 1.0) * 100.0,
            cost_pct: cost * 100.0,
            turnover: stage_turnover,
            leverage: stage_leverage,
            sharpe,
        });
        notes.push(note);
        history.push(StageWeights {
            w_plus_prev: w_plus.clone(),
            weights,
            delta,
            w_plus_end: w_end.clone(),
        });
        w_plus = w_end;
    }

    let overall_sharpe = if dead.is_some() {
        f64::NAN
    } else {
        sharpe_ratio(&all_net).unwrap_or(f64::NAN)
    };
    Ok(BacktestResult {
        method: plan.strategy.kind.label().to_string(),
        stages,
        overall_sharpe,
        weight_history: history,
        notes,
        daily_net_returns: all_net,
    })
}
