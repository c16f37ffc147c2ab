//! Portfolio strategies: the 1/N benchmark, mean-variance (MV), penalized
//! mean-variance (PMV), cost-aware mean-variance (CMV) and the cost-aware
//! estimators CAPE-L (ℓ1) and CAPE-S (SCAD via local linear approximation).
//!
//! Stage 1 constructs weights `w` with `1ᵀw = 1`. Later stages solve for the
//! trade `δ = w − w⁺` with `1ᵀδ = 0`, where `w⁺` are the drifted weights:
//!
//! ```text
//! stage 1:  min wᵀΣ̂w − γ wᵀμ̂ + C(w) + penalty(w)
//! stage t:  min δᵀΣ̂δ + 2 w⁺ᵀΣ̂δ − γ δᵀμ̂ + C(δ) + penalty(δ)
//! ```
//!
//! A quadratic cost `Σ β_j x_j²` is folded into the quadratic form; a
//! proportional cost `Σ α_j |x_j|` is folded into the ℓ1 weights.

use std::cell::OnceCell;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::backtest::sharpe_ratio;
use crate::error::{Error, Result};
use crate::moments::{MomentEstimate, ReturnPanel};
use crate::solver::{self, QpWorkspace, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    /// `Σ β_j x_j²`
    Quadratic,
    /// `Σ α_j |x_j|`
    Proportional,
}

impl FromStr for CostKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "quadratic" => Ok(CostKind::Quadratic),
            "proportional" => Ok(CostKind::Proportional),
            other => Err(Error::invalid(format!(
                "unknown cost kind `{other}` (expected quadratic or proportional)"
            ))),
        }
    }
}

impl fmt::Display for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostKind::Quadratic => "quadratic",
            CostKind::Proportional => "proportional",
        })
    }
}

/// Per-asset transaction-cost coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    kind: CostKind,
    coefficients: DVector<f64>,
}

impl CostModel {
    pub fn new(kind: CostKind, coefficients: DVector<f64>) -> Result<Self> {
        if let Some(c) = coefficients.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(Error::invalid(format!(
                "cost coefficients must be finite and nonnegative, got {c}"
            )));
        }
        Ok(Self { kind, coefficients })
    }

    pub fn uniform(kind: CostKind, value: f64, p: usize) -> Result<Self> {
        Self::new(kind, DVector::from_element(p, value))
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    pub fn p(&self) -> usize {
        self.coefficients.len()
    }

    /// Cost of trading `delta`, as a fraction of wealth.
    pub fn charge(&self, delta: &DVector<f64>) -> f64 {
        match self.kind {
            CostKind::Quadratic => self
                .coefficients
                .iter()
                .zip(delta.iter())
                .map(|(b, d)| b * d * d)
                .sum(),
            CostKind::Proportional => self
                .coefficients
                .iter()
                .zip(delta.iter())
                .map(|(a, d)| a * d.abs())
                .sum(),
        }
    }
}

/// SCAD parameters; `a > 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScadParams {
    pub lambda: f64,
    pub a: f64,
}

impl ScadParams {
    pub const DEFAULT_A: f64 = 3.7;

    pub fn new(lambda: f64, a: f64) -> Result<Self> {
        let s = Self { lambda, a };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 2.0 && self.a.is_finite()) {
            return Err(Error::invalid(format!("SCAD requires a > 2, got {}", self.a)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "SCAD requires lambda >= 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

impl Default for ScadParams {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            a: Self::DEFAULT_A,
        }
    }
}

/// `P'_λ(τ) = λ·[ I(τ ≤ λ) + (aλ − τ)₊ / ((a − 1)λ) · I(τ > λ) ]`
pub fn scad_derivative(tau: f64, params: &ScadParams) -> Result<f64> {
    params.validate()?;
    if !(tau >= 0.0) {
        return Err(Error::invalid(format!("SCAD derivative needs tau >= 0, got {tau}")));
    }
    Ok(scad_derivative_unchecked(tau, params))
}

fn scad_derivative_unchecked(tau: f64, params: &ScadParams) -> f64 {
    let ScadParams { lambda, a } = *params;
    if lambda == 0.0 {
        0.0
    } else if tau <= lambda {
        lambda
    } else {
        (a * lambda - tau).max(0.0) / (a - 1.0)
    }
}

/// SCAD penalty value `P_λ(|τ|)`.
pub fn scad_penalty(tau: f64, params: &ScadParams) -> f64 {
    let ScadParams { lambda, a } = *params;
    let t = tau.abs();
    if t <= lambda {
        lambda * t
    } else if t <= a * lambda {
        (2.0 * a * lambda * t - t * t - lambda * lambda) / (2.0 * (a - 1.0))
    } else {
        lambda * lambda * (a + 1.0) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    EqualWeight,
    Mv,
    Pmv,
    Cmv,
    CapeL,
    CapeS,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::EqualWeight,
        StrategyKind::Mv,
        StrategyKind::Pmv,
        StrategyKind::Cmv,
        StrategyKind::CapeL,
        StrategyKind::CapeS,
    ];

    pub fn label(self) -> &'static str {
        match self {
            StrategyKind::EqualWeight => "1/N",
            StrategyKind::Mv => "MV",
            StrategyKind::Pmv => "PMV",
            StrategyKind::Cmv => "CMV",
            StrategyKind::CapeL => "CAPE-L",
            StrategyKind::CapeS => "CAPE-S",
        }
    }

    /// Whether the transaction cost enters the objective.
    pub fn cost_aware(self) -> bool {
        matches!(self, StrategyKind::Cmv | StrategyKind::CapeL | StrategyKind::CapeS)
    }

    /// Whether the strategy has a sparsity parameter worth tuning.
    pub fn penalized(self) -> bool {
        matches!(self, StrategyKind::Pmv | StrategyKind::CapeL | StrategyKind::CapeS)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .collect();
        match norm.as_str() {
            "1/n" | "equalweight" | "ew" | "equal" => Ok(StrategyKind::EqualWeight),
            "mv" => Ok(StrategyKind::Mv),
            "pmv" => Ok(StrategyKind::Pmv),
            "cmv" => Ok(StrategyKind::Cmv),
            "capel" => Ok(StrategyKind::CapeL),
            "capes" | "cape" => Ok(StrategyKind::CapeS),
            _ => Err(Error::invalid(format!("unknown strategy `{s}`"))),
        }
    }
}

/// A strategy and its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    /// Inverse risk aversion γ.
    pub gamma: f64,
    /// SCAD parameters (CAPE-S).
    pub scad: ScadParams,
    /// ℓ1 level: the PMV penalty, and the Lasso level of CAPE-L and of the
    /// CAPE-S initializer.
    pub lambda_l1: f64,
}

impl StrategySpec {
    pub const DEFAULT_GAMMA: f64 = 1.0 / 3.0;

    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            gamma: Self::DEFAULT_GAMMA,
            scad: ScadParams::default(),
            lambda_l1: 0.0,
        }
    }

    pub fn cost_aware(&self) -> bool {
        self.kind.cost_aware()
    }

    /// Sets every sparsity level of the strategy to `lambda`.
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda_l1 = lambda;
        self.scad.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.lambda_l1 >= 0.0 && self.lambda_l1.is_finite()) {
            return Err(Error::invalid(format!(
                "lambda must be >= 0, got {}",
                self.lambda_l1
            )));
        }
        self.scad.validate()
    }
}

/// Inputs at one decision date.
#[derive(Debug, Clone)]
pub struct RebalanceProblem {
    pub moments: MomentEstimate,
    pub cost: CostModel,
    /// Pre-rebalance weights; zero at stage 1.
    pub w_plus: DVector<f64>,
    /// 1 for the initial construction.
    pub stage: usize,
}

impl RebalanceProblem {
    pub fn new(
        moments: MomentEstimate,
        cost: CostModel,
        w_plus: DVector<f64>,
        stage: usize,
    ) -> Result<Self> {
        let p = moments.p();
        if cost.p() != p || w_plus.len() != p {
            return Err(Error::invalid(format!(
                "dimension mismatch: {p} assets, {} cost coefficients, {} pre-rebalance weights",
                cost.p(),
                w_plus.len()
            )));
        }
        if stage == 0 {
            return Err(Error::invalid("stages are numbered from 1"));
        }
        if stage == 1 && w_plus.iter().any(|v| *v != 0.0) {
            return Err(Error::invalid("pre-rebalance weights must be zero at stage 1"));
        }
        if stage >= 2 && (w_plus.sum() - 1.0).abs() > 1e-8 {
            return Err(Error::invalid(format!(
                "pre-rebalance weights sum to {}, expected 1",
                w_plus.sum()
            )));
        }
        Ok(Self {
            moments,
            cost,
            w_plus,
            stage,
        })
    }

    /// Stage-1 problem.
    pub fn initial(moments: MomentEstimate, cost: CostModel) -> Result<Self> {
        let p = moments.p();
        Self::new(moments, cost, DVector::zeros(p), 1)
    }

    pub fn p(&self) -> usize {
        self.moments.p()
    }

    pub fn budget(&self) -> f64 {
        if self.stage == 1 {
            1.0
        } else {
            0.0
        }
    }

    /// `−γμ̂` at stage 1, `2Σ̂w⁺ − γμ̂` afterwards.
    pub fn linear_term(&self, gamma: f64) -> DVector<f64> {
        let mut c = -gamma * &self.moments.mu;
        if self.stage >= 2 {
            c += 2.0 * (&self.moments.sigma * &self.w_plus);
        }
        c
    }
}

/// LLA stopping rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LlaOptions {
    pub max_rounds: usize,
    /// Stop once `‖w^(l) − w^(l−1)‖∞` falls to this level.
    pub tol: f64,
}

impl Default for LlaOptions {
    fn default() -> Self {
        Self {
            max_rounds: 10,
            tol: 1e-8,
        }
    }
}

/// The convex part shared by every LLA round; the round adds SCAD slopes to
/// `fixed_weights`.
pub struct LlaBase<'a> {
    pub workspace: &'a QpWorkspace,
    pub linear: DVector<f64>,
    pub budget: f64,
    /// ℓ1 weights present in every round (folded proportional costs).
    pub fixed_weights: DVector<f64>,
}

impl LlaBase<'_> {
    /// `L(w) + Σ θ_j |w_j|` for an extra weight vector `theta`.
    pub fn surrogate(&self, w: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        let total = &self.fixed_weights + theta;
        solver::objective(self.workspace.quad(), &self.linear, &total, w)
    }
}

#[derive(Debug, Clone)]
pub struct LlaTrace {
    pub weights: DVector<f64>,
    /// Number of weighted-ℓ1 solves performed.
    pub rounds: usize,
    pub converged: bool,
    /// `iterates[0]` is the initial point, `iterates[l]` the round-l solution.
    pub iterates: Vec<DVector<f64>>,
}

/// Local linear approximation of the SCAD-penalized problem.
pub fn lla_iterate(
    base: &LlaBase<'_>,
    init: &DVector<f64>,
    scad: &ScadParams,
    config: &SolverConfig,
    options: &LlaOptions,
) -> Result<LlaTrace> {
    scad.validate()?;
    if (init.sum() - base.budget).abs() > 1e-6 {
        return Err(Error::invalid(format!(
            "LLA initial point sums to {}, budget is {}",
            init.sum(),
            base.budget
        )));
    }
    let mut iterates = vec![init.clone()];
    let mut current = init.clone();
    let mut converged = false;
    for round in 1..=options.max_rounds.max(1) {
        let theta = current.map(|w| scad_derivative_unchecked(w.abs(), scad));
        let weights = &base.fixed_weights + &theta;
        let sol = base
            .workspace
            .solve(&base.linear, base.budget, &weights, config, Some(&current))
            .map_err(|e| Error::Lla {
                round,
                source: Box::new(e),
            })?;
        let step = (&sol.weights - &current).amax();
        current = sol.weights;
        iterates.push(current.clone());
        if step <= options.tol {
            converged = true;
            break;
        }
    }
    Ok(LlaTrace {
        rounds: iterates.len() - 1,
        weights: current,
        converged,
        iterates,
    })
}

/// Result of fitting a strategy at one decision date.
#[derive(Debug, Clone)]
pub struct Fit {
    pub weights: DVector<f64>,
    /// `weights − w⁺` (equal to `weights` at stage 1).
    pub delta: DVector<f64>,
    /// LLA history (CAPE-S only).
    pub lla: Option<LlaTrace>,
}

/// Fits strategies against one [`RebalanceProblem`], sharing factorizations
/// of `Σ̂` and `Σ̂ + diag(β)` between fits.
pub struct StageSolver<'a> {
    problem: &'a RebalanceProblem,
    plain: OnceCell<QpWorkspace>,
    costed: OnceCell<QpWorkspace>,
    pub lla_options: LlaOptions,
}

struct Program<'w> {
    workspace: &'w QpWorkspace,
    linear: DVector<f64>,
    budget: f64,
    fixed_weights: DVector<f64>,
}

impl<'a> StageSolver<'a> {
    pub fn new(problem: &'a RebalanceProblem) -> Self {
        Self {
            problem,
            plain: OnceCell::new(),
            costed: OnceCell::new(),
            lla_options: LlaOptions::default(),
        }
    }

    pub fn problem(&self) -> &RebalanceProblem {
        self.problem
    }

    fn plain_workspace(&self) -> Result<&QpWorkspace> {
        if let Some(ws) = self.plain.get() {
            return Ok(ws);
        }
        let ws = QpWorkspace::new(self.problem.moments.sigma.clone())?;
        Ok(self.plain.get_or_init(|| ws))
    }

    fn costed_workspace(&self) -> Result<&QpWorkspace> {
        if let Some(ws) = self.costed.get() {
            return Ok(ws);
        }
        let ws = self
            .plain_workspace()?
            .with_added_diagonal(self.problem.cost.coefficients())?;
        Ok(self.costed.get_or_init(|| ws))
    }

    /// The convex loss of a strategy, without its sparsity penalty.
    fn program(&self, spec: &StrategySpec) -> Result<Program<'_>> {
        let p = self.problem.p();
        let linear = self.problem.linear_term(spec.gamma);
        let budget = self.problem.budget();
        let with_cost = spec.cost_aware();
        let (workspace, fixed_weights) = match (with_cost, self.problem.cost.kind()) {
            (true, CostKind::Quadratic) => (self.costed_workspace()?, DVector::zeros(p)),
            (true, CostKind::Proportional) => (
                self.plain_workspace()?,
                self.problem.cost.coefficients().clone(),
            ),
            (false, _) => (self.plain_workspace()?, DVector::zeros(p)),
        };
        Ok(Program {
            workspace,
            linear,
            budget,
            fixed_weights,
        })
    }

    /// Fits `spec`; `warm` is a previous fit at a nearby parameter value.
    pub fn fit(&self, spec: &StrategySpec, config: &SolverConfig, warm: Option<&Fit>) -> Result<Fit> {
        spec.validate()?;
        let p = self.problem.p();
        let w_plus = &self.problem.w_plus;
        let finish = |delta: DVector<f64>, lla: Option<LlaTrace>| {
            let weights = if self.problem.stage == 1 {
                delta.clone()
            } else {
                w_plus + &delta
            };
            Fit {
                weights,
                delta,
                lla,
            }
        };

        if spec.kind == StrategyKind::EqualWeight {
            let target = DVector::from_element(p, 1.0 / p as f64);
            let delta = if self.problem.stage == 1 {
                target
            } else {
                target - w_plus
            };
            return Ok(finish(delta, None));
        }

        let prog = self.program(spec)?;
        let warm_delta = warm.map(|f| &f.delta);
        let mut l1 = prog.fixed_weights.clone();
        if matches!(spec.kind, StrategyKind::Pmv | StrategyKind::CapeL | StrategyKind::CapeS) {
            l1.add_scalar_mut(spec.lambda_l1);
        }
        let first = prog
            .workspace
            .solve(&prog.linear, prog.budget, &l1, config, warm_delta)?;
        if spec.kind != StrategyKind::CapeS {
            return Ok(finish(first.weights, None));
        }

        let base = LlaBase {
            workspace: prog.workspace,
            linear: prog.linear,
            budget: prog.budget,
            fixed_weights: prog.fixed_weights,
        };
        let trace = lla_iterate(&base, &first.weights, &spec.scad, config, &self.lla_options)?;
        Ok(finish(trace.weights.clone(), Some(trace)))
    }

    /// Convex loss (cost included when the strategy is cost-aware) restricted
    /// to `support`, as used by the oracle estimator.
    pub fn oracle(&self, support: &[usize], spec: &StrategySpec, config: &SolverConfig) -> Result<OracleSolution> {
        let p = self.problem.p();
        let mut idx: Vec<usize> = support.to_vec();
        idx.sort_unstable();
        idx.dedup();
        if idx.is_empty() {
            return Err(Error::invalid("oracle support is empty"));
        }
        if let Some(&j) = idx.iter().find(|&&j| j >= p) {
            return Err(Error::invalid(format!("support index {j} out of range")));
        }
        let prog = self.program(spec)?;
        let k = idx.len();
        let q = DMatrix::from_fn(k, k, |a, b| prog.workspace.quad()[(idx[a], idx[b])]);
        let c = DVector::from_fn(k, |a, _| prog.linear[idx[a]]);
        let alpha = DVector::from_fn(k, |a, _| prog.fixed_weights[idx[a]]);

        let mut jitter = false;
        let solve = |q: &DMatrix<f64>, c: &DVector<f64>| solver::solve_bordered(q, c, prog.budget);
        let mut q_used = q.clone();
        let mut restricted = |c: &DVector<f64>, jitter: &mut bool| -> Result<DVector<f64>> {
            match solve(&q_used, c) {
                Ok((w, _)) => Ok(w),
                Err(Error::Singular(_)) if !*jitter => {
                    let m = (q_used.trace() / k as f64).abs().max(f64::MIN_POSITIVE);
                    for i in 0..k {
                        q_used[(i, i)] += 1e-10 * m;
                    }
                    *jitter = true;
                    log::debug!("oracle: ridge jitter {:.3e} applied to restricted matrix", 1e-10 * m);
                    solve(&q_used, c).map(|(w, _)| w)
                }
                Err(e) => Err(e),
            }
        };

        let mut used_fallback = false;
        let sub = if alpha.iter().all(|a| *a == 0.0) {
            restricted(&c, &mut jitter)?
        } else {
            // fixed-point iteration on the sign vector g of the ℓ1 cost
            let mut g = restricted(&c, &mut jitter)?.map(|v| if v < 0.0 { -1.0 } else { 1.0 });
            let mut found = None;
            for _ in 0..50 {
                let shifted = &c + alpha.component_mul(&g);
                let w = restricted(&shifted, &mut jitter)?;
                let consistent = w
                    .iter()
                    .zip(g.iter())
                    .all(|(v, s)| v.abs() >= config.zero_clip && v * s > 0.0);
                if consistent {
                    found = Some(w);
                    break;
                }
                let next = w.map(|v| if v < 0.0 { -1.0 } else { 1.0 });
                if next == g {
                    break;
                }
                g = next;
            }
            match found {
                Some(w) => w,
                None => {
                    used_fallback = true;
                    let ws = QpWorkspace::new(q_used.clone())?;
                    ws.solve(&c, prog.budget, &alpha, config, None)?.weights
                }
            }
        };
        let mut vector = DVector::zeros(p);
        for (a, &j) in idx.iter().enumerate() {
            vector[j] = sub[a];
        }
        Ok(OracleSolution {
            vector,
            used_fallback,
            jitter_applied: jitter,
        })
    }
}

/// Oracle estimate on a known support.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    /// Weights at stage 1, trade δ afterwards; zero off the support.
    pub vector: DVector<f64>,
    /// The sign iteration did not settle and the iterative solver was used.
    pub used_fallback: bool,
    pub jitter_applied: bool,
}

/// Stage-1 weights for `spec`.
pub fn construct_portfolio(
    problem: &RebalanceProblem,
    spec: &StrategySpec,
    config: &SolverConfig,
) -> Result<DVector<f64>> {
    if problem.stage != 1 {
        return Err(Error::invalid("construct_portfolio expects a stage-1 problem"));
    }
    Ok(StageSolver::new(problem).fit(spec, config, None)?.weights)
}

/// `(δ, w⁺ + δ)` for a rebalancing stage.
pub fn rebalance_portfolio(
    problem: &RebalanceProblem,
    spec: &StrategySpec,
    config: &SolverConfig,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if problem.stage < 2 {
        return Err(Error::invalid("rebalance_portfolio expects stage >= 2"));
    }
    let fit = StageSolver::new(problem).fit(spec, config, None)?;
    Ok((fit.delta, fit.weights))
}

/// Oracle estimator restricted to `support`.
pub fn oracle_solution(
    support: &[usize],
    problem: &RebalanceProblem,
    spec: &StrategySpec,
    config: &SolverConfig,
) -> Result<OracleSolution> {
    StageSolver::new(problem).oracle(support, spec, config)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneOptions {
    /// Subtract the stage cost on the first in-sample day.
    pub net_of_cost: bool,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self { net_of_cost: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TunePoint {
    pub lambda: f64,
    pub sharpe: std::result::Result<f64, String>,
}

#[derive(Debug, Clone)]
pub struct TuneResult {
    pub lambda: f64,
    pub fit: Fit,
    pub curve: Vec<TunePoint>,
    pub net_of_cost: bool,
}

/// Annualized Sharpe ratio of fixed `weights` over the rows of `window`,
/// optionally charging `cost` (fraction of wealth) on the first day.
pub fn in_sample_sharpe(window: &ReturnPanel, weights: &DVector<f64>, cost: f64) -> Result<f64> {
    let to_dec = window.unit().to_decimal();
    let mut daily: Vec<f64> = (window.returns() * weights)
        .iter()
        .map(|r| r * to_dec)
        .collect();
    if let Some(first) = daily.first_mut() {
        *first -= cost;
    }
    sharpe_ratio(&daily)
}

/// Picks λ from an increasing grid by the in-sample Sharpe ratio of the
/// fitted weights over the estimation window; ties go to the smaller λ.
pub fn tune_lambda(
    window: &ReturnPanel,
    problem: &RebalanceProblem,
    spec: &StrategySpec,
    grid: &[f64],
    config: &SolverConfig,
    options: &TuneOptions,
) -> Result<TuneResult> {
    tune_lambda_with(&StageSolver::new(problem), window, spec, grid, config, options)
}

/// [`tune_lambda`] against an existing [`StageSolver`].
pub fn tune_lambda_with(
    stage: &StageSolver<'_>,
    window: &ReturnPanel,
    spec: &StrategySpec,
    grid: &[f64],
    config: &SolverConfig,
    options: &TuneOptions,
) -> Result<TuneResult> {
    if grid.is_empty() {
        return Err(Error::invalid("lambda grid is empty"));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) || grid.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::invalid("lambda grid must be nonnegative and strictly increasing"));
    }
    if window.p() != stage.problem().p() {
        return Err(Error::invalid("window and problem disagree on the number of assets"));
    }
    let cost_model = &stage.problem().cost;
    let mut results: Vec<Option<(f64, Fit)>> = vec![None; grid.len()];
    let mut curve = vec![
        TunePoint {
            lambda: 0.0,
            sharpe: Err(String::new())
        };
        grid.len()
    ];
    // sweep from sparse to dense so each fit warm-starts the next
    let mut warm: Option<Fit> = None;
    for (i, &lambda) in grid.iter().enumerate().rev() {
        let outcome = stage
            .fit(&spec.with_lambda(lambda), config, warm.as_ref())
            .and_then(|fit| {
                let cost = if options.net_of_cost {
                    cost_model.charge(&fit.delta)
                } else {
                    0.0
                };
                let sr = in_sample_sharpe(window, &fit.weights, cost)?;
                Ok((sr, fit))
            });
        curve[i] = match outcome {
            Ok((sr, fit)) => {
                warm = Some(fit.clone());
                results[i] = Some((sr, fit));
                TunePoint {
                    lambda,
                    sharpe: Ok(sr),
                }
            }
            Err(e) => TunePoint {
                lambda,
                sharpe: Err(e.to_string()),
            },
        };
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in results.iter().enumerate() {
        if let Some((sr, _)) = r {
            if best.is_none_or(|(_, b)| *sr > b) {
                best = Some((i, *sr));
            }
        }
    }
    match best {
        Some((i, _)) => {
            let fit = results[i].take().map(|(_, f)| f).expect("best fit present");
            Ok(TuneResult {
                lambda: grid[i],
                fit,
                curve,
                net_of_cost: options.net_of_cost,
            })
        }
        None => Err(Error::Tuning(
            curve
                .into_iter()
                .map(|pt| (pt.lambda, pt.sharpe.err().unwrap_or_default()))
                .collect(),
        )),
    }
}
